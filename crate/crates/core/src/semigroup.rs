//! The linear flow `S(t)φw = ∫ Γ(·, y, t) φ(y) w(y) dy` and its estimates.

use std::sync::Arc;

use thiserror::Error;

use crate::kernel::{KernelError, KernelTable, Propagator};
use crate::lorentz::{lebesgue_norm, weak_norm, LorentzError};
use crate::regression::fit_log_log;
use crate::weights::{Grid, GridFunction, WeightError};

#[derive(Debug, Error)]
pub enum SemigroupError {
    #[error("table and function live on different grids")]
    GridMismatch,
    #[error("weak-norm estimates need q > 1 (the constant blows up as q -> 1), got q = {0}")]
    WeakAtOne(f64),
    #[error("exponents must satisfy 1 <= q <= r <= inf, got q = {q}, r = {r}")]
    Exponents { q: f64, r: f64 },
    #[error("regression needs at least {needed} resolved times, got {got}")]
    TooFewTimes { needed: usize, got: usize },
    #[error("datum has zero norm")]
    ZeroDatum,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `L^q(w) → L^r(w)`.
    Strong,
    /// `L^{q,∞}(w) → L^{r,∞}(w)`.
    Weak,
}

/// How the datum changes along the regression times.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataScaling {
    /// The same `φ` at every time.
    Fixed,
    /// `φ(x/√t)` at time `t`, the family on which the smoothing estimate is
    /// sharp for every pair `(q, r)`.
    ParabolicRescaled,
}

pub fn norm_of(f: &GridFunction, r: f64, kind: NormKind) -> Result<f64, SemigroupError> {
    Ok(match kind {
        NormKind::Strong => lebesgue_norm(f, r),
        NormKind::Weak => weak_norm(f, r)?,
    })
}

/// `(S(t)φw)(xᵢ) = Σⱼ K[i][j] φ(xⱼ) mⱼ`.
pub fn apply_semigroup(table: &KernelTable, phi: &GridFunction) -> Result<GridFunction, SemigroupError> {
    if table.grid().fingerprint() != phi.grid().fingerprint() {
        return Err(SemigroupError::GridMismatch);
    }
    Ok(GridFunction::new(table.grid().clone(), table.apply(phi.values()))?)
}

/// `S(t)φw` through the exact semi-discrete flow.
pub fn evolve_linear(prop: &Propagator, t: f64, phi: &GridFunction) -> Result<GridFunction, SemigroupError> {
    if prop.grid().fingerprint() != phi.grid().fingerprint() {
        return Err(SemigroupError::GridMismatch);
    }
    Ok(GridFunction::new(prop.grid().clone(), prop.evolve(t, phi.values()))?)
}

/// Predicted exponent `−(n+α)/2·(1/q − 1/r)`.
pub fn smoothing_exponent(grid: &Grid, q: f64, r: f64) -> f64 {
    -grid.spec().homogeneous_dimension() / 2.0 * (inv(q) - inv(r))
}

fn inv(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

fn check_exponents(q: f64, r: f64, kind: NormKind) -> Result<(), SemigroupError> {
    if !(q >= 1.0 && r >= q) {
        return Err(SemigroupError::Exponents { q, r });
    }
    if kind == NormKind::Weak && q <= 1.0 {
        return Err(SemigroupError::WeakAtOne(q));
    }
    Ok(())
}

/// Regression of `‖S(t)φ_t w‖_r / ‖φ_t‖_q` against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub q: f64,
    pub r: f64,
    pub kind: NormKind,
    pub slope: f64,
    /// `log` of the fitted constant.
    pub intercept: f64,
    pub predicted: f64,
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl DecayFit {
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }

    /// `|slope − predicted|`, relative when the prediction is nonzero.
    pub fn error(&self) -> f64 {
        let d = (self.slope - self.predicted).abs();
        if self.predicted == 0.0 {
            d
        } else {
            d / self.predicted.abs()
        }
    }
}

/// Times at which the smoothing length `√t` spans at least four cells.
pub fn resolved_times(grid: &Grid, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .copied()
        .filter(|t| (0..grid.len()).filter(|&i| grid.distance(i) <= t.sqrt()).count() >= 4)
        .collect()
}

/// Fits the decay exponent of the `(q, r)` smoothing estimate for the
/// datum `profile` (evaluated at node coordinates).
pub fn decay_rates(
    prop: &Propagator,
    profile: &dyn Fn(f64) -> f64,
    times: &[f64],
    q: f64,
    r: f64,
    kind: NormKind,
    scaling: DataScaling,
) -> Result<DecayFit, SemigroupError> {
    check_exponents(q, r, kind)?;
    let grid = prop.grid().clone();
    let times = resolved_times(&grid, times);
    if times.len() < 3 {
        return Err(SemigroupError::TooFewTimes { needed: 3, got: times.len() });
    }
    let mut ratios = Vec::with_capacity(times.len());
    for &t in &times {
        let phi = match scaling {
            DataScaling::Fixed => GridFunction::from_fn(grid.clone(), profile)?,
            DataScaling::ParabolicRescaled => {
                let s = t.sqrt();
                GridFunction::from_fn(grid.clone(), |x| profile(x / s))?
            }
        };
        let input = norm_of(&phi, q, kind)?;
        if input == 0.0 {
            return Err(SemigroupError::ZeroDatum);
        }
        let out = evolve_linear(prop, t, &phi)?;
        ratios.push(norm_of(&out, r, kind)? / input);
    }
    let fit = fit_log_log(&times, &ratios).ok_or(SemigroupError::TooFewTimes { needed: 2, got: 0 })?;
    Ok(DecayFit {
        q,
        r,
        kind,
        slope: fit.slope,
        intercept: fit.intercept,
        predicted: smoothing_exponent(&grid, q, r),
        times,
        ratios,
    })
}

/// Empirical constant in `S(t)φw ≥ C t^{−(n+α)/2} ∫_{|y|≤√t} φw` on `|x| ≤ √t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatCoreLower {
    Constant { t: f64, constant: f64 },
    /// `φ` has no mass in the ball `|y| ≤ √t`.
    Vacuous { t: f64 },
}

impl HeatCoreLower {
    pub fn constant(&self) -> Option<f64> {
        match self {
            HeatCoreLower::Constant { constant, .. } => Some(*constant),
            HeatCoreLower::Vacuous { .. } => None,
        }
    }
}

pub fn heat_core_lower(prop: &Propagator, phi: &GridFunction, t: f64) -> Result<HeatCoreLower, SemigroupError> {
    let out = evolve_linear(prop, t, phi)?;
    Ok(heat_core_ratio(&out, phi, t))
}

/// Same bound from a precomputed kernel table.
pub fn heat_core_lower_table(table: &KernelTable, phi: &GridFunction) -> Result<HeatCoreLower, SemigroupError> {
    let out = apply_semigroup(table, phi)?;
    Ok(heat_core_ratio(&out, phi, table.time()))
}

fn heat_core_ratio(out: &GridFunction, phi: &GridFunction, t: f64) -> HeatCoreLower {
    let s = t.sqrt();
    let mass = phi.weighted_integral_within(s);
    if mass <= 0.0 {
        return HeatCoreLower::Vacuous { t };
    }
    let grid = out.grid();
    let scale = t.powf(-grid.spec().homogeneous_dimension() / 2.0) * mass;
    let min = (0..grid.len())
        .filter(|&i| grid.distance(i) <= s)
        .map(|i| out.values()[i])
        .fold(f64::INFINITY, f64::min);
    HeatCoreLower::Constant { t, constant: min / scale }
}

/// Empirical stand-ins for the smoothing constants.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingConstants {
    /// Strong `L^q → L^r` constant.
    pub c1: f64,
    /// Weak `L^{q,∞} → L^{r,∞}` constant.
    pub c2: f64,
    /// `max(c1, c2)`.
    pub c_star_star: f64,
    /// `sup ‖S(t)ψ‖_∞ / ‖ψ‖_∞`, the Duhamel constant for bounded data.
    pub duhamel: f64,
    /// `(r, C_r)` for the weak `L^{r,∞}` contraction.
    pub weak_contraction: Vec<(f64, f64)>,
}

/// Exponent pairs used by [`fit_smoothing_constants`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingPairs {
    pub strong: Vec<(f64, f64)>,
    pub weak: Vec<(f64, f64)>,
    pub contraction: Vec<f64>,
}

impl Default for SmoothingPairs {
    fn default() -> Self {
        let inf = f64::INFINITY;
        Self {
            strong: vec![(1.0, inf), (1.0, 2.0), (2.0, inf), (2.0, 2.0), (inf, inf)],
            weak: vec![(2.0, inf), (1.5, 3.0), (2.0, 4.0)],
            contraction: vec![1.5, 2.0, 4.0],
        }
    }
}

/// Largest observed ratios `t^{(n+α)/2(1/q−1/r)} ‖S(t)φ‖_r / ‖φ‖_q` over the
/// given data and times.
pub fn fit_smoothing_constants(
    prop: &Propagator,
    data: &[GridFunction],
    times: &[f64],
    pairs: &SmoothingPairs,
) -> Result<SmoothingConstants, SemigroupError> {
    let grid: Arc<Grid> = prop.grid().clone();
    let mut c1: f64 = 0.0;
    let mut c2: f64 = 0.0;
    let mut duhamel: f64 = 0.0;
    let mut contraction: Vec<(f64, f64)> = pairs.contraction.iter().map(|&r| (r, 0.0)).collect();
    for phi in data {
        for &t in times {
            let out = evolve_linear(prop, t, phi)?;
            for &(q, r) in &pairs.strong {
                check_exponents(q, r, NormKind::Strong)?;
                let input = norm_of(phi, q, NormKind::Strong)?;
                if input > 0.0 {
                    let scale = t.powf(-smoothing_exponent(&grid, q, r));
                    c1 = c1.max(scale * norm_of(&out, r, NormKind::Strong)? / input);
                }
            }
            for &(q, r) in &pairs.weak {
                check_exponents(q, r, NormKind::Weak)?;
                let input = norm_of(phi, q, NormKind::Weak)?;
                if input > 0.0 {
                    let scale = t.powf(-smoothing_exponent(&grid, q, r));
                    c2 = c2.max(scale * norm_of(&out, r, NormKind::Weak)? / input);
                }
            }
            let sup = phi.sup_norm();
            if sup > 0.0 {
                duhamel = duhamel.max(out.sup_norm() / sup);
            }
            for (r, c) in contraction.iter_mut() {
                let input = weak_norm(phi, *r)?;
                if input > 0.0 {
                    *c = c.max(weak_norm(&out, *r)? / input);
                }
            }
        }
    }
    // both ratios tend to 1 as t -> 0
    let c1 = c1.max(1.0);
    let duhamel = duhamel.max(1.0);
    Ok(SmoothingConstants { c1, c2, c_star_star: c1.max(c2), duhamel, weak_contraction: contraction })
}

/// Bound `2 (r/(r−1))^{1/r}` on the weak `L^{r,∞}` contraction constant.
pub fn weak_contraction_bound(r: f64) -> f64 {
    2.0 * (r / (r - 1.0)).powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel_with;
    use crate::kernel::TimeScheme;
    use crate::weights::{make_grid, WeightSpec};

    fn setup() -> Propagator {
        let grid = make_grid(WeightSpec::axis(0.5, 1).unwrap(), 24.0, 128, 2.0).unwrap();
        Propagator::new(Arc::new(grid)).unwrap()
    }

    #[test]
    fn constants_are_preserved() {
        let prop = setup();
        let one = GridFunction::from_fn(prop.grid().clone(), |_| 1.0).unwrap();
        let table = build_kernel_with(&prop, 2.0, TimeScheme::Exponential).unwrap();
        let out = apply_semigroup(&table, &one).unwrap();
        assert!(out.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let prop = setup();
        let other = Arc::new(make_grid(WeightSpec::axis(0.5, 1).unwrap(), 24.0, 64, 2.0).unwrap());
        let f = GridFunction::zeros(other);
        assert!(matches!(evolve_linear(&prop, 1.0, &f), Err(SemigroupError::GridMismatch)));
    }

    #[test]
    fn weak_q_one_rejected() {
        let prop = setup();
        let err = decay_rates(&prop, &|x: f64| (-x * x).exp(), &[1.0, 2.0, 4.0], 1.0, 2.0, NormKind::Weak, DataScaling::Fixed);
        assert!(matches!(err, Err(SemigroupError::WeakAtOne(_))));
    }

    #[test]
    fn bump_decay_exponent() {
        let prop = setup();
        let times: Vec<f64> = (0..6).map(|k| 0.5 * 2f64.powi(k)).collect();
        let bump = |x: f64| (-(x / 0.2) * (x / 0.2)).exp();
        let fit = decay_rates(&prop, &bump, &times, 1.0, f64::INFINITY, NormKind::Strong, DataScaling::Fixed).unwrap();
        assert!((fit.slope + 0.75).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn heat_core_vacuous_and_positive() {
        let prop = setup();
        let zero = GridFunction::zeros(prop.grid().clone());
        assert!(matches!(heat_core_lower(&prop, &zero, 1.0).unwrap(), HeatCoreLower::Vacuous { .. }));
        let ind = GridFunction::from_fn(prop.grid().clone(), |x: f64| if x.abs() <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert!(heat_core_lower(&prop, &ind, 1.0).unwrap().constant().unwrap() > 0.0);
    }
}
