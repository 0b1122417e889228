//! Weighted Lorentz-space calculus on piecewise-constant functions.
//!
//! Every function is read as constant on cells, so the distribution function
//! and the decreasing rearrangement are exact step functions obtained by
//! sorting cells by `|value|`. Lorentz integrals are then finite sums of
//! closed-form powers.

use thiserror::Error;

use crate::weights::{unit_ball_volume, GridFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LorentzError {
    #[error("Lorentz index requires 1 <= r <= inf and 1 <= sigma <= inf, got ({r}, {sigma})")]
    Index { r: f64, sigma: f64 },
    #[error("index relation violated: {0}")]
    Relation(String),
    #[error("rearrangement and distribution forms disagree: {via_rearrangement} vs {via_distribution}")]
    Reconciliation { via_rearrangement: f64, via_distribution: f64 },
    #[error("functions live on different grids")]
    GridMismatch,
    #[error("step function needs finite values and positive finite masses")]
    Step,
}

/// Lorentz index `(r, σ)`; `f64::INFINITY` stands for `∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzIndex {
    r: f64,
    sigma: f64,
}

impl LorentzIndex {
    pub fn new(r: f64, sigma: f64) -> Result<Self, LorentzError> {
        if !(r >= 1.0 && sigma >= 1.0) {
            return Err(LorentzError::Index { r, sigma });
        }
        Ok(Self { r, sigma })
    }

    /// `L^{r,∞}`, the weak space.
    pub fn weak(r: f64) -> Result<Self, LorentzError> {
        Self::new(r, f64::INFINITY)
    }

    /// `L^{r,r} = L^r`.
    pub fn strong(r: f64) -> Result<Self, LorentzError> {
        Self::new(r, r)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// A function given as `(value, weighted mass)` pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pieces: Vec<(f64, f64)>,
}

impl StepFunction {
    pub fn new(pieces: Vec<(f64, f64)>) -> Result<Self, LorentzError> {
        if pieces.iter().any(|&(v, m)| !v.is_finite() || !(m > 0.0 && m.is_finite())) {
            return Err(LorentzError::Step);
        }
        Ok(Self { pieces })
    }

    pub fn from_grid_function(f: &GridFunction) -> Self {
        let grid = f.grid();
        let pieces = f.values().iter().enumerate().map(|(i, &v)| (v, grid.measure(i))).collect();
        Self { pieces }
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn total_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.1).sum()
    }

    pub fn lebesgue_norm(&self, r: f64) -> f64 {
        if r.is_infinite() {
            return self.pieces.iter().fold(0.0, |m, p| m.max(p.0.abs()));
        }
        self.pieces.iter().map(|&(v, m)| v.abs().powf(r) * m).sum::<f64>().powf(1.0 / r)
    }
}

/// Distinct levels `v₁ > v₂ > … > 0` of `|f|` with cumulative masses
/// `S_k = w({|f| ≥ v_k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct RearrangementTable {
    levels: Vec<f64>,
    cumulative: Vec<f64>,
    total_mass: f64,
}

impl RearrangementTable {
    pub fn new(f: &StepFunction) -> Self {
        let mut pieces: Vec<(f64, f64)> = f
            .pieces
            .iter()
            .map(|&(v, m)| (v.abs(), m))
            .filter(|p| p.0 > 0.0)
            .collect();
        pieces.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut levels: Vec<f64> = Vec::new();
        let mut cumulative: Vec<f64> = Vec::new();
        let mut running = 0.0;
        for (v, m) in pieces {
            running += m;
            if levels.last() == Some(&v) {
                *cumulative.last_mut().expect("paired with levels") = running;
            } else {
                levels.push(v);
                cumulative.push(running);
            }
        }
        Self { levels, cumulative, total_mass: f.total_mass() }
    }

    pub fn from_grid_function(f: &GridFunction) -> Self {
        Self::new(&StepFunction::from_grid_function(f))
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn is_zero(&self) -> bool {
        self.levels.is_empty()
    }

    /// `μ_f(λ) = w({|f| > λ})`.
    pub fn distribution(&self, lambda: f64) -> f64 {
        // levels are descending: count those strictly above λ
        let k = self.levels.partition_point(|&v| v > lambda);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// `f*(s) = inf{λ : μ_f(λ) ≤ s}`.
    pub fn rearrangement(&self, s: f64) -> f64 {
        let k = self.cumulative.partition_point(|&m| m <= s);
        self.levels.get(k).copied().unwrap_or(0.0)
    }

    /// `f♯(x) = f*(cₙ|x|ⁿ)` in dimension `n`.
    pub fn spherical(&self, radius: f64, n: usize) -> f64 {
        self.rearrangement(unit_ball_volume(n) * radius.powi(n as i32))
    }

    /// Norm from `sup s^{1/r} f*(s)` or `(∫ (s^{1/r} f*(s))^σ ds/s)^{1/σ}`.
    pub fn norm_via_rearrangement(&self, idx: LorentzIndex) -> f64 {
        let (r, sigma) = (idx.r, idx.sigma);
        if self.is_zero() {
            return 0.0;
        }
        if r.is_infinite() {
            return if sigma.is_infinite() { self.levels[0] } else { f64::INFINITY };
        }
        if sigma.is_infinite() {
            return self
                .levels
                .iter()
                .zip(&self.cumulative)
                .fold(0.0, |m, (&v, &s)| m.max(v * s.powf(1.0 / r)));
        }
        let e = sigma / r;
        let mut prev = 0.0;
        let mut sum = 0.0;
        for (&v, &s) in self.levels.iter().zip(&self.cumulative) {
            let cur = s.powf(e);
            sum += v.powf(sigma) * (cur - prev);
            prev = cur;
        }
        (sum / e).powf(1.0 / sigma)
    }

    /// Norm from `sup λ μ_f(λ)^{1/r}` or `r^{1/σ}(∫ (λ μ_f(λ)^{1/r})^σ dλ/λ)^{1/σ}`.
    pub fn norm_via_distribution(&self, idx: LorentzIndex) -> f64 {
        let (r, sigma) = (idx.r, idx.sigma);
        if self.is_zero() {
            return 0.0;
        }
        if r.is_infinite() {
            return if sigma.is_infinite() { self.levels[0] } else { f64::INFINITY };
        }
        // on [v_{k+1}, v_k) the distribution function is constant
        let k_max = self.levels.len();
        let interval = |k: usize| {
            let hi = self.levels[k];
            let lo = if k + 1 < k_max { self.levels[k + 1] } else { 0.0 };
            (lo, hi, self.distribution(0.5 * (lo + hi)))
        };
        if sigma.is_infinite() {
            return (0..k_max).fold(0.0, |m, k| {
                let (_, hi, mu) = interval(k);
                m.max(hi * mu.powf(1.0 / r))
            });
        }
        let sum: f64 = (0..k_max)
            .map(|k| {
                let (lo, hi, mu) = interval(k);
                mu.powf(sigma / r) * (hi.powf(sigma) - lo.powf(sigma)) / sigma
            })
            .sum();
        r.powf(1.0 / sigma) * sum.powf(1.0 / sigma)
    }
}

pub fn distribution_fn(f: &GridFunction, lambda: f64) -> f64 {
    RearrangementTable::from_grid_function(f).distribution(lambda)
}

pub fn rearrangement(f: &GridFunction, s: f64) -> f64 {
    RearrangementTable::from_grid_function(f).rearrangement(s)
}

/// `‖f‖_{L^{r,σ}(w)}`; divergent norms come back as `f64::INFINITY`.
///
/// Both the rearrangement and the distribution forms are evaluated and must
/// agree to `1e-8` relative.
pub fn lorentz_norm(f: &GridFunction, idx: LorentzIndex) -> Result<f64, LorentzError> {
    lorentz_norm_step(&StepFunction::from_grid_function(f), idx)
}

pub fn lorentz_norm_step(f: &StepFunction, idx: LorentzIndex) -> Result<f64, LorentzError> {
    let table = RearrangementTable::new(f);
    let a = table.norm_via_rearrangement(idx);
    let b = table.norm_via_distribution(idx);
    if a.is_infinite() && b.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if (a - b).abs() > 1e-8 * a.abs().max(b.abs()) {
        return Err(LorentzError::Reconciliation { via_rearrangement: a, via_distribution: b });
    }
    Ok(a)
}

/// `‖f‖_{L^r(w)}` summed directly over cells (`r = ∞` gives the sup norm).
pub fn lebesgue_norm(f: &GridFunction, r: f64) -> f64 {
    StepFunction::from_grid_function(f).lebesgue_norm(r)
}

/// `‖f‖_{L^{r,∞}(w)}`.
pub fn weak_norm(f: &GridFunction, r: f64) -> Result<f64, LorentzError> {
    lorentz_norm(f, LorentzIndex::weak(r)?)
}

/// Constant `K` in `‖f‖_{r,σ₂} ≤ K ‖f‖_{r,σ₁}` for `σ₁ ≤ σ₂`.
pub fn embedding_constant(r: f64, sigma1: f64, sigma2: f64) -> f64 {
    let inv2 = if sigma2.is_infinite() { 0.0 } else { 1.0 / sigma2 };
    (sigma1 / r).powf(1.0 / sigma1 - inv2)
}

/// Exponents for the three inequality checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityParams {
    /// Space dimension used by `f♯`.
    pub dimension: usize,
    /// Exponent of the pointwise bound on `f♯`.
    pub r: f64,
    /// Constant of the pointwise bound; fitted from `‖f‖_{r,∞}` when absent.
    pub c1: Option<f64>,
    pub interp_r: f64,
    pub interp_r0: f64,
    pub interp_r1: f64,
    pub theta: f64,
    pub holder_r1: f64,
    pub holder_r2: f64,
}

impl InequalityParams {
    /// Checks centred on one exponent `r`: interpolation between `3r/4` and
    /// `3r/2`, and the Hölder pair `(r, r')`.
    pub fn around(r: f64, dimension: usize) -> Self {
        let r0 = (r * 0.75).max(1.0);
        let r1 = r * 1.5;
        let theta = (1.0 / r0 - 1.0 / r) / (1.0 / r0 - 1.0 / r1);
        let holder_r2 = if r > 1.0 { r / (r - 1.0) } else { f64::INFINITY };
        Self {
            dimension,
            r,
            c1: None,
            interp_r: r,
            interp_r0: r0,
            interp_r1: r1,
            theta,
            holder_r1: r,
            holder_r2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, margin: rhs - lhs }
    }

    /// `margin ≥ −1e−8·rhs`.
    pub fn holds(&self) -> bool {
        self.margin >= -1e-8 * self.rhs.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    /// `sup f♯(x)|x|^{n/r} ≤ C₁`.
    pub spherical: InequalityCheck,
    pub c1: f64,
    /// `‖f‖_{r,∞} ≤ ‖f‖_{r₀,∞}^{1−θ} ‖f‖_{r₁,∞}^θ`.
    pub interpolation: InequalityCheck,
    /// `‖fg‖₁ ≤ ‖f‖_{r₁,1} ‖g‖_{r₂,∞}`.
    pub holder: InequalityCheck,
}

impl InequalityReport {
    pub fn all_hold(&self) -> bool {
        self.spherical.holds() && self.interpolation.holds() && self.holder.holds()
    }
}

fn reciprocal(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

pub fn inequality_suite(
    f: &GridFunction,
    g: &GridFunction,
    params: &InequalityParams,
) -> Result<InequalityReport, LorentzError> {
    if !g.same_grid(f.grid()) {
        return Err(LorentzError::GridMismatch);
    }
    let interp_gap = reciprocal(params.interp_r)
        - ((1.0 - params.theta) * reciprocal(params.interp_r0) + params.theta * reciprocal(params.interp_r1));
    if !(0.0..=1.0).contains(&params.theta) || interp_gap.abs() > 1e-12 {
        return Err(LorentzError::Relation(format!(
            "1/r = (1-theta)/r0 + theta/r1 fails for r={}, r0={}, r1={}, theta={}",
            params.interp_r, params.interp_r0, params.interp_r1, params.theta
        )));
    }
    let holder_gap = reciprocal(params.holder_r1) + reciprocal(params.holder_r2) - 1.0;
    if holder_gap.abs() > 1e-12 {
        return Err(LorentzError::Relation(format!(
            "1/r1 + 1/r2 = 1 fails for r1={}, r2={}",
            params.holder_r1, params.holder_r2
        )));
    }

    let n = params.dimension;
    let table = RearrangementTable::from_grid_function(f);
    let weak = table.norm_via_rearrangement(LorentzIndex::weak(params.r)?);
    let c1 = params.c1.unwrap_or(unit_ball_volume(n).powf(-1.0 / params.r) * weak);
    // f♯(x)|x|^{n/r} peaks just below each radius where cₙ|x|ⁿ reaches S_k
    let cn = unit_ball_volume(n);
    let spherical_lhs = table
        .cumulative()
        .iter()
        .map(|&s| {
            let x = (s / cn).powf(1.0 / n as f64) * (1.0 - 1e-14);
            table.spherical(x, n) * x.powf(n as f64 / params.r)
        })
        .fold(0.0, f64::max);
    let spherical = InequalityCheck::new(spherical_lhs, c1);

    let interp_lhs = lorentz_norm(f, LorentzIndex::weak(params.interp_r)?)?;
    let n0 = lorentz_norm(f, LorentzIndex::weak(params.interp_r0)?)?;
    let n1 = lorentz_norm(f, LorentzIndex::weak(params.interp_r1)?)?;
    let interpolation = InequalityCheck::new(interp_lhs, n0.powf(1.0 - params.theta) * n1.powf(params.theta));

    let product = StepFunction::new(
        f.values()
            .iter()
            .zip(g.values())
            .enumerate()
            .map(|(i, (a, b))| (a * b, f.grid().measure(i)))
            .collect(),
    )?;
    let holder_lhs = product.lebesgue_norm(1.0);
    let holder_rhs = lorentz_norm(f, LorentzIndex::new(params.holder_r1, 1.0)?)?
        * lorentz_norm(g, LorentzIndex::weak(params.holder_r2)?)?;
    let holder = InequalityCheck::new(holder_lhs, holder_rhs);

    Ok(InequalityReport { spherical, c1, interpolation, holder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{make_grid, Sampling, WeightSpec};
    use std::sync::Arc;

    /// Indicator of `[-1, 1]` on a uniform grid with a cell edge exactly at 1.
    fn indicator_exact(a: f64) -> GridFunction {
        let grid = Arc::new(make_grid(WeightSpec::axis(a, 1).unwrap(), 64.0 / 16.5, 64, 1.0).unwrap());
        assert!((grid.edges()[17] - 1.0).abs() < 1e-14);
        GridFunction::from_fn(grid, |x| if x < 1.0 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn distribution_of_indicator() {
        let f = indicator_exact(0.5);
        assert!((distribution_fn(&f, 0.5) - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(distribution_fn(&f, 1.5), 0.0);
        let c = GridFunction::from_fn(f.grid().clone(), |_| 3.0).unwrap();
        assert!((distribution_fn(&c, 2.0) - f.grid().total_measure()).abs() < 1e-12);
    }

    #[test]
    fn rearrangement_of_inverse_sqrt() {
        let spec = WeightSpec::axis(0.0, 1).unwrap();
        let grid = Arc::new(make_grid(spec, 10.0, 512, 2.0).unwrap());
        let f = GridFunction::sample(grid.clone(), |x: f64| x.powf(-0.5), Sampling::OuterEdge).unwrap();
        // resolution near x = 1 is about 2·R/N
        assert!((rearrangement(&f, 2.0) - 1.0).abs() < 0.02);
        let weak = lorentz_norm(&f, LorentzIndex::weak(2.0).unwrap()).unwrap();
        assert!((weak - 2f64.sqrt()).abs() < 1e-14);
        let zero = GridFunction::zeros(grid);
        assert_eq!(rearrangement(&zero, 0.3), 0.0);
        assert_eq!(lorentz_norm(&zero, LorentzIndex::new(3.0, 1.5).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn two_level_rearrangement() {
        let f = indicator_exact(0.0);
        let mass = distribution_fn(&f, 0.0);
        assert_eq!(rearrangement(&f, 0.999 * mass), 1.0);
        assert_eq!(rearrangement(&f, mass), 0.0);
    }

    #[test]
    fn strong_norm_of_indicator() {
        let f = indicator_exact(0.0);
        let mass = distribution_fn(&f, 0.0);
        let n22 = lorentz_norm(&f, LorentzIndex::strong(2.0).unwrap()).unwrap();
        assert!((n22 - mass.sqrt()).abs() < 1e-14);
        // L^{r,1} of an indicator is r·w(E)^{1/r}
        let n21 = lorentz_norm(&f, LorentzIndex::new(2.0, 1.0).unwrap()).unwrap();
        assert!((n21 - 2.0 * mass.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn infinite_index_branches() {
        let f = indicator_exact(0.5).map(|v| -2.0 * v);
        assert_eq!(lorentz_norm(&f, LorentzIndex::new(f64::INFINITY, f64::INFINITY).unwrap()).unwrap(), 2.0);
        assert!(lorentz_norm(&f, LorentzIndex::new(f64::INFINITY, 2.0).unwrap()).unwrap().is_infinite());
        assert!(LorentzIndex::new(0.5, 2.0).is_err());
        assert!(LorentzIndex::new(2.0, 0.9).is_err());
    }

    #[test]
    fn holder_example() {
        let f = indicator_exact(0.0);
        let mass = distribution_fn(&f, 0.0);
        let params = InequalityParams {
            dimension: 1,
            r: 2.0,
            c1: None,
            interp_r: 2.0,
            interp_r0: 2.0,
            interp_r1: 4.0,
            theta: 0.0,
            holder_r1: 2.0,
            holder_r2: 2.0,
        };
        let report = inequality_suite(&f, &f, &params).unwrap();
        assert!((report.holder.lhs - mass).abs() < 1e-14);
        assert!((report.holder.rhs - 2.0 * mass).abs() < 1e-12);
        assert!(report.interpolation.margin.abs() < 1e-15);
        assert!(report.all_hold());
        let bad = InequalityParams { holder_r2: 3.0, ..params };
        assert!(matches!(inequality_suite(&f, &f, &bad), Err(LorentzError::Relation(_))));
        let bad = InequalityParams { theta: 0.5, ..params };
        assert!(matches!(inequality_suite(&f, &f, &bad), Err(LorentzError::Relation(_))));
    }

    #[test]
    fn around_params_are_consistent() {
        let spec = WeightSpec::axis(0.5, 1).unwrap();
        let grid = Arc::new(make_grid(spec, 20.0, 256, 2.0).unwrap());
        let f = GridFunction::from_fn(grid.clone(), |x: f64| 1.0 / (1.0 + x.abs())).unwrap();
        let g = GridFunction::from_fn(grid, |x: f64| (-x * x).exp()).unwrap();
        for r in [1.5, 2.0, 3.0] {
            let report = inequality_suite(&f, &g, &InequalityParams::around(r, 1)).unwrap();
            assert!(report.all_hold(), "{report:?}");
        }
    }
}
