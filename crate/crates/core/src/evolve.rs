//! Mild solutions of `∂ₜu − w⁻¹ div(w ∇u) = uᵖ` by Picard iteration on the
//! Duhamel formula `u(t) = S(t)u₀ + ∫₀ᵗ S(t−s) u(s)ᵖ ds`.
//!
//! The Duhamel integral is evaluated in the eigenbasis of the discrete
//! operator. Between two time nodes the nonlinearity is interpolated
//! linearly and integrated exactly against `e^{−λ(t−s)}`, which keeps the
//! rule accurate as `s → t` without grading the nodes.
//!
//! Long runs are split into windows. Each window restarts the Duhamel
//! formula from the solution at its left end and is short enough for the
//! Picard map to contract.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::kernel::{KernelError, Propagator};
use crate::lorentz::{lebesgue_norm, weak_norm, LorentzError};
use crate::regression::{fit_line, fit_log_log};
use crate::semigroup::{SemigroupError, SmoothingConstants};
use crate::weights::{GridFunction, GridKind, WeightCase, WeightError};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("initial data must be nonnegative (min {0:e})")]
    NegativeData(f64),
    #[error("smallness unmet: measured {measured:.6e} >= delta {delta:.6e}")]
    SmallnessUnmet { measured: f64, delta: f64 },
    #[error("global small-data theory needs p > p* = {p_star}, got p = {p}")]
    NotSupercritical { p: f64, p_star: f64 },
    #[error("invariant '{name}' violated: {detail}")]
    Invariant { name: &'static str, detail: String },
    #[error("function and propagator live on different grids")]
    GridMismatch,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub p: f64,
    pub horizon: f64,
    /// Time nodes per Duhamel window.
    pub duhamel_steps: usize,
    /// Picard stops when `sup |uₙ₊₁ − uₙ| ≤ picard_tol · max(1, sup u)`.
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Blow-up is declared once `sup u` exceeds `blowup_factor · ‖u₀‖_∞`.
    pub blowup_factor: f64,
    /// Exponents `q` whose strong and weak norms are recorded.
    pub qs: Vec<f64>,
    /// First positive ladder time; later ones double.
    pub ladder_start: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            horizon: 256.0,
            duhamel_steps: 64,
            picard_tol: 1e-10,
            max_picard: 200,
            blowup_factor: 1e6,
            qs: Vec::new(),
            ladder_start: 0.25,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.to_string()));
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad("p must exceed 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.duhamel_steps == 0 || self.max_picard == 0 {
            return bad("duhamel_steps and max_picard must be positive");
        }
        if !(self.picard_tol > 0.0 && self.blowup_factor > 1.0 && self.ladder_start > 0.0) {
            return bad("picard_tol, ladder_start must be positive and blowup_factor above 1");
        }
        if self.qs.iter().any(|q| !(*q >= 1.0)) {
            return bad("recorded exponents q must be >= 1");
        }
        Ok(())
    }

    /// `0, t₀, 2t₀, 4t₀, …` up to the horizon (included).
    pub fn ladder(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut t = self.ladder_start;
        while t < self.horizon * (1.0 - 1e-12) {
            out.push(t);
            t *= 2.0;
        }
        out.push(self.horizon);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Converged,
    /// Numerical blow-up proxy: first time `sup u` crossed the threshold.
    ThresholdExceeded { time: f64 },
    /// Picard failed to converge even on the shortest admissible window.
    IterationBudgetExhausted { time: f64 },
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::ThresholdExceeded { .. } => "threshold-exceeded",
            Outcome::IterationBudgetExhausted { .. } => "iteration-budget-exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRecord {
    pub t: f64,
    pub sup: f64,
    /// `‖u(t)‖_{L^q(w)}` per configured `q`.
    pub strong: Vec<f64>,
    /// `‖u(t)‖_{L^{q,∞}(w)}` per configured `q`.
    pub weak: Vec<f64>,
    /// `∫_{|x|≤√t} u(x,t) w(x) dx`.
    pub core_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub qs: Vec<f64>,
    pub records: Vec<NormRecord>,
    /// Nodal values at ladder times reached.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub outcome: Outcome,
    pub picard_iterations: usize,
    pub windows: usize,
    /// Per-iteration `sup |uₙ₊₁ − uₙ|` of the first window.
    pub picard_history: Vec<f64>,
    /// `min (uₙ₊₁ − uₙ) / max(1, sup u)` over all iterations.
    pub monotonicity_defect: f64,
    /// `min (u(t) − S(t)u₀) / max(1, sup u)` over recorded times.
    pub lower_bound_defect: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.records.last().map(|r| r.t).unwrap_or(0.0)
    }

    pub fn max_sup(&self) -> f64 {
        self.records.iter().map(|r| r.sup).fold(0.0, f64::max)
    }

    pub fn snapshot_near(&self, t: f64) -> Option<&(f64, Vec<f64>)> {
        self.snapshots.iter().min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
    }

    /// CSV with header `time,sup_norm,strong_q{q},weak_q{q}…`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,sup_norm");
        for q in &self.qs {
            out.push_str(&format!(",strong_q{q},weak_q{q}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{:.16e},{:.16e}", r.t, r.sup));
            for (s, w) in r.strong.iter().zip(&r.weak) {
                out.push_str(&format!(",{s:.16e},{w:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Exact weights of the exponential product-trapezoid rule on a step `h`.
struct StepWeights {
    decay: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl StepWeights {
    fn new(eigenvalues: &DVector<f64>, h: f64) -> Self {
        let n = eigenvalues.len();
        let (mut decay, mut left, mut right) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for &lam in eigenvalues.iter() {
            let x = lam * h;
            let e = (-x).exp();
            // i0 = ∫₀ʰ e^{−λσ} dσ, i1 = ∫₀ʰ e^{−λ(h−τ)} τ/h dτ
            let (i0, i1) = if x < 1e-2 {
                let x2 = x * x;
                (
                    h * (1.0 - x / 2.0 + x2 / 6.0 - x2 * x / 24.0 + x2 * x2 / 120.0),
                    h * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0),
                )
            } else {
                let i0 = -(-x).exp_m1() / lam;
                (i0, i0 - (1.0 - e * (1.0 + x)) / (lam * lam * h))
            };
            decay.push(e);
            left.push(i0 - i1);
            right.push(i1);
        }
        Self { decay, left, right }
    }
}

struct WindowSolve {
    /// Columns: nodal solution at each window node.
    values: DMatrix<f64>,
    iterations: usize,
    history: Vec<f64>,
    monotonicity_defect: f64,
    converged: bool,
}

/// Picard iteration on one window of uniformly spaced nodes starting from `start`.
fn solve_window(prop: &Propagator, start: &[f64], h: f64, steps: usize, p: f64, tol: f64, max_picard: usize) -> WindowSolve {
    let n = prop.len();
    let k = steps + 1;
    let lambda = prop.eigenvalues();
    let start_modal = prop.to_modal(&DMatrix::from_column_slice(n, 1, start));
    let mut linear = DMatrix::<f64>::zeros(n, k);
    for j in 0..k {
        let t = h * j as f64;
        for m in 0..n {
            linear[(m, j)] = (-t * lambda[m]).exp() * start_modal[(m, 0)];
        }
    }
    let weights = StepWeights::new(lambda, h);
    let mut u = prop.from_modal(&linear);
    let mut history = Vec::new();
    let mut defect: f64 = 0.0;
    for iter in 1..=max_picard {
        let g = u.map(|v| v.max(0.0).powf(p));
        let g_modal = prop.to_modal(&g);
        let mut total = linear.clone();
        let mut acc = vec![0.0; n];
        for j in 1..k {
            for m in 0..n {
                acc[m] = weights.decay[m] * acc[m] + weights.left[m] * g_modal[(m, j - 1)] + weights.right[m] * g_modal[(m, j)];
                total[(m, j)] += acc[m];
            }
        }
        let next = prop.from_modal(&total);
        let scale = next.amax().max(1.0);
        if !scale.is_finite() {
            return WindowSolve { values: next, iterations: iter, history, monotonicity_defect: defect, converged: false };
        }
        let diff = &next - &u;
        let change = diff.amax();
        defect = defect.min(diff.min() / scale);
        history.push(change);
        u = next;
        if change <= tol * scale {
            return WindowSolve { values: u, iterations: iter, history, monotonicity_defect: defect, converged: true };
        }
    }
    WindowSolve { values: u, iterations: max_picard, history, monotonicity_defect: defect, converged: false }
}

fn check_data(prop: &Propagator, u0: &GridFunction) -> Result<(), EvolveError> {
    if prop.grid().fingerprint() != u0.grid().fingerprint() {
        return Err(EvolveError::GridMismatch);
    }
    let spec = prop.grid().spec();
    if spec.case() == WeightCase::AxisPower && spec.dimension() != 1 {
        return Err(EvolveError::Unsupported(
            "axis-weight evolution is implemented for n = 1 (data depending on x1 alone are not integrable for n > 1)".into(),
        ));
    }
    if prop.grid().kind() == GridKind::FullLine {
        return Err(EvolveError::Unsupported("evolution runs on half-line or radial grids".into()));
    }
    let min = u0.values().iter().copied().fold(f64::INFINITY, f64::min);
    if min < 0.0 {
        return Err(EvolveError::NegativeData(min));
    }
    Ok(())
}

struct Recorder<'a> {
    prop: &'a Propagator,
    u0: &'a GridFunction,
    qs: Vec<f64>,
    records: Vec<NormRecord>,
    lower_bound_defect: f64,
}

impl<'a> Recorder<'a> {
    fn record(&mut self, t: f64, values: &[f64]) -> Result<f64, EvolveError> {
        let f = GridFunction::new(self.prop.grid().clone(), values.to_vec())?;
        let sup = f.sup_norm();
        let mut strong = Vec::with_capacity(self.qs.len());
        let mut weak = Vec::with_capacity(self.qs.len());
        for &q in &self.qs {
            strong.push(lebesgue_norm(&f, q));
            weak.push(if q.is_infinite() { sup } else { weak_norm(&f, q)? });
        }
        let core_mass = f.weighted_integral_within(t.sqrt());
        let linear = if t > 0.0 { self.prop.evolve(t, self.u0.values()) } else { self.u0.values().to_vec() };
        let gap = values.iter().zip(&linear).map(|(u, s)| u - s).fold(f64::INFINITY, f64::min);
        self.lower_bound_defect = self.lower_bound_defect.min(gap / sup.max(1.0));
        self.records.push(NormRecord { t, sup, strong, weak, core_mass });
        Ok(sup)
    }
}

/// Picard iteration over `[0, horizon]` as a single window of
/// `cfg.duhamel_steps` uniform steps.
pub fn picard_iterate(prop: &Propagator, u0: &GridFunction, cfg: &EvolveConfig, horizon: f64) -> Result<Trajectory, EvolveError> {
    cfg.validate()?;
    check_data(prop, u0)?;
    let steps = cfg.duhamel_steps;
    let h = horizon / steps as f64;
    let solve = solve_window(prop, u0.values(), h, steps, cfg.p, cfg.picard_tol, cfg.max_picard);
    let mut rec = Recorder { prop, u0, qs: cfg.qs.clone(), records: Vec::new(), lower_bound_defect: 0.0 };
    let threshold = cfg.blowup_factor * u0.sup_norm();
    let mut outcome = if solve.converged { Outcome::Converged } else { Outcome::IterationBudgetExhausted { time: 0.0 } };
    for j in 0..=steps {
        let t = h * j as f64;
        let col: Vec<f64> = solve.values.column(j).iter().copied().collect();
        let sup = rec.record(t, &col)?;
        if solve.converged && threshold > 0.0 && sup > threshold {
            outcome = Outcome::ThresholdExceeded { time: t };
            break;
        }
    }
    let last: Vec<f64> = solve.values.column(steps).iter().copied().collect();
    Ok(Trajectory {
        qs: cfg.qs.clone(),
        records: rec.records,
        snapshots: vec![(0.0, u0.values().to_vec()), (horizon, last)],
        outcome,
        picard_iterations: solve.iterations,
        windows: 1,
        picard_history: solve.history,
        monotonicity_defect: solve.monotonicity_defect,
        lower_bound_defect: rec.lower_bound_defect,
    })
}

/// Windowed continuation up to `cfg.horizon`, the blow-up threshold, or a
/// Picard failure. Windows never straddle ladder times and are at most
/// `1/(4p‖u‖^{p−1})` long.
pub fn evolve(prop: &Propagator, u0: &GridFunction, cfg: &EvolveConfig) -> Result<Trajectory, EvolveError> {
    cfg.validate()?;
    check_data(prop, u0)?;
    let ladder = cfg.ladder();
    let sup0 = u0.sup_norm();
    let threshold = cfg.blowup_factor * sup0;
    let mut rec = Recorder { prop, u0, qs: cfg.qs.clone(), records: Vec::new(), lower_bound_defect: 0.0 };
    rec.record(0.0, u0.values())?;
    let mut snapshots = vec![(0.0, u0.values().to_vec())];
    let mut t = 0.0;
    let mut u = u0.values().to_vec();
    let mut iterations = 0;
    let mut windows = 0;
    let mut history = Vec::new();
    let mut defect: f64 = 0.0;
    let mut outcome = Outcome::Converged;
    if sup0 == 0.0 {
        for &lt in &ladder[1..] {
            rec.record(lt, &u)?;
            snapshots.push((lt, u.clone()));
        }
        return Ok(Trajectory {
            qs: cfg.qs.clone(),
            records: rec.records,
            snapshots,
            outcome,
            picard_iterations: 1,
            windows: 0,
            picard_history: vec![0.0],
            monotonicity_defect: 0.0,
            lower_bound_defect: 0.0,
        });
    }
    'outer: while t < cfg.horizon * (1.0 - 1e-12) {
        let next_ladder = ladder.iter().copied().find(|&l| l > t * (1.0 + 1e-12) + 1e-300).unwrap_or(cfg.horizon);
        let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cap = 1.0 / (4.0 * cfg.p * sup.powf(cfg.p - 1.0));
        let mut len = (next_ladder - t).min(cap);
        let mut halvings = 0;
        let solve = loop {
            let h = len / cfg.duhamel_steps as f64;
            let s = solve_window(prop, &u, h, cfg.duhamel_steps, cfg.p, cfg.picard_tol, cfg.max_picard);
            iterations += s.iterations;
            if s.converged {
                break s;
            }
            halvings += 1;
            if halvings > 40 {
                outcome = Outcome::IterationBudgetExhausted { time: t };
                break 'outer;
            }
            len *= 0.5;
        };
        windows += 1;
        if history.is_empty() {
            history = solve.history.clone();
        }
        defect = defect.min(solve.monotonicity_defect);
        let h = len / cfg.duhamel_steps as f64;
        for j in 1..=cfg.duhamel_steps {
            let tj = if j == cfg.duhamel_steps { t + len } else { t + h * j as f64 };
            let col: Vec<f64> = solve.values.column(j).iter().copied().collect();
            let s = rec.record(tj, &col)?;
            if s > threshold {
                outcome = Outcome::ThresholdExceeded { time: tj };
                break 'outer;
            }
        }
        t += len;
        u = solve.values.column(cfg.duhamel_steps).iter().copied().collect();
        if (t - next_ladder).abs() <= 1e-12 * next_ladder {
            t = next_ladder;
            snapshots.push((t, u.clone()));
        }
    }
    Ok(Trajectory {
        qs: cfg.qs.clone(),
        records: rec.records,
        snapshots,
        outcome,
        picard_iterations: iterations,
        windows,
        picard_history: history,
        monotonicity_defect: defect,
        lower_bound_defect: rec.lower_bound_defect,
    })
}

/// Lie splitting oracle: backward Euler diffusion then the exact reaction
/// step `u ↦ u (1 − (p−1)τ u^{p−1})^{−1/(p−1)}`.
pub fn split_step(prop: &Propagator, u0: &GridFunction, p: f64, t: f64, steps: usize) -> Result<Vec<f64>, EvolveError> {
    let op = prop.operator();
    let tau = t / steps as f64;
    let factor = op.implicit_factor(tau);
    let mut u = u0.values().to_vec();
    for _ in 0..steps {
        op.backward_euler_step(&factor, &mut u);
        for v in u.iter_mut() {
            let base = 1.0 - (p - 1.0) * tau * v.max(0.0).powf(p - 1.0);
            if base <= 0.0 {
                return Err(EvolveError::Invariant { name: "split-step reaction", detail: "blew up".into() });
            }
            *v *= base.powf(-1.0 / (p - 1.0));
        }
    }
    Ok(u)
}

/// Local solution on the guaranteed existence interval.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    /// `T = 1/(C₁ 2ᵖ (c** ‖u₀‖_∞)^{p−1})`.
    pub existence_time: f64,
    pub bound: f64,
    pub max_sup: f64,
    pub trajectory: Trajectory,
}

pub fn local_existence_time(p: f64, sup0: f64, constants: &SmoothingConstants) -> f64 {
    1.0 / (constants.duhamel * 2f64.powf(p) * (constants.c_star_star * sup0).powf(p - 1.0))
}

/// Runs Picard on `[0, T]` and checks `sup u ≤ 2 c** ‖u₀‖_∞`.
pub fn solve_local(
    prop: &Propagator,
    u0: &GridFunction,
    cfg: &EvolveConfig,
    constants: &SmoothingConstants,
) -> Result<LocalSolution, EvolveError> {
    let sup0 = u0.sup_norm();
    let t = if sup0 == 0.0 { cfg.horizon } else { local_existence_time(cfg.p, sup0, constants) };
    let trajectory = picard_iterate(prop, u0, cfg, t)?;
    let bound = 2.0 * constants.c_star_star * sup0;
    let max_sup = trajectory.max_sup();
    if max_sup > bound * (1.0 + 1e-9) {
        return Err(EvolveError::Invariant {
            name: "local sup bound",
            detail: format!("sup u = {max_sup:.6e} exceeds 2 c** |u0|_inf = {bound:.6e}"),
        });
    }
    if trajectory.outcome != Outcome::Converged {
        return Err(EvolveError::Invariant { name: "local Picard convergence", detail: trajectory.outcome.label().into() });
    }
    Ok(LocalSolution { existence_time: t, bound, max_sup, trajectory })
}

/// `p*(α) = 1 + 2/(n+α)`.
pub fn fujita_exponent(homogeneous_dimension: f64) -> f64 {
    1.0 + 2.0 / homogeneous_dimension
}

/// `r* = (n+α)(p−1)/2`.
pub fn critical_lebesgue_exponent(homogeneous_dimension: f64, p: f64) -> f64 {
    homogeneous_dimension * (p - 1.0) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallData {
    /// Smallness of `‖u₀‖_{L^{r*,∞}(w)}`.
    WeakCritical,
    /// Smallness of `‖u₀‖_{L^r}^{r/r*} ‖u₀‖_∞^{1−r/r*}` with `1 ≤ r ≤ r*`,
    /// run after balancing the two norms by parabolic rescaling.
    Balanced { r: f64 },
}

/// `(1+t)^{e} ‖u(t)‖_{L^{q,∞}}` along a trajectory with `e = (n+α)/2 (1/r − 1/q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFunctional {
    pub q: f64,
    pub exponent: f64,
    pub sup: f64,
    /// Log-log slope over the last quarter of the recorded `log t` range.
    pub late_slope: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DecayFunctional {
    pub fn non_trending(&self, tol: f64) -> bool {
        self.sup.is_finite() && self.late_slope.abs() <= tol
    }
}

/// Indices of records with `t > 0` in the last quarter of the `log t` range.
pub fn last_quarter(times: &[f64]) -> Vec<usize> {
    let positive: Vec<usize> = (0..times.len()).filter(|&i| times[i] > 0.0).collect();
    if positive.is_empty() {
        return positive;
    }
    let lo = times[positive[0]].ln();
    let hi = times[*positive.last().expect("nonempty")].ln();
    let cut = hi - 0.25 * (hi - lo);
    positive.into_iter().filter(|&i| times[i].ln() >= cut).collect()
}

/// Late log-log slope of `ys` against `ts`.
pub fn late_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let idx = last_quarter(ts);
    let xs: Vec<f64> = idx.iter().map(|&i| ts[i]).collect();
    let vs: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    if vs.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    fit_log_log(&xs, &vs).map(|f| f.slope).unwrap_or(f64::NAN)
}

pub fn decay_functional(traj: &Trajectory, q: f64, r: f64, homogeneous_dimension: f64) -> Option<DecayFunctional> {
    let k = traj.qs.iter().position(|x| *x == q || (x.is_infinite() && q.is_infinite()))?;
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let exponent = homogeneous_dimension / 2.0 * (inv(r) - inv(q));
    let times = traj.times();
    let values: Vec<f64> = traj.records.iter().map(|rec| (1.0 + rec.t).powf(exponent) * rec.weak[k]).collect();
    let sup = values.iter().copied().fold(0.0, f64::max);
    let late = late_slope(&times, &values);
    Some(DecayFunctional { q, exponent, sup, late_slope: late, times, values })
}

#[derive(Debug, Clone)]
pub struct GlobalSolution {
    pub mode: SmallData,
    /// Measured smallness quantity compared against `delta`.
    pub smallness: f64,
    pub delta: f64,
    /// Balancing scale for [`SmallData::Balanced`].
    pub lambda: Option<f64>,
    /// Records in the original variables.
    pub trajectory: Trajectory,
    pub functionals: Vec<DecayFunctional>,
    /// Late log-log slope of `‖u(t)‖_∞`.
    pub sup_slope: f64,
}

impl GlobalSolution {
    /// Converged with every decay functional non-trending within `tol`.
    pub fn accepted(&self, tol: f64) -> bool {
        self.trajectory.outcome == Outcome::Converged && self.functionals.iter().all(|f| f.non_trending(tol))
    }
}

fn norm_pair(f: &GridFunction, r: f64) -> (f64, f64) {
    (lebesgue_norm(f, r), f.sup_norm())
}

/// Scale `λ` with `‖λ^β u₀(λ·)‖_{L^r} = ‖λ^β u₀(λ·)‖_∞` on the grid, by
/// bisection in `log λ`; `β = 2/(p−1)`.
pub fn balancing_scale(prop: &Propagator, profile: &dyn Fn(f64) -> f64, p: f64, r: f64) -> Result<f64, EvolveError> {
    let grid = prop.grid().clone();
    let beta = 2.0 / (p - 1.0);
    let gap = |log_lambda: f64| -> Result<f64, EvolveError> {
        let lambda = log_lambda.exp();
        let f = GridFunction::from_fn(grid.clone(), |x| lambda.powf(beta) * profile(lambda * x))?;
        let (lr, sup) = norm_pair(&f, r);
        Ok(lr.ln() - sup.ln())
    };
    // ‖u_λ‖_r / ‖u_λ‖_∞ = λ^{−(n+α)/r} ‖u₀‖_r / ‖u₀‖_∞ decreases in λ
    let (mut lo, mut hi) = (-20.0f64, 20.0f64);
    let (glo, ghi) = (gap(lo)?, gap(hi)?);
    if !(glo > 0.0 && ghi < 0.0) {
        return Err(EvolveError::Invariant {
            name: "norm balancing",
            detail: format!("no sign change of log(|u|_r/|u|_inf) on the search interval ({glo:.3}, {ghi:.3})"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Small-data global run with its decay functionals.
pub fn solve_global_small(
    prop: &Propagator,
    profile: &dyn Fn(f64) -> f64,
    mode: SmallData,
    delta: f64,
    cfg: &EvolveConfig,
) -> Result<GlobalSolution, EvolveError> {
    cfg.validate()?;
    let grid = prop.grid().clone();
    let nn = grid.spec().homogeneous_dimension();
    let p_star = fujita_exponent(nn);
    if cfg.p <= p_star {
        return Err(EvolveError::NotSupercritical { p: cfg.p, p_star });
    }
    let r_star = critical_lebesgue_exponent(nn, cfg.p);
    let u0 = GridFunction::from_fn(grid.clone(), profile)?;
    check_data(prop, &u0)?;
    let (smallness, r_ref) = match mode {
        SmallData::WeakCritical => (weak_norm(&u0, r_star)?, r_star),
        SmallData::Balanced { r } => {
            if !(r >= 1.0 && r <= r_star) {
                return Err(EvolveError::Config(format!("r must lie in [1, r*] = [1, {r_star}], got {r}")));
            }
            let (lr, sup) = norm_pair(&u0, r);
            (lr.powf(r / r_star) * sup.powf(1.0 - r / r_star), r)
        }
    };
    if !(smallness < delta) {
        return Err(EvolveError::SmallnessUnmet { measured: smallness, delta });
    }
    let mut run_cfg = cfg.clone();
    for q in [r_ref, 2.0 * r_ref, f64::INFINITY] {
        if !run_cfg.qs.contains(&q) {
            run_cfg.qs.push(q);
        }
    }
    let (trajectory, lambda) = match mode {
        SmallData::WeakCritical => (evolve(prop, &u0, &run_cfg)?, None),
        SmallData::Balanced { r } => {
            let lambda = balancing_scale(prop, profile, cfg.p, r)?;
            let beta = 2.0 / (cfg.p - 1.0);
            let scaled = GridFunction::from_fn(grid.clone(), |x| lambda.powf(beta) * profile(lambda * x))?;
            let mut scaled_cfg = run_cfg.clone();
            scaled_cfg.horizon = cfg.horizon / (lambda * lambda);
            scaled_cfg.ladder_start = cfg.ladder_start / (lambda * lambda);
            let mut traj = evolve(prop, &scaled, &scaled_cfg)?;
            unscale(&mut traj, lambda, beta, nn);
            (traj, Some(lambda))
        }
    };
    let functionals = [r_ref, 2.0 * r_ref, f64::INFINITY]
        .iter()
        .filter_map(|&q| decay_functional(&trajectory, q, r_ref, nn))
        .collect();
    let sup_slope = late_slope(&trajectory.times(), &trajectory.records.iter().map(|r| r.sup).collect::<Vec<_>>());
    Ok(GlobalSolution { mode, smallness, delta, lambda, trajectory, functionals, sup_slope })
}

/// Maps records of `u_λ(τ)` back to `u(t) = λ^{−β} u_λ(·/λ, t/λ²)`.
fn unscale(traj: &mut Trajectory, lambda: f64, beta: f64, nn: f64) {
    let qs = traj.qs.clone();
    for rec in traj.records.iter_mut() {
        rec.t *= lambda * lambda;
        rec.sup *= lambda.powf(-beta);
        for (k, q) in qs.iter().enumerate() {
            let e = -beta + if q.is_infinite() { 0.0 } else { nn / q };
            rec.strong[k] *= lambda.powf(e);
            rec.weak[k] *= lambda.powf(e);
        }
        rec.core_mass *= lambda.powf(-beta + nn);
    }
    for snap in traj.snapshots.iter_mut() {
        snap.0 *= lambda * lambda;
    }
    traj.outcome = match traj.outcome {
        Outcome::ThresholdExceeded { time } => Outcome::ThresholdExceeded { time: time * lambda * lambda },
        Outcome::IterationBudgetExhausted { time } => Outcome::IterationBudgetExhausted { time: time * lambda * lambda },
        Outcome::Converged => Outcome::Converged,
    }
}

/// Halves the data amplitude until a global run is accepted.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub amplitude: f64,
    pub attempts: usize,
    pub solution: GlobalSolution,
}

pub fn calibrate_global(
    prop: &Propagator,
    family: &dyn Fn(f64, f64) -> f64,
    initial_amplitude: f64,
    mode: SmallData,
    delta: f64,
    cfg: &EvolveConfig,
    max_halvings: usize,
) -> Result<Calibration, EvolveError> {
    let mut amplitude = initial_amplitude;
    let mut last_err = None;
    for attempt in 1..=max_halvings + 1 {
        let profile = |x: f64| family(amplitude, x);
        match solve_global_small(prop, &profile, mode, delta, cfg) {
            Ok(sol) if sol.accepted(0.05) => return Ok(Calibration { amplitude, attempts: attempt, solution: sol }),
            Ok(_) => {}
            Err(EvolveError::SmallnessUnmet { measured, delta }) => {
                last_err = Some(EvolveError::SmallnessUnmet { measured, delta })
            }
            Err(e) => return Err(e),
        }
        amplitude *= 0.5;
    }
    Err(last_err.unwrap_or(EvolveError::Invariant {
        name: "delta calibration",
        detail: format!("no accepted run after {max_halvings} halvings"),
    }))
}

/// `max_t ‖u₁(t) − u₂(t)‖_∞ / ‖u₀,₁ − u₀,₂‖_∞` over `[0, sigma]`.
pub fn stability_check(
    prop: &Propagator,
    u01: &GridFunction,
    u02: &GridFunction,
    sigma: f64,
    cfg: &EvolveConfig,
) -> Result<f64, EvolveError> {
    let gap0 = u01.values().iter().zip(u02.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap0 == 0.0 {
        return Ok(0.0);
    }
    let mut run = cfg.clone();
    run.qs.clear();
    let a = picard_path(prop, u01, &run, sigma)?;
    let b = picard_path(prop, u02, &run, sigma)?;
    let gap = (&a - &b).amax();
    Ok(gap / gap0)
}

fn picard_path(prop: &Propagator, u0: &GridFunction, cfg: &EvolveConfig, horizon: f64) -> Result<DMatrix<f64>, EvolveError> {
    check_data(prop, u0)?;
    let s = solve_window(prop, u0.values(), horizon / cfg.duhamel_steps as f64, cfg.duhamel_steps, cfg.p, cfg.picard_tol, cfg.max_picard);
    if !s.converged {
        return Err(EvolveError::Invariant { name: "Picard convergence", detail: format!("on [0, {horizon}]") });
    }
    Ok(s.values)
}

/// Slope of `y` against `log t` for `t > t_min`.
pub fn log_growth_slope(ts: &[f64], ys: &[f64], t_min: f64) -> Option<f64> {
    let (xs, vs): (Vec<f64>, Vec<f64>) = ts.iter().zip(ys).filter(|(t, _)| **t > t_min).map(|(t, y)| (t.ln(), *y)).unzip();
    fit_line(&xs, &vs).map(|f| f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{make_grid, WeightSpec};
    use std::sync::Arc;

    fn prop(radius: f64, cells: usize) -> Propagator {
        let grid = make_grid(WeightSpec::axis(0.5, 1).unwrap(), radius, cells, 2.0).unwrap();
        Propagator::new(Arc::new(grid)).unwrap()
    }

    #[test]
    fn product_rule_weights_match_integrals() {
        let lam = DVector::from_vec(vec![0.0, 1e-5, 0.3, 40.0]);
        let h = 0.1;
        let w = StepWeights::new(&lam, h);
        for (k, &l) in lam.iter().enumerate() {
            let i0 = crate::quadrature::integrate(|s: f64| (-l * s).exp(), 0.0, h, 1e-14);
            let i1 = crate::quadrature::integrate(|tau: f64| (-l * (h - tau)).exp() * tau / h, 0.0, h, 1e-14);
            assert!((w.left[k] + w.right[k] - i0).abs() < 1e-14);
            assert!((w.right[k] - i1).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let prop = prop(16.0, 32);
        let zero = GridFunction::zeros(prop.grid().clone());
        let traj = picard_iterate(&prop, &zero, &EvolveConfig::default(), 1.0).unwrap();
        assert_eq!(traj.picard_iterations, 1);
        assert_eq!(traj.outcome, Outcome::Converged);
        assert!(traj.records.iter().all(|r| r.sup == 0.0));
    }

    #[test]
    fn ladder_doubles() {
        let cfg = EvolveConfig { horizon: 4.0, ..Default::default() };
        assert_eq!(cfg.ladder(), vec![0.0, 0.25, 0.5, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn constant_data_follows_the_ode() {
        // zero-flux mesh: constants stay constant in space and solve u' = u²
        let prop = prop(8.0, 32);
        let u0 = GridFunction::from_fn(prop.grid().clone(), |_| 0.5).unwrap();
        let cfg = EvolveConfig { p: 2.0, duhamel_steps: 64, ..Default::default() };
        let traj = picard_iterate(&prop, &u0, &cfg, 1.0).unwrap();
        let exact = 0.5 / (1.0 - 0.5);
        assert!((traj.records.last().unwrap().sup - exact).abs() < 1e-4);
    }

    #[test]
    fn rejects_negative_data() {
        let prop = prop(8.0, 32);
        let u0 = GridFunction::from_fn(prop.grid().clone(), |x| x - 1.0).unwrap();
        assert!(matches!(evolve(&prop, &u0, &EvolveConfig::default()), Err(EvolveError::NegativeData(_))));
    }
}
