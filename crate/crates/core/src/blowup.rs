//! Fujita threshold machinery: critical exponents, the Kaplan-type necessary
//! condition `t^{1/(p−1)} ‖S(t)u₀‖_∞ ≤ C*`, critical log growth, and the
//! blow-up/global classifier.

use std::fmt::Write as _;

use thiserror::Error;

use crate::evolve::{
    calibrate_global, critical_lebesgue_exponent, evolve, fujita_exponent, log_growth_slope, solve_global_small,
    EvolveConfig, EvolveError, Outcome, SmallData, Trajectory,
};
use crate::kernel::{Propagator, GAUSSIAN_REACH};
use crate::profile::Profile;
use crate::semigroup::{heat_core_lower, HeatCoreLower, SemigroupError};
use crate::weights::{GridFunction, WeightError, WeightSpec};

#[derive(Debug, Error)]
pub enum BlowupError {
    #[error("p must exceed 1, got {0}")]
    Exponent(f64),
    #[error("initial datum is identically zero")]
    ZeroDatum,
    #[error("wrong regime: {0}")]
    Regime(String),
    #[error("no resolvable times on this grid")]
    NoTimes,
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Semigroup(#[from] SemigroupError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// Relative tolerance for `p = p*`.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

/// Minimum truncation index of the `C*` log-sum.
pub const C_STAR_TERMS: usize = 60;

/// The truncation index grows until the tail bound drops below this.
pub const C_STAR_TAIL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalParameters {
    pub p_star: f64,
    pub r_star: f64,
    /// `r* > 1`, the range where the small-data theory applies.
    pub small_data_applicable: bool,
}

pub fn critical_parameters(spec: &WeightSpec, p: f64) -> Result<CriticalParameters, BlowupError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(BlowupError::Exponent(p));
    }
    let nn = spec.homogeneous_dimension();
    let r_star = critical_lebesgue_exponent(nn, p);
    Ok(CriticalParameters { p_star: fujita_exponent(nn), r_star, small_data_applicable: r_star > 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

pub fn regime(p: f64, p_star: f64) -> Regime {
    if (p - p_star).abs() <= CRITICAL_TOLERANCE * p_star {
        Regime::Critical
    } else if p < p_star {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    }
}

/// `log A_k = Σ_{j=1}^{k−1} p^{k−j−1} log((p−1)/(p^{j+1}−1))`; `A₁ = 1`.
pub fn log_a_k(p: f64, k: usize) -> f64 {
    (1..k).map(|j| p.powi((k - j - 1) as i32) * ((p - 1.0) / (p.powi(j as i32 + 1) - 1.0)).ln()).sum()
}

/// `A_k` as a plain product; underflows for moderate `k`.
pub fn a_k_direct(p: f64, k: usize) -> f64 {
    (1..k).map(|j| ((p - 1.0) / (p.powi(j as i32 + 1) - 1.0)).powf(p.powi((k - j - 1) as i32))).product()
}

/// `log A_k` for `k = 1..=k_max`.
pub fn log_a_table(p: f64, k_max: usize) -> Vec<f64> {
    (1..=k_max).map(|k| log_a_k(p, k)).collect()
}

/// `Σ_{m≥K} m x^m = x^K (K − (K−1)x) / (1−x)²` for `0 ≤ x < 1`.
fn weighted_geometric_tail(x: f64, k: usize) -> f64 {
    let kf = k as f64;
    x.powi(k as i32) * (kf - (kf - 1.0) * x) / ((1.0 - x) * (1.0 - x))
}

/// `Σ_{j=1}^{J} p^{−j−1} log((p^{j+1}−1)/(p−1))`.
pub fn log_sum_truncated(p: f64, terms: usize) -> f64 {
    (1..=terms).map(|j| p.powi(-(j as i32) - 1) * ((p.powi(j as i32 + 1) - 1.0) / (p - 1.0)).ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CStarEstimate {
    pub p: f64,
    pub terms: usize,
    /// Truncated log-sum.
    pub truncated: f64,
    /// Upper bound on the neglected terms, `(1+log p) Σ_{m>J+1} m p^{−m}`.
    pub tail: f64,
    /// `log C*` upper estimate, `truncated + tail`.
    pub log_c_star: f64,
    /// `(1+log p) Σ_{j≥2} j p^{−j}`.
    pub log_bound: f64,
}

impl CStarEstimate {
    pub fn c_star(&self) -> f64 {
        self.log_c_star.exp()
    }
}

pub fn c_star_estimate(p: f64) -> Result<CStarEstimate, BlowupError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(BlowupError::Exponent(p));
    }
    let x = 1.0 / p;
    let scale = 1.0 + p.ln();
    let mut terms = C_STAR_TERMS;
    while scale * weighted_geometric_tail(x, terms + 2) > C_STAR_TAIL && terms < 1_000_000 {
        terms += 1;
    }
    let truncated = log_sum_truncated(p, terms);
    let tail = scale * weighted_geometric_tail(x, terms + 2);
    Ok(CStarEstimate { p, terms, truncated, tail, log_c_star: truncated + tail, log_bound: scale * weighted_geometric_tail(x, 2) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KaplanSeries {
    pub p: f64,
    pub times: Vec<f64>,
    /// `t^{1/(p−1)} ‖S(t)u₀‖_∞`.
    pub values: Vec<f64>,
    /// `log A_k`, `k = 1..=30`.
    pub log_a: Vec<f64>,
    pub c_star: CStarEstimate,
    /// First time the series exceeds the `C*` estimate.
    pub crossing: Option<f64>,
}

impl KaplanSeries {
    pub fn stays_below(&self) -> bool {
        self.crossing.is_none()
    }
}

pub fn kaplan_bound_series(prop: &Propagator, u0: &GridFunction, p: f64, times: &[f64]) -> Result<KaplanSeries, BlowupError> {
    let c_star = c_star_estimate(p)?;
    if u0.sup_norm() == 0.0 {
        return Err(BlowupError::ZeroDatum);
    }
    let limit = c_star.c_star();
    let mut values = Vec::with_capacity(times.len());
    let mut crossing = None;
    for &t in times {
        let sup = prop.evolve(t, u0.values()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let v = t.powf(1.0 / (p - 1.0)) * sup;
        if crossing.is_none() && v > limit {
            crossing = Some(t);
        }
        values.push(v);
    }
    Ok(KaplanSeries { p, times: times.to_vec(), values, log_a: log_a_table(p, 30), c_star, crossing })
}

/// Times `t₀ 2^{k/4}` up to the largest `t` whose Gaussian reach fits the grid.
pub fn resolvable_times(prop: &Propagator, t0: f64) -> Vec<f64> {
    let t_max = (prop.grid().radius() / GAUSSIAN_REACH).powi(2);
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let t = t0 * 2f64.powf(k as f64 / 4.0);
        if t > t_max {
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscapeEvidence {
    /// `1/(p−1) − (n+α)/2`, positive exactly below `p*`.
    pub exponent: f64,
    pub series: KaplanSeries,
    /// Heat-core lower constants `C` with `S(t)u₀ ≥ C t^{−(n+α)/2} M` on `|x| ≤ √t`.
    pub core_constants: Vec<(f64, f64)>,
    pub crossing: Option<f64>,
}

pub fn subcritical_escape(prop: &Propagator, u0: &GridFunction, p: f64) -> Result<EscapeEvidence, BlowupError> {
    let params = critical_parameters(prop.grid().spec(), p)?;
    if regime(p, params.p_star) != Regime::Subcritical {
        return Err(BlowupError::Regime(format!("subcritical escape needs p < p* = {}, got {p}", params.p_star)));
    }
    let times = resolvable_times(prop, 0.25);
    if times.is_empty() {
        return Err(BlowupError::NoTimes);
    }
    let series = kaplan_bound_series(prop, u0, p, &times)?;
    let mut core_constants = Vec::new();
    for &t in times.iter().filter(|t| **t >= 1.0) {
        if let HeatCoreLower::Constant { t, constant } = heat_core_lower(prop, u0, t)? {
            core_constants.push((t, constant));
        }
    }
    let exponent = 1.0 / (p - 1.0) - prop.grid().spec().homogeneous_dimension() / 2.0;
    Ok(EscapeEvidence { exponent, crossing: series.crossing, series, core_constants })
}

#[derive(Debug, Clone)]
pub struct CriticalGrowth {
    /// `(t, I(t))` at ladder times `t > 3` reached before escape.
    pub samples: Vec<(f64, f64)>,
    /// Slope of `I(t)` against `log t`.
    pub slope: Option<f64>,
    pub trajectory: Trajectory,
}

/// `I(t) = ∫_{|x|≤√t} u(x,t) w dx` along the evolution at `p = p*`.
pub fn critical_log_growth(prop: &Propagator, u0: &GridFunction, cfg: &EvolveConfig) -> Result<CriticalGrowth, BlowupError> {
    let params = critical_parameters(prop.grid().spec(), cfg.p)?;
    if regime(cfg.p, params.p_star) != Regime::Critical {
        return Err(BlowupError::Regime(format!(
            "critical growth needs |p - p*| <= {CRITICAL_TOLERANCE:e} p*, got p = {}, p* = {}",
            cfg.p, params.p_star
        )));
    }
    if u0.sup_norm() == 0.0 {
        return Err(BlowupError::ZeroDatum);
    }
    let trajectory = evolve(prop, u0, cfg)?;
    let ladder = cfg.ladder();
    let samples: Vec<(f64, f64)> = trajectory
        .records
        .iter()
        .filter(|r| r.t > 3.0 && ladder.iter().any(|l| (l - r.t).abs() <= 1e-12 * l))
        .map(|r| (r.t, r.core_mass))
        .collect();
    let (ts, is): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    let slope = if samples.len() >= 2 { log_growth_slope(&ts, &is, 3.0) } else { None };
    Ok(CriticalGrowth { samples, slope, trajectory })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    /// Numerical escape: `sup u` crossed the blow-up threshold.
    BlowUp { escape_time: f64, kaplan_crossing: Option<f64>, log_slope: Option<f64> },
    /// Global run accepted; `decay_slope` is the late slope of `‖u(t)‖_∞`.
    GlobalCandidate { decay_slope: f64, delta: f64, functional_slopes: Vec<f64> },
    Inconclusive { reason: String },
}

impl CellOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            CellOutcome::BlowUp { .. } => "BlowUp",
            CellOutcome::GlobalCandidate { .. } => "GlobalCandidate",
            CellOutcome::Inconclusive { .. } => "Inconclusive",
        }
    }
}

/// Supercritical handling of the datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmallDataPolicy {
    /// Check smallness of the given datum against `delta` once.
    Fixed { delta: f64 },
    /// Halve the amplitude until a run is accepted.
    Calibrate { delta: f64, max_halvings: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyConfig {
    pub evolve: EvolveConfig,
    pub small_data: SmallDataPolicy,
    pub mode: SmallData,
}

/// Classifies one `(p, α)` cell. `prop` drives the `p ≤ p*` runs and
/// `global_prop` the supercritical one (typically a wider grid).
pub fn classify(
    prop: &Propagator,
    global_prop: &Propagator,
    u0: &Profile,
    cfg: &ClassifyConfig,
) -> Result<CellOutcome, BlowupError> {
    let p = cfg.evolve.p;
    let params = critical_parameters(prop.grid().spec(), p)?;
    let regime = regime(p, params.p_star);
    if regime == Regime::Supercritical {
        return Ok(classify_supercritical(global_prop, u0, cfg)?);
    }
    let data = GridFunction::from_fn(prop.grid().clone(), |x| u0.eval(x))?;
    if data.sup_norm() == 0.0 {
        return Ok(CellOutcome::Inconclusive { reason: "zero datum".into() });
    }
    let (trajectory, kaplan_crossing, log_slope) = match regime {
        Regime::Subcritical => {
            let escape = subcritical_escape(prop, &data, p)?;
            (evolve(prop, &data, &cfg.evolve)?, escape.crossing, None)
        }
        _ => {
            let growth = critical_log_growth(prop, &data, &cfg.evolve)?;
            (growth.trajectory, None, growth.slope)
        }
    };
    Ok(match trajectory.outcome {
        Outcome::ThresholdExceeded { time } => CellOutcome::BlowUp { escape_time: time, kaplan_crossing, log_slope },
        Outcome::Converged => CellOutcome::Inconclusive { reason: format!("no escape by t = {}", trajectory.final_time()) },
        Outcome::IterationBudgetExhausted { time } => {
            CellOutcome::Inconclusive { reason: format!("Picard budget exhausted at t = {time:.6e}") }
        }
    })
}

fn classify_supercritical(prop: &Propagator, u0: &Profile, cfg: &ClassifyConfig) -> Result<CellOutcome, EvolveError> {
    let accepted = |sol: &crate::evolve::GlobalSolution, delta: f64| CellOutcome::GlobalCandidate {
        decay_slope: sol.sup_slope,
        delta,
        functional_slopes: sol.functionals.iter().map(|f| f.late_slope).collect(),
    };
    let blown = |traj: &Trajectory| match traj.outcome {
        Outcome::ThresholdExceeded { time } => Some(CellOutcome::BlowUp { escape_time: time, kaplan_crossing: None, log_slope: None }),
        _ => None,
    };
    match cfg.small_data {
        SmallDataPolicy::Fixed { delta } => match solve_global_small(prop, &|x| u0.eval(x), cfg.mode, delta, &cfg.evolve) {
            Ok(sol) if sol.accepted(0.05) => Ok(accepted(&sol, u0.amplitude())),
            Ok(sol) => Ok(blown(&sol.trajectory).unwrap_or(CellOutcome::Inconclusive {
                reason: "decay functionals trend upward".into(),
            })),
            Err(EvolveError::SmallnessUnmet { measured, delta }) => Ok(CellOutcome::Inconclusive {
                reason: format!("smallness unmet: measured {measured:.6e} >= delta {delta:.6e}"),
            }),
            Err(e) => Err(e),
        },
        SmallDataPolicy::Calibrate { delta, max_halvings } => {
            let family = |a: f64, x: f64| a * u0.eval(x);
            match calibrate_global(prop, &family, 1.0, cfg.mode, delta, &cfg.evolve, max_halvings) {
                Ok(cal) => Ok(accepted(&cal.solution, cal.amplitude * u0.amplitude())),
                Err(EvolveError::SmallnessUnmet { measured, delta }) => Ok(CellOutcome::Inconclusive {
                    reason: format!("smallness unmet: measured {measured:.6e} >= delta {delta:.6e}"),
                }),
                Err(EvolveError::Invariant { name: "delta calibration", detail }) => {
                    Ok(CellOutcome::Inconclusive { reason: detail })
                }
                Err(e) => Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyCell {
    pub p: f64,
    pub alpha: f64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DichotomyReport {
    pub spec_case: String,
    pub dimension: usize,
    pub ps: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Row-major over `alphas × ps`.
    pub cells: Vec<DichotomyCell>,
}

pub const DICHOTOMY_FOOTER: &str =
    "Blow-up is certified for the tested data only; nonexistence of every positive global solution is not checked numerically. \
Escape times are threshold crossings of a numerical proxy.";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

impl DichotomyReport {
    pub fn p_star(&self, alpha: f64) -> f64 {
        fujita_exponent(self.dimension as f64 + alpha)
    }

    /// Header `p,alpha,p_star,outcome,escape_time,decay_slope,kaplan_crossing,log_slope,delta,reason`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,alpha,p_star,outcome,escape_time,decay_slope,kaplan_crossing,log_slope,delta,reason\n");
        for c in &self.cells {
            let (escape, decay, kaplan, log_slope, delta, reason) = match &c.outcome {
                CellOutcome::BlowUp { escape_time, kaplan_crossing, log_slope } => {
                    (Some(*escape_time), None, *kaplan_crossing, *log_slope, None, String::new())
                }
                CellOutcome::GlobalCandidate { decay_slope, delta, .. } => {
                    (None, Some(*decay_slope), None, None, Some(*delta), String::new())
                }
                CellOutcome::Inconclusive { reason } => (None, None, None, None, None, reason.replace([',', '\n'], ";")),
            };
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{},{},{},{},{},{},{}",
                c.p,
                c.alpha,
                self.p_star(c.alpha),
                c.outcome.label(),
                opt(escape),
                opt(decay),
                opt(kaplan),
                opt(log_slope),
                opt(delta),
                reason
            );
        }
        out
    }

    /// Phase diagram in the `(α, p)` plane with the curve `p*(α)`.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (640.0, 480.0, 60.0);
        let amin = self.alphas.iter().copied().fold(f64::INFINITY, f64::min);
        let amax = self.alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (a0, a1) = if amax > amin { (amin - 0.1 * (amax - amin), amax + 0.1 * (amax - amin)) } else { (amin - 0.5, amin + 0.5) };
        let a0 = a0.max(-(self.dimension as f64) + 1e-3);
        let curve: Vec<(f64, f64)> = (0..=100).map(|k| a0 + (a1 - a0) * k as f64 / 100.0).map(|a| (a, self.p_star(a))).collect();
        let pmin = self.ps.iter().copied().chain(curve.iter().map(|c| c.1)).fold(f64::INFINITY, f64::min);
        let pmax = self.ps.iter().copied().chain(curve.iter().map(|c| c.1)).fold(f64::NEG_INFINITY, f64::max);
        let (p0, p1) = (pmin - 0.1 * (pmax - pmin).max(0.1), pmax + 0.1 * (pmax - pmin).max(0.1));
        let sx = |a: f64| m + (a - a0) / (a1 - a0) * (w - 2.0 * m);
        let sy = |p: f64| h - m - (p - p0) / (p1 - p0) * (h - 2.0 * m);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{}" font-family="sans-serif" font-size="12">"#, h + 40.0);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
        let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">alpha ({}, n = {})</text>"#, w / 2.0, h - 20.0, self.spec_case, self.dimension);
        let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">p</text>"#, h / 2.0, h / 2.0);
        for k in 0..=4 {
            let a = a0 + (a1 - a0) * k as f64 / 4.0;
            let p = p0 + (p1 - p0) * k as f64 / 4.0;
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{a:.2}</text>"#, sx(a), h - m + 16.0);
            let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{p:.2}</text>"#, m - 6.0, sy(p) + 4.0);
        }
        let path: Vec<String> = curve.iter().map(|(a, p)| format!("{:.2},{:.2}", sx(*a), sy(*p))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="6,3"/>"#, path.join(" "));
        for c in &self.cells {
            let color = match c.outcome {
                CellOutcome::BlowUp { .. } => "#c0392b",
                CellOutcome::GlobalCandidate { .. } => "#2471a3",
                CellOutcome::Inconclusive { .. } => "#7f8c8d",
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="6" fill="{color}"><title>p={} alpha={} {}</title></circle>"#,
                sx(c.alpha),
                sy(c.p),
                c.p,
                c.alpha,
                c.outcome.label()
            );
        }
        let legend = [("#c0392b", "BlowUp (threshold proxy)"), ("#2471a3", "GlobalCandidate"), ("#7f8c8d", "Inconclusive")];
        for (k, (color, label)) in legend.iter().enumerate() {
            let y = m + 16.0 * k as f64;
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="5" fill="{color}"/><text x="{}" y="{}">{label}</text>"#, w - 200.0, y, w - 190.0, y + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}">dashed: p*(alpha) = 1 + 2/(n + alpha)</text>"#, w - 200.0, m + 48.0 + 4.0);
        let _ = writeln!(s, r#"<text x="10" y="{}" font-size="10">{}</text>"#, h + 25.0, DICHOTOMY_FOOTER.split(". ").next().unwrap_or(""));
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_parameters_examples() {
        let spec = WeightSpec::axis(0.0, 1).unwrap();
        assert_eq!(critical_parameters(&spec, 2.0).unwrap().p_star, 3.0);
        let spec = WeightSpec::axis(0.5, 1).unwrap();
        let c = critical_parameters(&spec, 2.5).unwrap();
        assert!((c.p_star - 7.0 / 3.0).abs() < 1e-15);
        assert!((c.r_star - 1.125).abs() < 1e-15);
        let c = critical_parameters(&spec, 1.0 + 2.0 / 1.5).unwrap();
        assert!((c.r_star - 1.0).abs() < 1e-15);
        assert!(!c.small_data_applicable);
        assert!(critical_parameters(&spec, 1.0).is_err());
    }

    #[test]
    fn regime_guard() {
        let ps = 7.0 / 3.0;
        assert_eq!(regime(ps, ps), Regime::Critical);
        assert_eq!(regime(ps * (1.0 + 1e-13), ps), Regime::Critical);
        assert_eq!(regime(ps * (1.0 + 1e-11), ps), Regime::Supercritical);
        assert_eq!(regime(2.0, ps), Regime::Subcritical);
    }

    #[test]
    fn small_a_k_by_hand() {
        assert!((log_a_k(2.0, 2).exp() - 1.0 / 3.0).abs() < 1e-15);
        assert!((log_a_k(2.0, 3).exp() - 1.0 / 63.0).abs() < 1e-15);
        assert_eq!(log_a_k(2.0, 1), 0.0);
    }

    #[test]
    fn c_star_bound_at_two() {
        let est = c_star_estimate(2.0).unwrap();
        assert!((est.log_bound - (1.0 + 2f64.ln()) * 1.5).abs() < 1e-12);
        assert!(est.tail < 1e-12);
        assert!(est.log_c_star <= est.log_bound);
    }

    #[test]
    fn csv_header_and_rows() {
        let report = DichotomyReport {
            spec_case: "axis".into(),
            dimension: 1,
            ps: vec![2.0],
            alphas: vec![0.5],
            cells: vec![DichotomyCell {
                p: 2.0,
                alpha: 0.5,
                outcome: CellOutcome::Inconclusive { reason: "a, b".into() },
            }],
        };
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("p,alpha,p_star,outcome"));
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 10);
        assert!(row.ends_with("a; b"));
        assert!(report.to_svg().contains("<polyline"));
    }
}
