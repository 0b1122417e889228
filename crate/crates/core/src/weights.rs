//! Power weights, their ball masses, and singularity-graded grids.
//!
//! Two weight classes are supported: the axis weight `|x₁|ᵃ` with `0 ≤ a < 1`
//! (condition A) and the radial weight `|x|ᵇ` with `0 ≤ b < n` (condition B).
//! Both are homogeneous of degree `α ∈ {a, b}`, so the weighted volume of a
//! ball centred at the origin scales like `r^{n+α}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use statrs::function::beta::beta;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::quadrature;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("axis weight |x1|^a requires 0 <= a < 1 (condition A), got a = {0}")]
    AxisExponent(f64),
    #[error("radial weight |x|^b requires 0 <= b < n (condition B), got b = {exponent} with n = {dimension}")]
    RadialExponent { exponent: f64, dimension: usize },
    #[error("dimension must be a positive integer, got {0}")]
    Dimension(usize),
    #[error("point has dimension {got}, weight expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightCase {
    /// `w(x) = |x₁|ᵃ`
    AxisPower,
    /// `w(x) = |x|ᵇ`
    RadialPower,
}

impl fmt::Display for WeightCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightCase::AxisPower => write!(f, "axis"),
            WeightCase::RadialPower => write!(f, "radial"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    case: WeightCase,
    exponent: f64,
    dimension: usize,
}

impl WeightSpec {
    pub fn new(case: WeightCase, exponent: f64, dimension: usize) -> Result<Self, WeightError> {
        if dimension == 0 {
            return Err(WeightError::Dimension(dimension));
        }
        let valid = exponent.is_finite()
            && exponent >= 0.0
            && match case {
                WeightCase::AxisPower => exponent < 1.0,
                WeightCase::RadialPower => exponent < dimension as f64,
            };
        if !valid {
            return Err(match case {
                WeightCase::AxisPower => WeightError::AxisExponent(exponent),
                WeightCase::RadialPower => WeightError::RadialExponent { exponent, dimension },
            });
        }
        Ok(Self { case, exponent, dimension })
    }

    pub fn axis(a: f64, n: usize) -> Result<Self, WeightError> {
        Self::new(WeightCase::AxisPower, a, n)
    }

    pub fn radial(b: f64, n: usize) -> Result<Self, WeightError> {
        Self::new(WeightCase::RadialPower, b, n)
    }

    pub fn case(&self) -> WeightCase {
        self.case
    }

    /// The exponent `α` (`a` in the axis case, `b` in the radial case).
    pub fn alpha(&self) -> f64 {
        self.exponent
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `n + α`, the scaling dimension of the weighted measure.
    pub fn homogeneous_dimension(&self) -> f64 {
        self.dimension as f64 + self.exponent
    }

    pub fn weight_at(&self, point: &[f64]) -> Result<f64, WeightError> {
        if point.len() != self.dimension {
            return Err(WeightError::DimensionMismatch { expected: self.dimension, got: point.len() });
        }
        let base = match self.case {
            WeightCase::AxisPower => point[0].abs(),
            WeightCase::RadialPower => point.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        Ok(pow_weight(base, self.exponent))
    }

    /// One-dimensional density of the reduced weight: `|x|ᵃ` along the axis,
    /// or `|S^{n-1}| r^{n-1+b}` along a ray.
    pub fn reduced_density(&self, x: f64) -> f64 {
        match self.case {
            WeightCase::AxisPower => pow_weight(x.abs(), self.exponent),
            WeightCase::RadialPower => {
                unit_sphere_area(self.dimension)
                    * pow_weight(x.abs(), self.dimension as f64 - 1.0 + self.exponent)
            }
        }
    }

    /// Antiderivative of [`Self::reduced_density`] vanishing at 0 (odd in `x`).
    pub fn reduced_antiderivative(&self, x: f64) -> f64 {
        let k = match self.case {
            WeightCase::AxisPower => self.exponent + 1.0,
            WeightCase::RadialPower => self.homogeneous_dimension(),
        };
        let prefactor = match self.case {
            WeightCase::AxisPower => 1.0,
            WeightCase::RadialPower => unit_sphere_area(self.dimension),
        };
        x.signum() * prefactor * x.abs().powf(k) / k
    }

    /// The scalar that the weight depends on: `|x₁|` or `|x|`.
    fn singular_distance(&self, point: &[f64]) -> f64 {
        match self.case {
            WeightCase::AxisPower => point[0].abs(),
            WeightCase::RadialPower => point.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

impl fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(alpha={}, n={})", self.case, self.exponent, self.dimension)
    }
}

/// `x^e` with the convention `0^0 = 1`.
fn pow_weight(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Volume of the unit ball in `R^n` (`ω₀ = 1`).
pub fn unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Surface area of the unit sphere `S^{n-1}` in `R^n`, equal to `n ωₙ`.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

/// Weighted volume `w(B(center, r))`.
///
/// Closed forms cover balls centred on the singular set and every
/// one-dimensional ball; an off-axis centre in the axis case is first moved
/// onto the axis (the weight ignores `x₂..xₙ`) and then integrated in one
/// variable. Off-centre radial balls in `n ≥ 2` use a shell integral.
pub fn ball_mass(spec: &WeightSpec, center: &[f64], r: f64) -> Result<f64, WeightError> {
    if center.len() != spec.dimension {
        return Err(WeightError::DimensionMismatch { expected: spec.dimension, got: center.len() });
    }
    let n = spec.dimension;
    let alpha = spec.exponent;
    let c = spec.singular_distance(center);
    if n == 1 {
        let antideriv = |y: f64| y.signum() * y.abs().powf(alpha + 1.0) / (alpha + 1.0);
        return Ok(antideriv(c + r) - antideriv(c - r));
    }
    if c == 0.0 {
        return Ok(match spec.case {
            WeightCase::AxisPower => {
                unit_ball_volume(n - 1) * beta((alpha + 1.0) / 2.0, (n as f64 + 1.0) / 2.0) * r.powf(n as f64 + alpha)
            }
            WeightCase::RadialPower => unit_sphere_area(n) / (n as f64 + alpha) * r.powf(n as f64 + alpha),
        });
    }
    const TOL: f64 = 1e-11;
    Ok(match spec.case {
        WeightCase::AxisPower => {
            // y₁ = c + r sinθ, slice volume ω_{n-1}(r cosθ)^{n-1}
            let integrand = |theta: f64| {
                pow_weight((c + r * theta.sin()).abs(), alpha) * theta.cos().powi(n as i32)
            };
            let mut breaks = Vec::new();
            if c < r {
                breaks.push((-c / r).asin());
            }
            unit_ball_volume(n - 1)
                * r.powi(n as i32)
                * quadrature::integrate_with_breaks(integrand, -PI / 2.0, PI / 2.0, &breaks, TOL)
        }
        WeightCase::RadialPower => {
            let rho = c;
            let full_area = unit_sphere_area(n);
            let equator_area = unit_sphere_area(n - 1);
            let cap = |s: f64| -> f64 {
                if s <= r - rho {
                    return full_area;
                }
                let cos0 = ((s * s + rho * rho - r * r) / (2.0 * s * rho)).clamp(-1.0, 1.0);
                let theta0 = cos0.acos();
                match n {
                    2 => equator_area * theta0,
                    3 => equator_area * (1.0 - cos0),
                    _ => {
                        equator_area
                            * quadrature::integrate(|phi: f64| phi.sin().powi(n as i32 - 2), 0.0, theta0, TOL)
                    }
                }
            };
            let integrand = |s: f64| pow_weight(s, alpha + n as f64 - 1.0) * cap(s);
            let lo = (rho - r).max(0.0);
            quadrature::integrate_with_breaks(integrand, lo, rho + r, &[(r - rho).abs()], TOL)
        }
    })
}

/// Which side of the two-branch upper envelope applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeBranch {
    /// `0 < r ≤ dist`: upper envelope `C' rⁿ distᵅ`.
    InsideDistance,
    /// `r ≥ dist`: upper envelope `C' r^{n+α}`.
    BeyondDistance,
}

impl fmt::Display for EnvelopeBranch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvelopeBranch::InsideDistance => write!(f, "r <= dist"),
            EnvelopeBranch::BeyondDistance => write!(f, "r >= dist"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallEnvelope {
    pub lower: f64,
    pub upper: f64,
    pub branch: EnvelopeBranch,
}

/// Prefactors `(C, C')` of the two-sided ball-mass envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallConstants {
    pub lower: f64,
    pub upper: f64,
}

impl Default for BallConstants {
    fn default() -> Self {
        Self { lower: 1.0, upper: 1.0 }
    }
}

pub fn ball_mass_bounds(
    spec: &WeightSpec,
    center: &[f64],
    r: f64,
    constants: BallConstants,
) -> Result<BallEnvelope, WeightError> {
    if center.len() != spec.dimension {
        return Err(WeightError::DimensionMismatch { expected: spec.dimension, got: center.len() });
    }
    let n = spec.dimension as f64;
    let alpha = spec.exponent;
    let dist = spec.singular_distance(center);
    let lower = constants.lower * r.powf(n + alpha);
    let (upper, branch) = if dist > 0.0 && r <= dist {
        (constants.upper * r.powf(n) * pow_weight(dist, alpha), EnvelopeBranch::InsideDistance)
    } else {
        (constants.upper * r.powf(n + alpha), EnvelopeBranch::BeyondDistance)
    };
    Ok(BallEnvelope { lower, upper, branch })
}

/// Tightest `(C, C')` over `samples` random balls (log-uniform radius in
/// `[1e-2, 1e1]`, log-uniform distance of the centre from the singular set
/// in `[1e-3, 1e1]` plus the centred ball).
pub fn fit_ball_constants<R: Rng>(spec: &WeightSpec, samples: usize, rng: &mut R) -> BallConstants {
    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    let n = spec.dimension;
    for k in 0..samples {
        let r = 10f64.powf(rng.random_range(-2.0..1.0));
        let mut center = vec![0.0; n];
        if k > 0 {
            let d = 10f64.powf(rng.random_range(-3.0..1.0));
            center[0] = d;
            if n > 1 {
                center[1] = rng.random_range(-2.0..2.0);
            }
        }
        let mass = ball_mass(spec, &center, r).expect("dimension matches by construction");
        let unit = ball_mass_bounds(spec, &center, r, BallConstants::default()).expect("dimension matches");
        lower = lower.min(mass / unit.lower);
        upper = upper.max(mass / unit.upper);
    }
    BallConstants { lower, upper }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    /// `[0, R]` carrying even functions on `[-R, R]` (axis case only).
    HalfLine,
    /// `[-R, R]` (axis case only).
    FullLine,
    /// `[0, R]` in the radial variable; cell masses include the sphere area.
    Radial,
}

/// Node-centred mesh with exact per-cell weighted measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: WeightSpec,
    kind: GridKind,
    radius: f64,
    nodes: Vec<f64>,
    edges: Vec<f64>,
    cell_mass: Vec<f64>,
}

/// Nodes at `R (k/N)^γ`, cells bounded by node midpoints, `N + 1` cells in total.
pub fn make_grid(spec: WeightSpec, radius: f64, cells: usize, grading: f64) -> Result<Grid, WeightError> {
    if cells < 16 {
        return Err(WeightError::Grid(format!("cell count must be at least 16, got {cells}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(WeightError::Grid(format!("radius must be positive, got {radius}")));
    }
    if !(grading.is_finite() && grading >= 1.0) {
        return Err(WeightError::Grid(format!("grading exponent must be >= 1, got {grading}")));
    }
    let nodes: Vec<f64> = (0..=cells)
        .map(|k| radius * (k as f64 / cells as f64).powf(grading))
        .collect();
    assert!(nodes.windows(2).all(|w| w[0] < w[1]), "node generation must be strictly increasing");
    let mut edges = Vec::with_capacity(cells + 2);
    edges.push(0.0);
    edges.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    edges.push(radius);
    let kind = match spec.case {
        WeightCase::AxisPower => GridKind::HalfLine,
        WeightCase::RadialPower => GridKind::Radial,
    };
    Grid::from_parts(spec, kind, radius, nodes, edges)
}

impl Grid {
    fn from_parts(
        spec: WeightSpec,
        kind: GridKind,
        radius: f64,
        nodes: Vec<f64>,
        edges: Vec<f64>,
    ) -> Result<Grid, WeightError> {
        if edges.len() != nodes.len() + 1 {
            return Err(WeightError::Grid("edge count must be node count + 1".into()));
        }
        let cell_mass: Vec<f64> = edges
            .windows(2)
            .map(|e| spec.reduced_antiderivative(e[1]) - spec.reduced_antiderivative(e[0]))
            .collect();
        if let Some(bad) = cell_mass.iter().position(|&m| !(m > 0.0)) {
            return Err(WeightError::Grid(format!("cell {bad} has non-positive mass")));
        }
        Ok(Grid { spec, kind, radius, nodes, edges, cell_mass })
    }

    /// The full-line mesh obtained by reflecting a half-line axis mesh.
    pub fn mirrored(&self) -> Result<Grid, WeightError> {
        if self.kind != GridKind::HalfLine {
            return Err(WeightError::Grid("only half-line axis grids can be mirrored".into()));
        }
        let mut nodes: Vec<f64> = self.nodes[1..].iter().rev().map(|x| -x).collect();
        nodes.extend_from_slice(&self.nodes);
        let mut edges: Vec<f64> = self.edges[1..].iter().rev().map(|x| -x).collect();
        edges.extend_from_slice(&self.edges[1..]);
        Grid::from_parts(self.spec, GridKind::FullLine, self.radius, nodes, edges)
    }

    pub fn spec(&self) -> &WeightSpec {
        &self.spec
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cell_mass(&self) -> &[f64] {
        &self.cell_mass
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weighted measure that cell `i` represents in the whole space: the
    /// half-line cell stands for itself and its mirror image.
    pub fn measure(&self, i: usize) -> f64 {
        self.symmetry_factor() * self.cell_mass[i]
    }

    pub fn symmetry_factor(&self) -> f64 {
        match self.kind {
            GridKind::HalfLine => 2.0,
            GridKind::FullLine | GridKind::Radial => 1.0,
        }
    }

    pub fn total_measure(&self) -> f64 {
        (0..self.len()).map(|i| self.measure(i)).sum()
    }

    /// Closed-form reduced measure of the covered interval (`[0,R]` or `[-R,R]`).
    pub fn closed_form_mass(&self) -> f64 {
        let hi = self.spec.reduced_antiderivative(self.radius);
        match self.kind {
            GridKind::FullLine => 2.0 * hi,
            _ => hi,
        }
    }

    /// Index of the node at the singular point `0`.
    pub fn origin_index(&self) -> usize {
        match self.kind {
            GridKind::FullLine => self.nodes.len() / 2,
            _ => 0,
        }
    }

    /// Distance of node `i` from the singular set.
    pub fn distance(&self, i: usize) -> f64 {
        self.nodes[i].abs()
    }

    /// Stable 64-bit FNV-1a fingerprint of the mesh and its weight.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&[self.spec.case as u8, self.kind as u8]);
        eat(&self.spec.exponent.to_bits().to_le_bytes());
        eat(&(self.spec.dimension as u64).to_le_bytes());
        eat(&self.radius.to_bits().to_le_bytes());
        for x in &self.nodes {
            eat(&x.to_bits().to_le_bytes());
        }
        h
    }
}

/// Where a profile is sampled when building a [`GridFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Node,
    /// The cell edge farthest from the singular set; gives the lower step
    /// approximant of a radially decreasing profile, and is finite for
    /// profiles that blow up at the origin.
    OuterEdge,
}

/// Nodal values on a shared grid, read as piecewise constant on cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, WeightError> {
        if values.len() != grid.len() {
            return Err(WeightError::Grid(format!(
                "function has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(WeightError::Grid(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `profile` at each node coordinate (signed on full-line grids).
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<Grid>, profile: F) -> Result<Self, WeightError> {
        Self::sample(grid, profile, Sampling::Node)
    }

    pub fn sample<F: Fn(f64) -> f64>(grid: Arc<Grid>, profile: F, how: Sampling) -> Result<Self, WeightError> {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.nodes[i];
                match how {
                    Sampling::Node => profile(x),
                    Sampling::OuterEdge => {
                        if x >= 0.0 {
                            profile(grid.edges[i + 1])
                        } else {
                            profile(grid.edges[i])
                        }
                    }
                }
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Grid) -> bool {
        std::ptr::eq(self.grid.as_ref(), other) || self.grid.fingerprint() == other.fingerprint()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ f w dx` over the represented domain.
    pub fn weighted_integral(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| v * self.grid.measure(i)).sum()
    }

    /// `∫_{dist ≤ radius} f w dx`, counting whole cells whose node lies inside.
    pub fn weighted_integral_within(&self, radius: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.distance(*i) <= radius)
            .map(|(i, v)| v * self.grid.measure(i))
            .sum()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn weight_values() {
        let a = WeightSpec::axis(0.5, 2).unwrap();
        assert_eq!(a.weight_at(&[4.0, 0.0]).unwrap(), 2.0);
        let flat = WeightSpec::axis(0.0, 3).unwrap();
        assert_eq!(flat.weight_at(&[0.0, 1.0, -2.0]).unwrap(), 1.0);
        let b = WeightSpec::radial(1.0, 2).unwrap();
        assert!((b.weight_at(&[3.0f64.sqrt(), 6.0f64.sqrt()]).unwrap() - 3.0).abs() < 1e-14);
        assert!(matches!(a.weight_at(&[1.0]), Err(WeightError::DimensionMismatch { .. })));
    }

    #[test]
    fn exponent_conditions() {
        assert!(matches!(WeightSpec::axis(1.2, 1), Err(WeightError::AxisExponent(_))));
        assert!(WeightSpec::axis(1.0, 1).is_err());
        assert!(WeightSpec::axis(-0.1, 1).is_err());
        assert!(WeightSpec::radial(1.5, 2).is_ok());
        assert!(WeightSpec::radial(2.0, 2).is_err());
        let msg = WeightSpec::axis(1.2, 1).unwrap_err().to_string();
        assert!(msg.contains("a < 1"), "{msg}");
    }

    #[test]
    fn ball_mass_closed_forms() {
        let a = WeightSpec::axis(0.5, 1).unwrap();
        assert!(rel(ball_mass(&a, &[0.0], 1.0).unwrap(), 4.0 / 3.0) < 1e-14);
        let b = WeightSpec::radial(1.0, 2).unwrap();
        assert!(rel(ball_mass(&b, &[0.0, 0.0], 1.0).unwrap(), 2.0 * PI / 3.0) < 1e-14);
        let flat = WeightSpec::axis(0.0, 1).unwrap();
        assert!(rel(ball_mass(&flat, &[3.7], 0.4).unwrap(), 0.8) < 1e-14);
    }

    #[test]
    fn ball_mass_off_centre_quadrature() {
        // flat weight: Lebesgue volume of a disc
        let flat = WeightSpec::radial(0.0, 2).unwrap();
        assert!(rel(ball_mass(&flat, &[1.0, 2.0], 0.7).unwrap(), PI * 0.49) < 1e-9);
        let flat3 = WeightSpec::axis(0.0, 3).unwrap();
        assert!(rel(ball_mass(&flat3, &[0.3, 1.0, 0.0], 2.0).unwrap(), 4.0 / 3.0 * PI * 8.0) < 1e-9);
        // axis weight, n = 2, centred ball matches the beta-function form
        let a2 = WeightSpec::axis(0.5, 2).unwrap();
        let centred = ball_mass(&a2, &[0.0, 0.0], 1.3).unwrap();
        let moved = ball_mass(&a2, &[1e-14, 0.0], 1.3).unwrap();
        assert!(rel(moved, centred) < 1e-8);
        // radial weight, n = 2, ball far from the origin ≈ |x|^b π r²
        let b = WeightSpec::radial(1.0, 2).unwrap();
        let far = ball_mass(&b, &[100.0, 0.0], 0.01).unwrap();
        assert!(rel(far, 100.0 * PI * 1e-4) < 1e-6);
        // radial weight, n = 3: containment of a centred ball
        let b3 = WeightSpec::radial(0.5, 3).unwrap();
        let tiny_shift = ball_mass(&b3, &[1e-13, 0.0, 0.0], 1.0).unwrap();
        assert!(rel(tiny_shift, ball_mass(&b3, &[0.0; 3], 1.0).unwrap()) < 1e-8);
    }

    #[test]
    fn axis_translation_invariance() {
        let a = WeightSpec::axis(0.5, 2).unwrap();
        let m1 = ball_mass(&a, &[0.4, 0.0], 1.0).unwrap();
        let m2 = ball_mass(&a, &[0.4, -7.0], 1.0).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn envelope_branches() {
        let a = WeightSpec::axis(0.5, 1).unwrap();
        let e = ball_mass_bounds(&a, &[0.0], 2.0, BallConstants::default()).unwrap();
        assert!(rel(e.lower, 2f64.powf(1.5)) < 1e-15);
        assert!(rel(e.upper, 2f64.powf(1.5)) < 1e-15);
        assert_eq!(e.branch, EnvelopeBranch::BeyondDistance);
        let b = WeightSpec::radial(1.0, 2).unwrap();
        let e = ball_mass_bounds(&b, &[3.0, 4.0], 1.0, BallConstants::default()).unwrap();
        assert!(rel(e.upper, 5.0) < 1e-15);
        assert_eq!(e.branch, EnvelopeBranch::InsideDistance);
    }

    #[test]
    fn fitted_envelope_orders_fresh_samples() {
        for spec in [
            WeightSpec::axis(0.5, 1).unwrap(),
            WeightSpec::axis(0.3, 2).unwrap(),
            WeightSpec::radial(1.0, 2).unwrap(),
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let fitted = fit_ball_constants(&spec, 100, &mut rng);
            assert!(fitted.lower > 0.0 && fitted.upper.is_finite());
            // the centred coefficient is the exact lower constant
            let exact_lower = ball_mass(&spec, &vec![0.0; spec.dimension()], 1.0).unwrap();
            assert!(rel(fitted.lower, exact_lower) < 1e-8);
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..100 {
                let r = 10f64.powf(rng.random_range(-2.0..1.0));
                let mut c = vec![0.0; spec.dimension()];
                c[0] = 10f64.powf(rng.random_range(-3.0..1.0));
                let m = ball_mass(&spec, &c, r).unwrap();
                let env = ball_mass_bounds(&spec, &c, r, fitted).unwrap();
                assert!(env.lower <= m * (1.0 + 1e-9), "{spec}: lower {} > {m}", env.lower);
                assert!(m <= env.upper * 1.05, "{spec}: {m} > upper {}", env.upper);
            }
        }
    }

    #[test]
    fn grid_nodes_and_mass() {
        let a = WeightSpec::axis(0.5, 1).unwrap();
        let g = make_grid(a, 1.0, 16, 1.0).unwrap();
        for (k, x) in g.nodes().iter().enumerate() {
            assert!((x - k as f64 / 16.0).abs() < 1e-15);
        }
        for gamma in [1.0, 2.0, 3.5] {
            let g = make_grid(a, 1.0, 64, gamma).unwrap();
            let total: f64 = g.cell_mass().iter().sum();
            assert!(rel(total, 2.0 / 3.0) < 1e-12);
            assert!(rel(g.total_measure(), 4.0 / 3.0) < 1e-12);
        }
        let b = WeightSpec::radial(1.0, 2).unwrap();
        let g = make_grid(b, 1.0, 256, 2.0).unwrap();
        assert!(rel(g.cell_mass().iter().sum(), 2.0 * PI / 3.0) < 1e-12);
        assert!(make_grid(a, 1.0, 8, 2.0).is_err());
        assert!(make_grid(a, 1.0, 32, 0.5).is_err());
    }

    #[test]
    fn graded_spacing_is_finer_near_origin() {
        let g = make_grid(WeightSpec::axis(0.5, 1).unwrap(), 10.0, 64, 2.0).unwrap();
        let h: Vec<f64> = g.nodes().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(h.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mirrored_grid_is_symmetric() {
        let g = make_grid(WeightSpec::axis(0.5, 1).unwrap(), 2.0, 32, 2.0).unwrap();
        let m = g.mirrored().unwrap();
        assert_eq!(m.len(), 2 * g.len() - 1);
        assert_eq!(m.nodes()[m.origin_index()], 0.0);
        assert!(rel(m.total_measure(), g.total_measure()) < 1e-13);
        assert!(rel(m.closed_form_mass(), m.cell_mass().iter().sum()) < 1e-12);
        let k = m.len() - 1;
        for i in 0..m.len() {
            assert_eq!(m.nodes()[i], -m.nodes()[k - i]);
            assert!(rel(m.cell_mass()[i], m.cell_mass()[k - i]) < 1e-12);
        }
    }

    #[test]
    fn scaling_law_and_monotonicity() {
        let specs = [WeightSpec::axis(0.5, 1).unwrap(), WeightSpec::axis(0.7, 3).unwrap(), WeightSpec::radial(1.5, 2).unwrap()];
        for spec in specs {
            let zero = vec![0.0; spec.dimension()];
            let base = ball_mass(&spec, &zero, 0.8).unwrap();
            for lambda in [0.1, 2.0, 13.0] {
                let scaled = ball_mass(&spec, &zero, 0.8 * lambda).unwrap();
                assert!(rel(scaled, lambda.powf(spec.homogeneous_dimension()) * base) < 1e-10);
            }
            let mut c = zero.clone();
            c[0] = 0.5;
            let mut prev = 0.0;
            for k in 1..20 {
                let m = ball_mass(&spec, &c, 0.1 * k as f64).unwrap();
                assert!(m > prev);
                prev = m;
            }
        }
    }
}
