//! Numerical fundamental solution of `∂ₜv = w⁻¹ div(w ∇v)`.
//!
//! The operator is discretized in conservative form on a [`Grid`]: the mass
//! matrix is the diagonal of exact cell masses and the stiffness matrix
//! carries the face conductance `ρ(face)/(x_{i+1} − x_i)`, where `ρ` is the
//! reduced weight density. Both ends of the mesh are zero-flux. The
//! semi-discrete flow is integrated either exactly in time through the
//! spectral decomposition of `M^{-1/2} L M^{-1/2}` or by backward Euler.
//!
//! A half-line table stores the folded kernel `Γ(x, y) + Γ(x, −y)` and a
//! radial table stores the spherically averaged kernel.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::lorentz::{lebesgue_norm, lorentz_norm, LorentzError, LorentzIndex};
use crate::regression::fit_log_log;
use crate::weights::{ball_mass, GridFunction, GridKind, Grid, WeightCase, WeightError, WeightSpec};

/// Entries in `[-NEGATIVE_TOLERANCE, 0)` are rounding noise and clamped to 0.
pub const NEGATIVE_TOLERANCE: f64 = 1e-10;

/// `erfc(z/2) < 1e-6` for `z ≥ GAUSSIAN_REACH`: a kernel row centred at `x`
/// loses less than `1e-6` of its mass outside `[x − z√t, x + z√t]`.
pub const GAUSSIAN_REACH: f64 = 6.92;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("time must be positive and finite, got {0}")]
    Time(f64),
    #[error("verification needs at least 4 geometrically spaced times, got {0:?}")]
    Times(Vec<f64>),
    #[error("kernel entry ({row}, {col}) = {value:e} is negative beyond rounding")]
    Negative { row: usize, col: usize, value: f64 },
    #[error("eigendecomposition produced non-finite values")]
    Eigen,
    #[error("table and function live on different grids")]
    GridMismatch,
    #[error("{which}: no constants reach {target:.0}% coverage (best {best:.2}%)")]
    Fit { which: &'static str, target: f64, best: f64 },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
}

/// Mass matrix and symmetric tridiagonal stiffness of the conservative scheme.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    grid: Arc<Grid>,
    mass: Vec<f64>,
    conductance: Vec<f64>,
}

impl DiffusionOperator {
    pub fn new(grid: Arc<Grid>) -> Self {
        let spec = *grid.spec();
        let nodes = grid.nodes();
        let edges = grid.edges();
        let conductance = (0..nodes.len() - 1)
            .map(|k| spec.reduced_density(edges[k + 1]) / (nodes[k + 1] - nodes[k]))
            .collect();
        let mass = grid.cell_mass().to_vec();
        Self { grid, mass, conductance }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Conductance of the face between nodes `k` and `k + 1`.
    pub fn conductance(&self) -> &[f64] {
        &self.conductance
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// `L u`, the discrete `−div(w ∇u)` integrated over cells.
    pub fn stiffness_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (k, c) in self.conductance.iter().enumerate() {
            let flux = c * (u[k + 1] - u[k]);
            out[k] -= flux;
            out[k + 1] += flux;
        }
        out
    }

    /// LU factors of `M + τL` for repeated backward Euler solves.
    pub fn implicit_factor(&self, tau: f64) -> TridiagonalFactor {
        let n = self.len();
        let mut diag = self.mass.clone();
        let mut off = vec![0.0; n - 1];
        for (k, c) in self.conductance.iter().enumerate() {
            diag[k] += tau * c;
            diag[k + 1] += tau * c;
            off[k] = -tau * c;
        }
        TridiagonalFactor::new(&diag, &off)
    }

    /// One backward Euler step `(M + τL) u⁺ = M u`.
    pub fn backward_euler_step(&self, factor: &TridiagonalFactor, u: &mut [f64]) {
        for (v, m) in u.iter_mut().zip(&self.mass) {
            *v *= m;
        }
        factor.solve_in_place(u);
    }
}

/// Thomas factorization of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalFactor {
    off: Vec<f64>,
    pivots: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(diag: &[f64], off: &[f64]) -> Self {
        let mut pivots = Vec::with_capacity(diag.len());
        pivots.push(diag[0]);
        for k in 1..diag.len() {
            let prev = pivots[k - 1];
            pivots.push(diag[k] - off[k - 1] * off[k - 1] / prev);
        }
        Self { off: off.to_vec(), pivots }
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        for k in 1..n {
            b[k] -= self.off[k - 1] / self.pivots[k - 1] * b[k - 1];
        }
        b[n - 1] /= self.pivots[n - 1];
        for k in (0..n - 1).rev() {
            b[k] = (b[k] - self.off[k] * b[k + 1]) / self.pivots[k];
        }
    }
}

/// Exact-in-time flow of the semi-discrete operator.
#[derive(Debug, Clone)]
pub struct Propagator {
    operator: DiffusionOperator,
    eigenvalues: DVector<f64>,
    /// Columns `M^{-1/2} q_k`.
    synthesis: DMatrix<f64>,
    /// Rows `q_kᵀ M^{1/2}`.
    analysis: DMatrix<f64>,
}

impl Propagator {
    pub fn new(grid: Arc<Grid>) -> Result<Self, KernelError> {
        let operator = DiffusionOperator::new(grid);
        let n = operator.len();
        let inv_sqrt: Vec<f64> = operator.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut b = DMatrix::<f64>::zeros(n, n);
        for (k, c) in operator.conductance.iter().enumerate() {
            let s = c * inv_sqrt[k] * inv_sqrt[k + 1];
            b[(k, k)] += c * inv_sqrt[k] * inv_sqrt[k];
            b[(k + 1, k + 1)] += c * inv_sqrt[k + 1] * inv_sqrt[k + 1];
            b[(k, k + 1)] = -s;
            b[(k + 1, k)] = -s;
        }
        let eig = SymmetricEigen::new(b);
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::Eigen);
        }
        let eigenvalues = eig.eigenvalues.map(|v| v.max(0.0));
        let q = eig.eigenvectors;
        let mut synthesis = q.clone();
        for (i, s) in inv_sqrt.iter().enumerate() {
            synthesis.row_mut(i).scale_mut(*s);
        }
        let mut analysis = q.transpose();
        for (i, m) in operator.mass.iter().enumerate() {
            analysis.column_mut(i).scale_mut(m.sqrt());
        }
        Ok(Self { operator, eigenvalues, synthesis, analysis })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.operator.grid()
    }

    pub fn operator(&self) -> &DiffusionOperator {
        &self.operator
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.operator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operator.is_empty()
    }

    /// Modal coefficients of nodal vectors given as columns.
    pub fn to_modal(&self, nodal: &DMatrix<f64>) -> DMatrix<f64> {
        &self.analysis * nodal
    }

    /// Nodal values of modal coefficients given as columns.
    pub fn from_modal(&self, modal: &DMatrix<f64>) -> DMatrix<f64> {
        &self.synthesis * modal
    }

    /// `e^{-t M^{-1}L} u`.
    pub fn evolve(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let mut c = &self.analysis * DVector::from_column_slice(u);
        for (ck, lam) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ck *= (-t * lam).exp();
        }
        (&self.synthesis * c).as_slice().to_vec()
    }

    /// `K(t) = M^{-1/2} Q e^{-tΛ} Qᵀ M^{-1/2}`, symmetric by construction.
    pub fn table(&self, t: f64) -> Result<KernelTable, KernelError> {
        check_time(t)?;
        let mut a = self.synthesis.clone();
        for (k, lam) in self.eigenvalues.iter().enumerate() {
            a.column_mut(k).scale_mut((-0.5 * t * lam).exp());
        }
        let values = &a * a.transpose();
        KernelTable::from_matrix(self.grid().clone(), t, 0, values)
    }
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Time(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    /// Exact integration of the semi-discrete system.
    Exponential,
    /// `steps` backward Euler steps of size `t/steps`.
    BackwardEuler { steps: usize },
}

impl TimeScheme {
    fn steps_tag(&self) -> usize {
        match self {
            TimeScheme::Exponential => 0,
            TimeScheme::BackwardEuler { steps } => *steps,
        }
    }
}

/// `K[i][j] ≈ Γ(xᵢ, xⱼ, t)` on one grid at one time.
#[derive(Debug, Clone)]
pub struct KernelTable {
    grid: Arc<Grid>,
    time: f64,
    steps: usize,
    values: DMatrix<f64>,
}

impl KernelTable {
    fn from_matrix(grid: Arc<Grid>, time: f64, steps: usize, mut values: DMatrix<f64>) -> Result<Self, KernelError> {
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                let v = values[(i, j)];
                if v < 0.0 {
                    if v < -NEGATIVE_TOLERANCE * scale {
                        return Err(KernelError::Negative { row: i, col: j, value: v });
                    }
                    values[(i, j)] = 0.0;
                }
            }
        }
        Ok(Self { grid, time, steps, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Backward Euler step count, 0 for the exponential scheme.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// `Σⱼ K[i][j] φⱼ mⱼ` with the grid's cell masses.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let m = self.grid.cell_mass();
        let weighted = DVector::from_iterator(phi.len(), phi.iter().zip(m).map(|(f, m)| f * m));
        (&self.values * weighted).as_slice().to_vec()
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        self.values.row(i).iter().zip(self.grid.cell_mass()).map(|(k, m)| k * m).sum()
    }

    /// Rows far enough from the truncation radius that the Gaussian tail
    /// beyond it is below `1e-6`.
    pub fn interior_rows(&self) -> Vec<usize> {
        interior_rows(&self.grid, self.time)
    }

    /// `y ↦ Γ(0, y, t)` as a function on the table's grid.
    pub fn origin_row(&self) -> GridFunction {
        let o = self.grid.origin_index();
        let fold = match self.grid.kind() {
            GridKind::HalfLine => 0.5,
            _ => 1.0,
        };
        let values = self.values.row(o).iter().map(|v| v * fold).collect();
        GridFunction::new(self.grid.clone(), values).expect("row length equals grid size")
    }

    /// Binary cache: magic, key fields, dimensions, then row-major `f64` (little endian).
    pub fn save(&self, path: &Path) -> Result<(), KernelError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CACHE_MAGIC)?;
        let spec = self.grid.spec();
        out.write_all(&[case_tag(spec.case())])?;
        out.write_all(&spec.alpha().to_le_bytes())?;
        out.write_all(&(spec.dimension() as u64).to_le_bytes())?;
        out.write_all(&self.grid.fingerprint().to_le_bytes())?;
        out.write_all(&self.time.to_le_bytes())?;
        out.write_all(&(self.steps as u64).to_le_bytes())?;
        out.write_all(&(self.values.nrows() as u64).to_le_bytes())?;
        out.write_all(&(self.values.ncols() as u64).to_le_bytes())?;
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                out.write_all(&self.values[(i, j)].to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a cached table, rejecting it unless every key field matches.
    pub fn load(path: &Path, grid: Arc<Grid>, time: f64, scheme: TimeScheme) -> Result<Self, KernelError> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(KernelError::Cache("bad magic".into()));
        }
        let mut case = [0u8; 1];
        input.read_exact(&mut case)?;
        let alpha = read_f64(&mut input)?;
        let dimension = read_u64(&mut input)?;
        let hash = read_u64(&mut input)?;
        let t = read_f64(&mut input)?;
        let steps = read_u64(&mut input)?;
        let rows = read_u64(&mut input)? as usize;
        let cols = read_u64(&mut input)? as usize;
        let spec = grid.spec();
        let key_ok = case[0] == case_tag(spec.case())
            && alpha.to_bits() == spec.alpha().to_bits()
            && dimension == spec.dimension() as u64
            && hash == grid.fingerprint()
            && t.to_bits() == time.to_bits()
            && steps == scheme.steps_tag() as u64
            && rows == grid.len()
            && cols == grid.len();
        if !key_ok {
            return Err(KernelError::Cache("key mismatch".into()));
        }
        let mut values = DMatrix::<f64>::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                values[(i, j)] = read_f64(&mut input)?;
            }
        }
        Ok(Self { grid, time, steps: steps as usize, values })
    }
}

const CACHE_MAGIC: &[u8; 8] = b"FUJKTBL1";

fn case_tag(case: WeightCase) -> u8 {
    match case {
        WeightCase::AxisPower => 0,
        WeightCase::RadialPower => 1,
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64, KernelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, KernelError> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn interior_rows(grid: &Grid, t: f64) -> Vec<usize> {
    let reach = GAUSSIAN_REACH * t.sqrt();
    (0..grid.len()).filter(|&i| grid.radius() - grid.distance(i) >= reach).collect()
}

/// Smallest truncation radius that keeps data supported in
/// `|x| ≤ data_radius` from leaking more than `1e-6` of mass by `t_max`.
pub fn truncation_radius(data_radius: f64, t_max: f64) -> f64 {
    data_radius + GAUSSIAN_REACH * t_max.sqrt()
}

/// Builds the kernel table at time `t` on `grid`.
pub fn build_kernel(grid: Arc<Grid>, t: f64, scheme: TimeScheme) -> Result<KernelTable, KernelError> {
    match scheme {
        TimeScheme::Exponential => Propagator::new(grid)?.table(t),
        TimeScheme::BackwardEuler { steps } => build_backward_euler(&DiffusionOperator::new(grid), t, steps),
    }
}

/// Builds with an existing propagator (exponential) or its operator (backward Euler).
pub fn build_kernel_with(prop: &Propagator, t: f64, scheme: TimeScheme) -> Result<KernelTable, KernelError> {
    match scheme {
        TimeScheme::Exponential => prop.table(t),
        TimeScheme::BackwardEuler { steps } => build_backward_euler(prop.operator(), t, steps),
    }
}

fn build_backward_euler(op: &DiffusionOperator, t: f64, steps: usize) -> Result<KernelTable, KernelError> {
    check_time(t)?;
    let steps = steps.max(1);
    let n = op.len();
    let factor = op.implicit_factor(t / steps as f64);
    let mut values = DMatrix::<f64>::zeros(n, n);
    let mut column = vec![0.0; n];
    for j in 0..n {
        column.iter_mut().for_each(|v| *v = 0.0);
        column[j] = 1.0 / op.mass[j];
        for _ in 0..steps {
            op.backward_euler_step(&factor, &mut column);
        }
        values.column_mut(j).copy_from_slice(&column);
    }
    KernelTable::from_matrix(op.grid().clone(), t, steps, values)
}

/// Prefactors of the two-sided Gaussian envelopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeConstants {
    /// `(d, D)`: power-law prefactors `min{t^{-n/4}ρ^{-α/2}, t^{-(n+α)/4}}`.
    Explicit { lower: f64, upper: f64 },
    /// `(c*, C*)`: prefactors `1/√(w(B(x,√t)) w(B(y,√t)))`.
    BallMass { lower: f64, upper: f64 },
}

/// Distance of a point from the singular set: `|x₁|` or `|x|`.
fn singular_distance(spec: &WeightSpec, x: &[f64]) -> f64 {
    match spec.case() {
        WeightCase::AxisPower => x[0].abs(),
        WeightCase::RadialPower => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn explicit_prefactor(spec: &WeightSpec, rho: f64, t: f64) -> f64 {
    let n = spec.dimension() as f64;
    let alpha = spec.alpha();
    let flat = t.powf(-(n + alpha) / 4.0);
    if alpha == 0.0 {
        return flat;
    }
    (t.powf(-n / 4.0) * rho.powf(-alpha / 2.0)).min(flat)
}

/// Lower and upper Gaussian envelopes of `Γ(x, y, t)`.
pub fn kernel_bounds(
    spec: &WeightSpec,
    x: &[f64],
    y: &[f64],
    t: f64,
    constants: EnvelopeConstants,
) -> Result<(f64, f64), KernelError> {
    check_time(t)?;
    let n = spec.dimension();
    if x.len() != n || y.len() != n {
        return Err(WeightError::DimensionMismatch { expected: n, got: x.len().min(y.len()) }.into());
    }
    let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    match constants {
        EnvelopeConstants::Explicit { lower, upper } => {
            let (px, py) = (explicit_prefactor(spec, singular_distance(spec, x), t), explicit_prefactor(spec, singular_distance(spec, y), t));
            let nn = n as f64 + spec.alpha();
            Ok((
                lower * px * py * (-dist2 / (lower * t)).exp(),
                upper * t.powf(-nn / 2.0) * (-dist2 / (upper * t)).exp(),
            ))
        }
        EnvelopeConstants::BallMass { lower, upper } => {
            let s = t.sqrt();
            let norm = (ball_mass(spec, x, s)? * ball_mass(spec, y, s)?).sqrt();
            Ok((lower / norm * (-dist2 / (lower * t)).exp(), upper / norm * (-dist2 / (upper * t)).exp()))
        }
    }
}

/// Classical heat kernel `(4πt)^{-1/2} e^{-(x-y)²/4t}`.
pub fn gaussian_kernel(x: f64, y: f64, t: f64) -> f64 {
    (4.0 * std::f64::consts::PI * t).powf(-0.5) * (-(x - y) * (x - y) / (4.0 * t)).exp()
}

/// Maximum over interior rows of the relative weighted-L¹ distance between
/// the table and the classical kernel (folded on a half-line grid).
pub fn gaussian_match_error(table: &KernelTable) -> Option<f64> {
    let grid = table.grid();
    let spec = grid.spec();
    if spec.case() != WeightCase::AxisPower || spec.alpha() != 0.0 || spec.dimension() != 1 {
        return None;
    }
    let t = table.time();
    let nodes = grid.nodes();
    let m = grid.cell_mass();
    let folded = grid.kind() == GridKind::HalfLine;
    let mut worst: f64 = 0.0;
    for i in table.interior_rows() {
        let (mut diff, mut total) = (0.0, 0.0);
        for j in 0..grid.len() {
            let mut g = gaussian_kernel(nodes[i], nodes[j], t);
            if folded {
                g += gaussian_kernel(nodes[i], -nodes[j], t);
            }
            diff += (table.get(i, j) - g).abs() * m[j];
            total += g * m[j];
        }
        worst = worst.max(diff / total);
    }
    Some(worst)
}

/// Maximum over interior rows of `|Σⱼ K[i][j] mⱼ − 1|`.
pub fn row_mass_error(table: &KernelTable) -> f64 {
    table.interior_rows().into_iter().map(|i| (table.row_mass(i) - 1.0).abs()).fold(0.0, f64::max)
}

/// Largest relative asymmetry among entries above `1e-10·max`.
pub fn symmetry_error(table: &KernelTable) -> f64 {
    let k = table.matrix();
    let floor = 1e-10 * k.amax();
    let mut worst: f64 = 0.0;
    for i in 0..k.nrows() {
        for j in i + 1..k.ncols() {
            let (a, b) = (k[(i, j)], k[(j, i)]);
            let scale = a.abs().max(b.abs());
            if scale > floor {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    worst
}

/// Maximum over interior rows of `Σⱼ |K(t) − K(t/2) M K(t/2)|ᵢⱼ mⱼ`.
pub fn composition_error(full: &KernelTable, half: &KernelTable) -> Result<f64, KernelError> {
    if full.grid().fingerprint() != half.grid().fingerprint() {
        return Err(KernelError::GridMismatch);
    }
    let m = full.grid().cell_mass();
    let mut scaled = half.values.clone();
    for (i, mi) in m.iter().enumerate() {
        scaled.row_mut(i).scale_mut(*mi);
    }
    let composed = &half.values * scaled;
    Ok(full
        .interior_rows()
        .into_iter()
        .map(|i| (0..m.len()).map(|j| (full.get(i, j) - composed[(i, j)]).abs() * m[j]).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Fitted envelope constants with the fraction of sampled entries they bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelFit {
    pub d: f64,
    pub big_d: f64,
    pub c_star: f64,
    pub big_c_star: f64,
    pub coverage_explicit: (f64, f64),
    pub coverage_ball: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    value: f64,
    near: f64,
    far: f64,
    px: f64,
    py: f64,
    bx: f64,
    by: f64,
}

/// Points on the sampled kernel used by the envelope fits. For a radial
/// table the averaged kernel is bracketed by the envelopes at the nearest
/// and farthest points of the sphere.
fn envelope_samples(tables: &[KernelTable]) -> Result<Vec<Sample>, KernelError> {
    let mut out = Vec::new();
    for table in tables {
        let grid = table.grid();
        let spec = *grid.spec();
        let t = table.time();
        let n = spec.dimension();
        let nodes = grid.nodes();
        let rows = table.interior_rows();
        let floor = 1e-10 * table.matrix().amax();
        let stride = (grid.len() / 160).max(1);
        // n-D axis kernel on the slice x' = y' is the 1-D kernel times the (n−1)-D heat kernel
        let transverse = match spec.case() {
            WeightCase::AxisPower => (4.0 * std::f64::consts::PI * t).powf(-(n as f64 - 1.0) / 2.0),
            WeightCase::RadialPower => 1.0,
        };
        let point = |x: f64| {
            let mut p = vec![0.0; n];
            p[0] = x;
            p
        };
        let s = t.sqrt();
        let mut ball = Vec::with_capacity(grid.len());
        for (i, &x) in nodes.iter().enumerate() {
            ball.push(if i % stride == 0 || rows.contains(&i) { ball_mass(&spec, &point(x), s)? } else { f64::NAN });
        }
        for &i in rows.iter().step_by(stride) {
            for j in (0..grid.len()).step_by(stride) {
                let value = table.get(i, j) * transverse;
                if value <= floor || ball[j].is_nan() {
                    continue;
                }
                let (xi, xj) = (nodes[i], nodes[j]);
                let (near, far) = match grid.kind() {
                    GridKind::Radial => ((xi - xj).abs(), xi + xj),
                    _ => ((xi - xj).abs(), (xi - xj).abs()),
                };
                out.push(Sample {
                    t,
                    value,
                    near,
                    far,
                    px: explicit_prefactor(&spec, xi.abs(), t),
                    py: explicit_prefactor(&spec, xj.abs(), t),
                    bx: ball[i],
                    by: ball[j],
                });
            }
        }
    }
    Ok(out)
}

fn coverage<F: Fn(&Sample) -> bool>(samples: &[Sample], ok: F) -> f64 {
    samples.iter().filter(|s| ok(s)).count() as f64 / samples.len().max(1) as f64
}

/// Bisection in `log c` for the extreme constant reaching `target` coverage;
/// `increasing` says whether coverage grows with `c`.
fn fit_constant<F: Fn(f64) -> f64>(cov: F, increasing: bool, target: f64, which: &'static str) -> Result<(f64, f64), KernelError> {
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let good = |c: f64| cov(c) >= target;
    let (edge_good, edge) = if increasing { (good(hi.exp()), hi) } else { (good(lo.exp()), lo) };
    if !edge_good {
        return Err(KernelError::Fit { which, target: 100.0 * target, best: 100.0 * cov(edge.exp()) });
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let g = good(mid.exp());
        if g == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c = if increasing { hi.exp() } else { lo.exp() };
    Ok((c, cov(c)))
}

/// Tightest envelope constants bracketing `target` of the sampled interior entries.
pub fn fit_envelopes(spec: &WeightSpec, tables: &[KernelTable], target: f64) -> Result<KernelFit, KernelError> {
    let samples = envelope_samples(tables)?;
    let nn = spec.homogeneous_dimension();
    let lower_explicit = |d: f64, s: &Sample| d * s.px * s.py * (-s.far * s.far / (d * s.t)).exp() <= s.value;
    let upper_explicit =
        |d: f64, s: &Sample| s.value <= d * s.t.powf(-nn / 2.0) * (-s.near * s.near / (d * s.t)).exp();
    let lower_ball = |c: f64, s: &Sample| c / (s.bx * s.by).sqrt() * (-s.far * s.far / (c * s.t)).exp() <= s.value;
    let upper_ball = |c: f64, s: &Sample| s.value <= c / (s.bx * s.by).sqrt() * (-s.near * s.near / (c * s.t)).exp();
    let (d, cd) = fit_constant(|c| coverage(&samples, |s| lower_explicit(c, s)), false, target, "lower envelope d")?;
    let (big_d, cbd) = fit_constant(|c| coverage(&samples, |s| upper_explicit(c, s)), true, target, "upper envelope D")?;
    let (c_star, cc) = fit_constant(|c| coverage(&samples, |s| lower_ball(c, s)), false, target, "lower envelope c*")?;
    let (big_c_star, cbc) = fit_constant(|c| coverage(&samples, |s| upper_ball(c, s)), true, target, "upper envelope C*")?;
    Ok(KernelFit { d, big_d, c_star, big_c_star, coverage_explicit: (cd, cbd), coverage_ball: (cc, cbc) })
}

/// Per-time structural checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeCheck {
    pub t: f64,
    pub row_mass_error: f64,
    pub symmetry_error: f64,
    pub composition_error: f64,
    pub min_entry: f64,
    pub gaussian_error: Option<f64>,
}

/// Regression of a norm of `Γ(0, ·, t)` against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeCheck {
    pub label: String,
    pub r: f64,
    pub slope: f64,
    pub predicted: f64,
}

impl SlopeCheck {
    pub fn relative_error(&self) -> f64 {
        (self.slope - self.predicted).abs() / self.predicted.abs()
    }
}

#[derive(Debug, Clone)]
pub struct KernelReport {
    pub spec: WeightSpec,
    pub nodes: usize,
    pub times: Vec<TimeCheck>,
    pub fit: Result<KernelFit, String>,
    pub slopes: Vec<SlopeCheck>,
}

impl KernelReport {
    pub fn max_row_mass_error(&self) -> f64 {
        self.times.iter().map(|c| c.row_mass_error).fold(0.0, f64::max)
    }

    pub fn max_composition_error(&self) -> f64 {
        self.times.iter().map(|c| c.composition_error).fold(0.0, f64::max)
    }

    pub fn max_symmetry_error(&self) -> f64 {
        self.times.iter().map(|c| c.symmetry_error).fold(0.0, f64::max)
    }
}

fn check_geometric(times: &[f64]) -> Result<(), KernelError> {
    let geometric = times.len() >= 4
        && times.iter().all(|t| *t > 0.0 && t.is_finite())
        && times.windows(3).all(|w| ((w[1] / w[0]) - (w[2] / w[1])).abs() < 1e-9 * (w[1] / w[0]))
        && times[1] > times[0];
    if geometric {
        Ok(())
    } else {
        Err(KernelError::Times(times.to_vec()))
    }
}

/// Full verification on `grid` (a half-line axis grid is mirrored first).
pub fn verify_kernel(grid: &Grid, times: &[f64], scheme: TimeScheme) -> Result<KernelReport, KernelError> {
    check_geometric(times)?;
    let grid = Arc::new(match grid.kind() {
        GridKind::HalfLine => grid.mirrored()?,
        _ => grid.clone(),
    });
    let prop = match scheme {
        TimeScheme::Exponential => Some(Propagator::new(grid.clone())?),
        TimeScheme::BackwardEuler { .. } => None,
    };
    let build = |t: f64| match &prop {
        Some(p) => p.table(t),
        None => build_kernel(grid.clone(), t, scheme),
    };
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    for &t in times {
        let table = build(t)?;
        let half = build(0.5 * t)?;
        checks.push(TimeCheck {
            t,
            row_mass_error: row_mass_error(&table),
            symmetry_error: symmetry_error(&table),
            composition_error: composition_error(&table, &half)?,
            min_entry: table.matrix().min(),
            gaussian_error: gaussian_match_error(&table),
        });
        tables.push(table);
    }
    let spec = *grid.spec();
    let fit = fit_envelopes(&spec, &tables, 0.99).map_err(|e| e.to_string());
    let slopes = decay_slopes(&spec, &tables)?;
    Ok(KernelReport { spec, nodes: grid.len(), times: checks, fit, slopes })
}

/// Log-log slopes of `‖Γ(0,·,t)‖_{L^r(w)}` (r ∈ {2, 4, ∞}) and
/// `‖Γ(0,·,t)‖_{L^{r,1}(w)}` (r ∈ {2, 4}) against `t`.
pub fn decay_slopes(spec: &WeightSpec, tables: &[KernelTable]) -> Result<Vec<SlopeCheck>, KernelError> {
    let nn = spec.homogeneous_dimension();
    let ts: Vec<f64> = tables.iter().map(|t| t.time()).collect();
    let rows: Vec<GridFunction> = tables.iter().map(|t| t.origin_row()).collect();
    let mut out = Vec::new();
    for r in [2.0, 4.0, f64::INFINITY] {
        let norms: Vec<f64> = rows.iter().map(|f| lebesgue_norm(f, r)).collect();
        out.push(slope_check(format!("L^{}", show_exponent(r)), r, &ts, &norms, nn));
    }
    for r in [2.0, 4.0] {
        let idx = LorentzIndex::new(r, 1.0)?;
        let norms = rows.iter().map(|f| lorentz_norm(f, idx)).collect::<Result<Vec<f64>, _>>()?;
        out.push(slope_check(format!("L^({},1)", show_exponent(r)), r, &ts, &norms, nn));
    }
    Ok(out)
}

fn slope_check(label: String, r: f64, ts: &[f64], norms: &[f64], nn: f64) -> SlopeCheck {
    let inv = if r.is_infinite() { 0.0 } else { 1.0 / r };
    let slope = fit_log_log(ts, norms).map(|f| f.slope).unwrap_or(f64::NAN);
    SlopeCheck { label, r, slope, predicted: -nn / 2.0 * (1.0 - inv) }
}

pub(crate) fn show_exponent(r: f64) -> String {
    if r.is_infinite() {
        "inf".to_string()
    } else {
        format!("{r}")
    }
}
