//! Operators on the truncated Fourier basis: `Λ`, `Υ`, `Υ_{η,z}` and the
//! handle operator `∂γ + ΛJΛ`, together with kernels, ranks and winding
//! numbers.

use std::f64::consts::PI;
use std::sync::OnceLock;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::boundary::{analyze, synthesize, BoundaryFunction, GridSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, decide_rank, require_gap, CMat, RankInfo, TolPolicy};

/// Relative tolerance of the realness invariant `M_{-m,-n} = conj(M_{m,n})`.
pub const REAL_OP_TOL: f64 = 1e-10;

/// Default relative distance below which `z` counts as lying on `η(Γ)`.
pub const DIST_TOL: f64 = 1e-6;

/// Largest winding defect accepted before rounding.
pub const WINDING_DEFECT_TOL: f64 = 0.01;

/// Default gap factor required around a kernel threshold.
pub const GAP_FACTOR: f64 = 1e3;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Direction in which `γ` traverses the boundary relative to arclength.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }

    pub fn from_sign(s: i64) -> Result<Self> {
        match s {
            1 => Ok(Orientation::Positive),
            -1 => Ok(Orientation::Negative),
            _ => Err(Error::InvalidInput(format!("orientation must be 1 or -1, got {s}"))),
        }
    }
}

impl Serialize for Orientation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.sign() as i64)
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Orientation::from_sign(i64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Diagnostics attached to derived operators.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    /// `‖(I - P₀)Λ‖`: how far the range of `Λ` is from zero mean.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub projection_residual: Option<f64>,
    /// Scale against which small singular values are judged when the operator
    /// is a sum of cancelling terms.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reference_norm: Option<f64>,
}

impl OperatorMeta {
    fn is_empty(&self) -> bool {
        self.projection_residual.is_none() && self.reference_norm.is_none()
    }
}

/// A dense operator on the `2N + 1` Fourier modes of a [`GridSpec`]. Column
/// `n` holds the image of `exp(2π i n s / L)`.
#[derive(Clone, Debug)]
pub struct BoundaryOperator {
    grid: GridSpec,
    matrix: CMat,
    orientation: Orientation,
    meta: OperatorMeta,
}

impl PartialEq for BoundaryOperator {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.orientation == other.orientation
            && self.meta == other.meta
            && self.matrix == other.matrix
    }
}

impl BoundaryOperator {
    pub fn new(grid: GridSpec, matrix: CMat, orientation: Orientation) -> Result<Self> {
        let m = grid.size();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::InvalidInput(format!(
                "matrix is {}x{}, grid {grid} needs {m}x{m}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for j in 0..m {
            for i in 0..m {
                let v = matrix[(i, j)];
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            grid,
            matrix,
            orientation,
            meta: OperatorMeta::default(),
        })
    }

    /// Builds the matrix entrywise from mode numbers `(m, n)`.
    pub fn from_fn(grid: GridSpec, orientation: Orientation, f: impl Fn(i64, i64) -> C64) -> Self {
        let size = grid.size();
        let matrix = Mat::from_fn(size, size, |i, j| f(grid.mode_at(i), grid.mode_at(j)));
        Self {
            grid,
            matrix,
            orientation,
            meta: OperatorMeta::default(),
        }
    }

    pub fn diagonal(grid: GridSpec, f: impl Fn(i64) -> C64) -> Self {
        Self::from_fn(grid, Orientation::Positive, |m, n| if m == n { f(n) } else { ZERO })
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self::diagonal(grid, |_| ZERO)
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self::diagonal(grid, |_| C64::new(1.0, 0.0))
    }

    /// `d/ds` on the truncated basis, ignoring orientation.
    pub fn arclength_derivative(grid: GridSpec) -> Self {
        Self::diagonal(grid, |n| C64::new(0.0, grid.wavenumber(n)))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn entry(&self, m: i64, n: i64) -> C64 {
        self.matrix[(self.grid.index(m), self.grid.index(n))]
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_meta(mut self, meta: OperatorMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Largest violation of `M_{-m,-n} = conj(M_{m,n})`.
    pub fn realness_defect(&self) -> f64 {
        let size = self.grid.size();
        let mut worst = 0.0f64;
        for j in 0..size {
            for i in 0..size {
                let d = self.matrix[(size - 1 - i, size - 1 - j)] - self.matrix[(i, j)].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    fn max_entry(&self) -> f64 {
        let size = self.grid.size();
        let mut m = 0.0f64;
        for j in 0..size {
            for i in 0..size {
                m = m.max(self.matrix[(i, j)].norm());
            }
        }
        m
    }

    /// True when the operator maps real functions to real functions.
    pub fn is_real(&self) -> bool {
        self.realness_defect() <= REAL_OP_TOL * self.max_entry().max(1.0)
    }

    pub fn ensure_real(&self) -> Result<()> {
        if self.is_real() {
            Ok(())
        } else {
            Err(Error::NotRealOperator {
                asymmetry: self.realness_defect(),
            })
        }
    }

    pub fn apply(&self, f: &BoundaryFunction) -> Result<BoundaryFunction> {
        self.grid.ensure_same(f.grid())?;
        BoundaryFunction::from_coeffs(self.grid, mat_vec(&self.matrix, f.coeffs()))
    }

    /// `self ∘ other`; metadata is dropped.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            matrix: &self.matrix * &other.matrix,
            orientation: self.orientation,
            meta: OperatorMeta::default(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            matrix: &self.matrix + &other.matrix,
            orientation: self.orientation,
            meta: OperatorMeta::default(),
        })
    }

    pub fn scale(&self, a: C64) -> Self {
        let size = self.grid.size();
        Self {
            grid: self.grid,
            matrix: Mat::from_fn(size, size, |i, j| self.matrix[(i, j)] * a),
            orientation: self.orientation,
            meta: OperatorMeta::default(),
        }
    }

    /// Spectral norm.
    pub fn norm(&self) -> Result<f64> {
        linalg::spectral_norm(self.matrix.as_ref())
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        linalg::singular_values(self.matrix.as_ref())
    }

    /// Restriction to `modes` (principal submatrix, `modes <= N`).
    pub fn truncate(&self, modes: usize) -> Result<Self> {
        if modes > self.grid.modes {
            return Err(Error::InvalidGrid(format!(
                "cannot truncate {} to {modes} modes",
                self.grid
            )));
        }
        let grid = self.grid.with_modes(modes)?;
        let off = self.grid.modes - modes;
        let size = grid.size();
        Ok(Self {
            grid,
            matrix: Mat::from_fn(size, size, |i, j| self.matrix[(i + off, j + off)]),
            orientation: self.orientation,
            meta: OperatorMeta::default(),
        })
    }

    /// Conjugation by the rotation `s -> s + shift`.
    pub fn rotate(&self, shift: f64) -> Self {
        let g = self.grid;
        Self::from_fn(g, self.orientation, |m, n| {
            self.entry(m, n) * C64::from_polar(1.0, g.wavenumber(n - m) * shift)
        })
    }

    /// Operator-level winding: `winding_number` with this operator's
    /// orientation applied.
    pub fn winding(&self, eta: &BoundaryFunction, z: C64) -> Result<Winding> {
        let w = winding_number(eta, z)?;
        Ok(if self.orientation == Orientation::Negative {
            Winding {
                value: -w.value,
                raw: -w.raw,
                ..w
            }
        } else {
            w
        })
    }
}

pub(crate) fn mat_vec(m: &CMat, x: &[C64]) -> Vec<C64> {
    let mut out = vec![ZERO; m.nrows()];
    for (j, xj) in x.iter().enumerate() {
        if *xj == ZERO {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * xj;
        }
    }
    out
}

/// `Υ = Λ + i ∂γ`, with `∂γ` the derivative along the oriented boundary.
pub fn build_upsilon(lambda: &BoundaryOperator) -> Result<BoundaryOperator> {
    lambda.ensure_real()?;
    let g = lambda.grid;
    let o = lambda.orientation.sign();
    let size = g.size();
    let mut matrix = lambda.matrix.clone();
    for k in 0..size {
        // i * (o * i k) = -o k
        matrix[(k, k)] += C64::new(-o * g.wavenumber(g.mode_at(k)), 0.0);
    }
    Ok(BoundaryOperator {
        grid: g,
        matrix,
        orientation: lambda.orientation,
        meta: OperatorMeta::default(),
    })
}

/// `Υζ` assembled from real and imaginary parts:
/// `(Λ Re ζ − ∂γ Im ζ) + i (Λ Im ζ + ∂γ Re ζ)`.
pub fn upsilon_componentwise(lambda: &BoundaryOperator, zeta: &BoundaryFunction) -> Result<BoundaryFunction> {
    lambda.ensure_real()?;
    let o = lambda.orientation.sign();
    let (re, im) = (zeta.re(), zeta.im());
    let d_re = &re.derivative() * o;
    let d_im = &im.derivative() * o;
    let real = &lambda.apply(&re)? - &d_im;
    let imag = &lambda.apply(&im)? + &d_re;
    Ok(&real + &imag.scale(C64::new(0.0, 1.0)))
}

/// Fourier coefficients `k = -2N..=2N` of `1 / (η − z)`, computed on a fine
/// grid that is refined until the spectrum has decayed to rounding level.
fn reciprocal_coeffs(eta: &BoundaryFunction, z: C64) -> Vec<C64> {
    let n2 = 2 * eta.grid().modes;
    let mut m = (4 * (2 * n2 + 1)).max(eta.fine_size()).next_power_of_two();
    loop {
        let vals: Vec<C64> = synthesize(eta.coeffs(), m)
            .into_iter()
            .map(|v| (v - z).inv())
            .collect();
        let full = analyze(&vals, (m - 1) / 2);
        let half = (m - 1) / 2;
        let peak = full.iter().map(|c| c.norm()).fold(0.0, f64::max);
        // Tail: the outer quarter of the resolved band on each side.
        let tail = full[..half / 2]
            .iter()
            .chain(&full[full.len() - half / 2..])
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if tail <= 1e-15 * peak || m >= 1 << 18 {
            return (0..=2 * n2)
                .map(|i| {
                    let k = i as i64 - n2 as i64;
                    full[(k + half as i64) as usize]
                })
                .collect();
        }
        m *= 2;
    }
}

pub(crate) fn check_off_curve(eta: &BoundaryFunction, z: C64) -> Result<()> {
    let tol = DIST_TOL * eta.max_abs();
    let distance = eta.distance_to(z);
    if distance < tol || distance == 0.0 {
        return Err(Error::OnBoundaryCurve {
            re: z.re,
            im: z.im,
            distance,
            tol,
        });
    }
    Ok(())
}

/// Matrix of multiplication by `1 / (η − z)` on the truncated basis.
pub fn reciprocal_multiplier(eta: &BoundaryFunction, z: C64) -> Result<BoundaryOperator> {
    check_off_curve(eta, z)?;
    let r = reciprocal_coeffs(eta, z);
    let n2 = 2 * eta.grid().modes as i64;
    Ok(BoundaryOperator::from_fn(*eta.grid(), Orientation::Positive, |m, n| {
        r[(m - n + n2) as usize]
    }))
}

/// `Υ_{η,z} ζ = Υ(ζ / (η − z e))`, given `Υ` already assembled.
pub fn upsilon_eta_z(upsilon: &BoundaryOperator, eta: &BoundaryFunction, z: C64) -> Result<BoundaryOperator> {
    upsilon.grid.ensure_same(eta.grid())?;
    let mult = reciprocal_multiplier(eta, z)?;
    Ok(BoundaryOperator {
        grid: upsilon.grid,
        matrix: &upsilon.matrix * &mult.matrix,
        orientation: upsilon.orientation,
        meta: OperatorMeta::default(),
    })
}

pub fn build_upsilon_eta_z(lambda: &BoundaryOperator, eta: &BoundaryFunction, z: C64) -> Result<BoundaryOperator> {
    upsilon_eta_z(&build_upsilon(lambda)?, eta, z)
}

/// `∂γ + Λ P₀ J P₀ Λ`. The metadata records `‖(I − P₀)Λ‖` and the reference
/// norm `‖∂γ‖ + ‖Λ‖²‖J‖` used to judge cancellation.
pub fn handle_operator(lambda: &BoundaryOperator) -> Result<BoundaryOperator> {
    lambda.ensure_real()?;
    let g = lambda.grid;
    let o = lambda.orientation.sign();
    let size = g.size();
    let c = g.modes;
    // J P₀ as a diagonal; P₀ on the right is the same diagonal's zero at n = 0.
    let jdiag: Vec<C64> = (0..size)
        .map(|k| {
            let n = g.mode_at(k);
            if n == 0 {
                ZERO
            } else {
                C64::new(0.0, o * g.wavenumber(n)).inv()
            }
        })
        .collect();
    let lam = &lambda.matrix;
    // (J P₀ Λ) with the mean row removed.
    let right = Mat::from_fn(size, size, |i, j| if i == c { ZERO } else { jdiag[i] * lam[(i, j)] });
    let left = Mat::from_fn(size, size, |i, j| if j == c { ZERO } else { lam[(i, j)] });
    let mut h = &left * &right;
    for k in 0..size {
        h[(k, k)] += C64::new(0.0, o * g.wavenumber(g.mode_at(k)));
    }
    let projection_residual = (0..size).map(|j| lam[(c, j)].norm_sqr()).sum::<f64>().sqrt();
    let lam_norm = lambda.norm()?;
    let d_norm = g.wavenumber(g.modes as i64);
    let j_norm = g.length / (2.0 * PI);
    Ok(BoundaryOperator {
        grid: g,
        matrix: h,
        orientation: lambda.orientation,
        meta: OperatorMeta {
            projection_residual: Some(projection_residual),
            reference_norm: Some(d_norm + lam_norm * lam_norm * j_norm),
        },
    })
}

/// Numerical rank of `op` under `policy`. The scale for relative policies is
/// the larger of `σ_max` and the recorded reference norm.
pub fn numerical_rank(op: &BoundaryOperator, policy: TolPolicy) -> Result<RankInfo> {
    let sv = op.singular_values()?;
    decide_rank(&sv, op.meta.reference_norm.unwrap_or(0.0), op.grid.size(), policy)
}

/// Orthonormal numerical basis of the kernel of an operator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelBasis {
    grid: GridSpec,
    vectors: Vec<BoundaryFunction>,
    tol: f64,
    gap_ratio: f64,
    operator_norm: f64,
}

impl KernelBasis {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[BoundaryFunction] {
        &self.vectors
    }

    /// Singular-value threshold `τ` that produced the basis.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn gap_ratio(&self) -> f64 {
        self.gap_ratio
    }

    /// `σ_max` of the operator whose kernel this is.
    pub fn operator_norm(&self) -> f64 {
        self.operator_norm
    }

    /// `(2N + 1) × dim` matrix with the basis vectors as columns.
    pub fn as_matrix(&self) -> CMat {
        Mat::from_fn(self.grid.size(), self.dim(), |i, j| self.vectors[j].coeffs()[i])
    }

    /// Orthogonal projection of `f` onto the span.
    pub fn project(&self, f: &BoundaryFunction) -> Result<BoundaryFunction> {
        self.grid.ensure_same(f.grid())?;
        let mut out = BoundaryFunction::zero(self.grid);
        for v in &self.vectors {
            out = &out + &v.scale(v.inner(f));
        }
        Ok(out)
    }

    /// `‖f − P f‖ / ‖f‖` (absolute when `f = 0`).
    pub fn relative_distance(&self, f: &BoundaryFunction) -> Result<f64> {
        let p = self.project(f)?;
        let d = (f - &p).norm();
        let n = f.norm();
        Ok(if n > 0.0 { d / n } else { d })
    }

    /// Combination `sum c_j v_j`.
    pub fn combine(&self, c: &[C64]) -> BoundaryFunction {
        let mut out = BoundaryFunction::zero(self.grid);
        for (v, cj) in self.vectors.iter().zip(c) {
            out = &out + &v.scale(*cj);
        }
        out
    }

    /// Largest subspace angle (radians) between `other` and its projection on
    /// `self`, after resampling `other` to this grid. Requires `other` to live
    /// on no more modes than `self`.
    pub fn max_angle_from(&self, other: &KernelBasis) -> Result<f64> {
        let mut worst = 0.0f64;
        for v in &other.vectors {
            let r = v.resample(self.grid.modes)?;
            let d = self.relative_distance(&r)?;
            worst = worst.max(d.clamp(0.0, 1.0).asin());
        }
        Ok(worst)
    }
}

/// Kernel of `op`: right singular vectors with `σ <= τ`, ordered smoothest
/// first under the weight `1 + n²`, each with its largest coefficient real
/// and positive.
pub fn kernel_basis(op: &BoundaryOperator, policy: TolPolicy, gap_factor: f64) -> Result<KernelBasis> {
    let g = op.grid;
    let size = g.size();
    let svd = linalg::svd(op.matrix.as_ref())?;
    let info = decide_rank(&svd.s, op.meta.reference_norm.unwrap_or(0.0), size, policy)?;
    require_gap(&info, gap_factor)?;
    let dim = size - info.rank;
    let k = Mat::from_fn(size, dim, |i, j| svd.v[(i, info.rank + j)]);
    let vectors = if dim == 0 {
        Vec::new()
    } else {
        let w = Mat::from_fn(size, size, |i, j| {
            if i == j {
                let n = g.mode_at(i) as f64;
                C64::new(1.0 + n * n, 0.0)
            } else {
                ZERO
            }
        });
        let gram = k.adjoint() * &w * &k;
        // Symmetrize against rounding before the Hermitian solver.
        let gram = Mat::from_fn(dim, dim, |i, j| (gram[(i, j)] + gram[(j, i)].conj()) * 0.5);
        let (_, u) = linalg::hermitian_eigen(gram.as_ref())?;
        let smooth = &k * &u;
        (0..dim)
            .map(|j| {
                let mut col: Vec<C64> = (0..size).map(|i| smooth[(i, j)]).collect();
                normalize_phase(&mut col);
                BoundaryFunction::from_coeffs(g, col)
            })
            .collect::<Result<_>>()?
    };
    Ok(KernelBasis {
        grid: g,
        vectors,
        tol: info.tau,
        gap_ratio: info.gap_ratio,
        operator_norm: svd.s.first().copied().unwrap_or(0.0),
    })
}

pub(crate) fn normalize_phase(col: &mut [C64]) {
    // Ties go to the lowest index so the choice is deterministic.
    let mut best = 0;
    for (i, c) in col.iter().enumerate() {
        if c.norm() > col[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let p = col[best];
    if p.norm() > 0.0 {
        let phase = p.conj() / p.norm();
        for c in col.iter_mut() {
            *c *= phase;
        }
    }
}

/// Rank of `Υ_{η,z}` restricted to the span of `kb`, i.e. the singular values
/// of the matrix whose columns are `Υ_{η,z} v_j`.
pub fn restricted_rank(
    upsilon_ez: &BoundaryOperator,
    kb: &KernelBasis,
    policy: TolPolicy,
) -> Result<RankInfo> {
    let img = &upsilon_ez.matrix * kb.as_matrix();
    let sv = linalg::singular_values(img.as_ref())?;
    decide_rank(&sv, 0.0, upsilon_ez.grid.size(), policy)
}

/// A rounded winding number with its pre-rounding value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Winding {
    pub value: i64,
    pub raw: f64,
    pub defect: f64,
    /// Number of quadrature points used.
    pub points: usize,
}

const WINDING_CAP: usize = 1 << 17;
const WINDING_CONVERGED: f64 = 1e-6;

/// Samples of `η` and `dη/dθ` at successively doubled resolutions, shared
/// across many evaluation points.
pub struct WindingEvaluator {
    eta: BoundaryFunction,
    base: usize,
    levels: Vec<OnceLock<(Vec<C64>, Vec<C64>)>>,
    max_abs: f64,
}

impl WindingEvaluator {
    pub fn new(eta: &BoundaryFunction) -> Self {
        let base = (16 * eta.grid().size()).max(1024).next_power_of_two();
        let mut levels = Vec::new();
        let mut m = base;
        while m <= WINDING_CAP.max(base) {
            levels.push(OnceLock::new());
            m *= 2;
        }
        Self {
            eta: eta.clone(),
            base,
            levels,
            max_abs: eta.max_abs(),
        }
    }

    pub fn curve(&self) -> &BoundaryFunction {
        &self.eta
    }

    fn level(&self, j: usize) -> &(Vec<C64>, Vec<C64>) {
        self.levels[j].get_or_init(|| {
            let m = self.base << j;
            let g = self.eta.grid();
            let dtheta: Vec<C64> = g
                .mode_numbers()
                .zip(self.eta.coeffs())
                .map(|(n, c)| c * C64::new(0.0, n as f64))
                .collect();
            (synthesize(self.eta.coeffs(), m), synthesize(&dtheta, m))
        })
    }

    /// Samples of `η` at the base resolution.
    pub fn base_samples(&self) -> &[C64] {
        &self.level(0).0
    }

    fn sum(&self, j: usize, z: C64, stride: usize) -> (C64, f64) {
        let (v, d) = self.level(j);
        let mut acc = ZERO;
        let mut dmin = f64::INFINITY;
        for k in (0..v.len()).step_by(stride) {
            let w = v[k] - z;
            dmin = dmin.min(w.norm());
            acc += d[k] / w;
        }
        let m = (v.len() / stride) as f64;
        (acc / C64::new(0.0, m), dmin)
    }

    /// `(1 / 2πi) ∮ dη / (η − z)`, refined until two successive resolutions
    /// agree to `1e-6`.
    pub fn winding(&self, z: C64) -> Result<Winding> {
        let mut prev = self.sum(0, z, 2).0;
        for j in 0..self.levels.len() {
            let (cur, dmin) = self.sum(j, z, 1);
            let tol = DIST_TOL * self.max_abs;
            if dmin < tol || dmin == 0.0 {
                return Err(Error::OnBoundaryCurve {
                    re: z.re,
                    im: z.im,
                    distance: dmin,
                    tol,
                });
            }
            let converged = (cur - prev).norm() < WINDING_CONVERGED;
            if converged || j + 1 == self.levels.len() {
                let raw = cur.re;
                let value = raw.round();
                let defect = (raw - value).abs().max(cur.im.abs());
                if defect > WINDING_DEFECT_TOL || !converged {
                    return Err(Error::WindingIllConditioned { raw, defect });
                }
                return Ok(Winding {
                    value: value as i64,
                    raw,
                    defect,
                    points: self.base << j,
                });
            }
            prev = cur;
        }
        unreachable!("winding loop always returns")
    }
}

/// Winding number of the curve `η(Γ)` about `z`.
pub fn winding_number(eta: &BoundaryFunction, z: C64) -> Result<Winding> {
    check_off_curve(eta, z)?;
    WindingEvaluator::new(eta).winding(z)
}

/// Fixes the orientation so that the small singular directions of `Υ` carry
/// nonnegative mode-weighted winding `sum n |c_n|²`; returns the operator and
/// whether it was flipped.
pub fn calibrate_orientation(lambda: &BoundaryOperator) -> Result<(BoundaryOperator, bool)> {
    let ups = build_upsilon(lambda)?;
    let g = lambda.grid;
    let size = g.size();
    let svd = linalg::svd(ups.matrix.as_ref())?;
    let k = (g.modes / 2).max(1);
    let mut score = 0.0;
    for j in size - k..size {
        for i in 0..size {
            score += g.mode_at(i) as f64 * svd.v[(i, j)].norm_sqr();
        }
    }
    if score < 0.0 {
        let o = lambda.orientation.flipped();
        Ok((lambda.clone().with_orientation(o), true))
    } else {
        Ok((lambda.clone(), false))
    }
}

/// JSON layout of an operator. `matrix` is inline unless `matrix_file` names a
/// binary sidecar.
#[derive(Serialize, Deserialize)]
pub(crate) struct OperatorJson {
    pub grid: GridSpec,
    pub orientation: Orientation,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix_file: Option<String>,
    #[serde(skip_serializing_if = "OperatorMeta::is_empty", default)]
    pub meta: OperatorMeta,
}

impl BoundaryOperator {
    /// Row-major entries.
    pub fn row_major(&self) -> Vec<C64> {
        let size = self.grid.size();
        let mut out = Vec::with_capacity(size * size);
        for i in 0..size {
            for j in 0..size {
                out.push(self.matrix[(i, j)]);
            }
        }
        out
    }

    pub fn from_row_major(grid: GridSpec, orientation: Orientation, entries: &[C64]) -> Result<Self> {
        let size = grid.size();
        if entries.len() != size * size {
            return Err(Error::InvalidInput(format!(
                "expected {} matrix entries, got {}",
                size * size,
                entries.len()
            )));
        }
        Self::new(grid, Mat::from_fn(size, size, |i, j| entries[i * size + j]), orientation)
    }

    pub(crate) fn to_json_parts(&self, inline: bool) -> OperatorJson {
        OperatorJson {
            grid: self.grid,
            orientation: self.orientation,
            matrix: inline.then(|| self.row_major().iter().map(|c| [c.re, c.im]).collect()),
            matrix_file: None,
            meta: self.meta.clone(),
        }
    }

    pub(crate) fn from_json_parts(parts: OperatorJson, entries: Option<Vec<C64>>) -> Result<Self> {
        let entries = match (entries, parts.matrix) {
            (Some(e), _) => e,
            (None, Some(m)) => m.iter().map(|[re, im]| C64::new(*re, *im)).collect(),
            (None, None) => return Err(Error::InvalidInput("operator has no matrix".into())),
        };
        Ok(Self::from_row_major(parts.grid, parts.orientation, &entries)?.with_meta(parts.meta))
    }
}

impl Serialize for BoundaryOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_parts(true).serialize(s)
    }
}

impl<'de> Deserialize<'de> for BoundaryOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let parts = OperatorJson::deserialize(d)?;
        if parts.matrix.is_none() {
            return Err(serde::de::Error::custom(
                "inline matrix required; use io::read_operator for sidecar files",
            ));
        }
        BoundaryOperator::from_json_parts(parts, None).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(n: usize) -> BoundaryOperator {
        let g = GridSpec::unit_circle(n).unwrap();
        BoundaryOperator::diagonal(g, |m| C64::new(m.abs() as f64, 0.0))
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn upsilon_on_disk_modes() {
        let lam = disk(8);
        let ups = build_upsilon(&lam).unwrap();
        let g = *lam.grid();
        let e2 = ups.apply(&BoundaryFunction::mode(g, 2)).unwrap();
        assert!(e2.norm() < 1e-14);
        let em2 = ups.apply(&BoundaryFunction::mode(g, -2)).unwrap();
        assert!((em2.coeff(-2) - c(4.0, 0.0)).norm() < 1e-14);
        assert!(ups.apply(&BoundaryFunction::unit(g)).unwrap().norm() < 1e-14);
    }

    #[test]
    fn negative_orientation_swaps_kernel() {
        let lam = disk(6).with_orientation(Orientation::Negative);
        let ups = build_upsilon(&lam).unwrap();
        let g = *lam.grid();
        assert!(ups.apply(&BoundaryFunction::mode(g, -3)).unwrap().norm() < 1e-14);
        let (fixed, flipped) = calibrate_orientation(&lam).unwrap();
        assert!(flipped);
        assert_eq!(fixed.orientation(), Orientation::Positive);
        assert!(!calibrate_orientation(&disk(6)).unwrap().1);
    }

    #[test]
    fn nonreal_operator_rejected() {
        let g = GridSpec::unit_circle(4).unwrap();
        let op = BoundaryOperator::diagonal(g, |n| c(0.0, n as f64 + 0.5));
        assert!(matches!(build_upsilon(&op), Err(Error::NotRealOperator { .. })));
    }

    #[test]
    fn upsilon_eta_z_examples() {
        let lam = disk(8);
        let g = *lam.grid();
        let w = BoundaryFunction::mode(g, 1);
        let e = BoundaryFunction::unit(g);
        let u0 = build_upsilon_eta_z(&lam, &w, c(0.0, 0.0)).unwrap();
        assert!(u0.apply(&w).unwrap().norm() < 1e-13);
        let img = u0.apply(&e).unwrap();
        assert!((img.coeff(-1) - c(2.0, 0.0)).norm() < 1e-12);
        assert!((&img - &BoundaryFunction::mode(g, -1).scale(c(2.0, 0.0))).norm() < 1e-12);
        let u2 = build_upsilon_eta_z(&lam, &w, c(2.0, 0.0)).unwrap();
        assert!(u2.apply(&e).unwrap().norm() < 1e-12);
        assert!(matches!(
            build_upsilon_eta_z(&lam, &w, c(1.0, 0.0)),
            Err(Error::OnBoundaryCurve { .. })
        ));
    }

    #[test]
    fn handle_operator_vanishes_on_disk() {
        let h = handle_operator(&disk(16)).unwrap();
        assert!(h.norm().unwrap() < 1e-10);
        assert!(h.meta().projection_residual.unwrap() == 0.0);
        let info = numerical_rank(&h, TolPolicy::default()).unwrap();
        assert_eq!(info.rank, 0);
        assert!(info.gap_ratio >= 1e3);
    }

    #[test]
    fn handle_operator_of_zero_is_derivative() {
        let g = GridSpec::unit_circle(8).unwrap();
        let h = handle_operator(&BoundaryOperator::zero(g)).unwrap();
        assert_eq!(numerical_rank(&h, TolPolicy::default()).unwrap().rank, 16);
    }

    #[test]
    fn disk_kernel_is_hardy_modes() {
        let lam = disk(8);
        let kb = kernel_basis(&build_upsilon(&lam).unwrap(), TolPolicy::default(), GAP_FACTOR).unwrap();
        assert_eq!(kb.dim(), 9);
        for (k, v) in kb.vectors().iter().enumerate() {
            assert!((v.coeff(k as i64) - c(1.0, 0.0)).norm() < 1e-10, "vector {k}");
        }
        let km = kb.as_matrix();
        let gram = km.adjoint() * &km;
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - c(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn perturbed_kernel_loses_a_mode() {
        let lam = disk(8);
        let g = *lam.grid();
        let mut m = lam.matrix().clone();
        m[(g.index(2), g.index(2))] += c(0.1, 0.0);
        m[(g.index(-2), g.index(-2))] += c(0.1, 0.0);
        let pert = BoundaryOperator::new(g, m, Orientation::Positive).unwrap();
        let kb = kernel_basis(&build_upsilon(&pert).unwrap(), TolPolicy::default(), GAP_FACTOR).unwrap();
        assert_eq!(kb.dim(), 8);
    }

    #[test]
    fn zero_operator_kernel_is_everything() {
        let g = GridSpec::unit_circle(5).unwrap();
        let kb = kernel_basis(&BoundaryOperator::zero(g), TolPolicy::default(), GAP_FACTOR).unwrap();
        assert_eq!(kb.dim(), 11);
    }

    #[test]
    fn winding_examples() {
        let g = GridSpec::unit_circle(8).unwrap();
        let w = BoundaryFunction::mode(g, 1);
        let w2 = BoundaryFunction::mode(g, 2);
        let card = BoundaryFunction::from_modes(g, &[(1, c(1.0, 0.0)), (2, c(0.3, 0.0))]);
        assert_eq!(winding_number(&w, c(0.0, 0.0)).unwrap().value, 1);
        assert_eq!(winding_number(&w2, c(0.0, 0.0)).unwrap().value, 2);
        assert_eq!(winding_number(&card, c(3.0, 0.0)).unwrap().value, 0);
        assert_eq!(winding_number(&w.conj(), c(0.1, 0.2)).unwrap().value, -1);
        assert!(matches!(
            winding_number(&w, c(0.0, 1.0)),
            Err(Error::OnBoundaryCurve { .. })
        ));
    }

    #[test]
    fn winding_refines_near_curve() {
        let g = GridSpec::unit_circle(4).unwrap();
        let w = BoundaryFunction::mode(g, 1);
        let near = winding_number(&w, c(0.999, 0.0)).unwrap();
        assert_eq!(near.value, 1);
        assert!(near.points > 1024);
    }

    #[test]
    fn json_roundtrip() {
        let lam = disk(4);
        let s = serde_json::to_string(&lam).unwrap();
        let back: BoundaryOperator = serde_json::from_str(&s).unwrap();
        assert_eq!(back, lam);
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
        assert!(s.starts_with("{\"grid\":{\"modes\":4,"));
    }

    #[test]
    fn rotation_preserves_singular_values() {
        let g = GridSpec::unit_circle(6).unwrap();
        let op = BoundaryOperator::from_fn(g, Orientation::Positive, |m, n| {
            c((m * n) as f64 * 0.1 + (m - n) as f64, 0.0)
        });
        let a = op.singular_values().unwrap();
        let b = op.rotate(0.7).singular_values().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * a[0]);
        }
    }
}
