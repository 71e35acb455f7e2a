//! Spectral calculus on the boundary circle.
//!
//! A [`BoundaryFunction`] is a trigonometric polynomial of order `N` on a
//! circle of circumference `L`, parametrized by arclength `s`. The canonical
//! representation is the coefficient vector `c_n`, `n = -N..=N`; the sample
//! view lives on the `2N + 1` uniform points `s_k = k L / (2N + 1)` and the two
//! views are exchanged exactly by the discrete Fourier transform.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance of the realness flag on coefficients.
pub const REAL_TOL: f64 = 1e-12;

/// Default relative mean tolerance of [`BoundaryFunction::integrate`].
pub const MEAN_TOL: f64 = 1e-10;

/// Discretization of the boundary circle: truncation order and circumference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct GridSpec {
    pub modes: usize,
    pub length: f64,
}

#[derive(Deserialize)]
struct RawGrid {
    modes: usize,
    length: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.modes, raw.length)
    }
}

impl GridSpec {
    pub const MIN_MODES: usize = 4;

    pub fn new(modes: usize, length: f64) -> Result<Self> {
        if modes < Self::MIN_MODES {
            return Err(Error::InvalidGrid(format!(
                "modes = {modes}, need at least {}",
                Self::MIN_MODES
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length = {length}, need L > 0")));
        }
        Ok(Self { modes, length })
    }

    /// Unit circle, `L = 2π`.
    pub fn unit_circle(modes: usize) -> Result<Self> {
        Self::new(modes, 2.0 * PI)
    }

    pub fn with_modes(&self, modes: usize) -> Result<Self> {
        Self::new(modes, self.length)
    }

    /// Number of coefficients (and samples), `2N + 1`.
    pub fn size(&self) -> usize {
        2 * self.modes + 1
    }

    pub fn index(&self, n: i64) -> usize {
        debug_assert!(n.unsigned_abs() as usize <= self.modes);
        (n + self.modes as i64) as usize
    }

    pub fn mode_at(&self, index: usize) -> i64 {
        index as i64 - self.modes as i64
    }

    pub fn mode_numbers(&self) -> impl Iterator<Item = i64> {
        let n = self.modes as i64;
        -n..=n
    }

    /// `2π n / L`, the eigenvalue of `-i d/ds` on mode `n`.
    pub fn wavenumber(&self, n: i64) -> f64 {
        2.0 * PI * n as f64 / self.length
    }

    pub fn sample_points(&self) -> Vec<f64> {
        let m = self.size();
        (0..m).map(|k| k as f64 * self.length / m as f64).collect()
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.modes == other.modes
            && (self.length - other.length).abs() <= 1e-12 * self.length.max(other.length)
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "N={} L={}", self.modes, self.length)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Values of the trigonometric polynomial with coefficients `coeffs`
/// (`n = -N..=N`) at `m` uniform points. Exact for any `m >= 1`: modes that
/// alias onto the same point set are folded.
pub(crate) fn synthesize(coeffs: &[C64], m: usize) -> Vec<C64> {
    let modes = (coeffs.len() / 2) as i64;
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for (i, c) in coeffs.iter().enumerate() {
        let n = i as i64 - modes;
        buf[n.rem_euclid(m as i64) as usize] += c;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(m).process(&mut buf));
    buf
}

/// Coefficients `n = -modes..=modes` of the trigonometric interpolant of `m`
/// uniform samples (truncated when `m > 2 modes + 1`).
pub(crate) fn analyze(samples: &[C64], modes: usize) -> Vec<C64> {
    let m = samples.len();
    let mut buf = samples.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m).process(&mut buf));
    let scale = 1.0 / m as f64;
    let n = modes as i64;
    // Modes beyond the unaliased band (and the even-length Nyquist mode) are zero.
    let half = (m - 1) / 2;
    (-n..=n)
        .map(|k| {
            if k.unsigned_abs() as usize > half {
                C64::new(0.0, 0.0)
            } else {
                buf[k.rem_euclid(m as i64) as usize] * scale
            }
        })
        .collect()
}

/// A smooth complex function on the boundary circle, truncated to `N` modes.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFunction {
    grid: GridSpec,
    coeffs: Vec<C64>,
}

/// Result of a pointwise product.
#[derive(Clone, Debug)]
pub struct Product {
    pub value: BoundaryFunction,
    /// l2 norm of the coefficients beyond `N` that were dropped, when
    /// non-negligible relative to the full product.
    pub truncation_loss: Option<f64>,
}

impl Product {
    pub fn into_inner(self) -> BoundaryFunction {
        self.value
    }
}

impl BoundaryFunction {
    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.size() {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                grid.size(),
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn from_samples(grid: GridSpec, samples: &[C64]) -> Result<Self> {
        if samples.len() != grid.size() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.size(),
                samples.len()
            )));
        }
        Self::from_coeffs(grid, analyze(samples, grid.modes))
    }

    /// Interpolates `f(s)` at the grid's sample points.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> C64) -> Self {
        let samples: Vec<C64> = grid.sample_points().into_iter().map(f).collect();
        Self {
            grid,
            coeffs: analyze(&samples, grid.modes),
        }
    }

    /// Fourier-truncates `f(s)` using `oversample * (2N + 1)` quadrature points,
    /// which is far more accurate than interpolation for non-band-limited `f`.
    pub fn project_fn(grid: GridSpec, oversample: usize, f: impl Fn(f64) -> C64) -> Self {
        let m = grid.size() * oversample.max(1);
        let samples: Vec<C64> = (0..m)
            .map(|k| f(k as f64 * grid.length / m as f64))
            .collect();
        Self {
            grid,
            coeffs: analyze(&samples, grid.modes),
        }
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![C64::new(0.0, 0.0); grid.size()],
        }
    }

    pub fn constant(grid: GridSpec, value: C64) -> Self {
        let mut f = Self::zero(grid);
        f.coeffs[grid.modes] = value;
        f
    }

    /// The unit function `e`.
    pub fn unit(grid: GridSpec) -> Self {
        Self::constant(grid, C64::new(1.0, 0.0))
    }

    /// `exp(2π i n s / L)`.
    pub fn mode(grid: GridSpec, n: i64) -> Self {
        assert!(n.unsigned_abs() as usize <= grid.modes, "mode {n} outside {grid}");
        let mut f = Self::zero(grid);
        f.coeffs[grid.index(n)] = C64::new(1.0, 0.0);
        f
    }

    /// Builds a function from `(n, c_n)` pairs; unspecified modes are zero.
    pub fn from_modes(grid: GridSpec, terms: &[(i64, C64)]) -> Self {
        let mut f = Self::zero(grid);
        for &(n, c) in terms {
            f.coeffs[grid.index(n)] += c;
        }
        f
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    pub fn coeff(&self, n: i64) -> C64 {
        if n.unsigned_abs() as usize > self.grid.modes {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[self.grid.index(n)]
        }
    }

    pub fn samples(&self) -> Vec<C64> {
        synthesize(&self.coeffs, self.grid.size())
    }

    /// Values at `m` uniform arclength points `k L / m`.
    pub fn samples_on(&self, m: usize) -> Vec<C64> {
        synthesize(&self.coeffs, m)
    }

    /// Direct evaluation at arclength `s`.
    pub fn eval(&self, s: f64) -> C64 {
        self.grid
            .mode_numbers()
            .zip(&self.coeffs)
            .map(|(n, c)| c * C64::from_polar(1.0, self.grid.wavenumber(n) * s))
            .sum()
    }

    /// Tangential derivative with respect to arclength: `c_n -> (2π i n / L) c_n`.
    pub fn derivative(&self) -> Self {
        let coeffs = self
            .grid
            .mode_numbers()
            .zip(&self.coeffs)
            .map(|(n, c)| c * C64::new(0.0, self.grid.wavenumber(n)))
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// Antiderivative on zero-mean functions, with the default mean tolerance
    /// `1e-10 * max|f|`.
    pub fn integrate(&self) -> Result<Self> {
        self.integrate_with_tol(MEAN_TOL * self.max_abs())
    }

    pub fn integrate_with_tol(&self, mean_tol: f64) -> Result<Self> {
        let mean = self.mean().norm();
        if mean > mean_tol {
            return Err(Error::NonZeroMean { mean, tol: mean_tol });
        }
        Ok(self.integrate_unchecked())
    }

    /// `c_n -> c_n L / (2π i n)`, `c_0 -> 0`, without checking the mean.
    pub(crate) fn integrate_unchecked(&self) -> Self {
        let coeffs = self
            .grid
            .mode_numbers()
            .zip(&self.coeffs)
            .map(|(n, c)| {
                if n == 0 {
                    C64::new(0.0, 0.0)
                } else {
                    c / C64::new(0.0, self.grid.wavenumber(n))
                }
            })
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn mean(&self) -> C64 {
        self.coeffs[self.grid.modes]
    }

    /// Trigonometric interpolation onto a grid with `modes` modes (coefficients
    /// zero-padded or truncated).
    pub fn resample(&self, modes: usize) -> Result<Self> {
        let grid = self.grid.with_modes(modes)?;
        let coeffs = grid.mode_numbers().map(|n| self.coeff(n)).collect();
        Ok(Self { grid, coeffs })
    }

    /// Same coefficients on a circle of a different circumference.
    pub fn with_length(&self, length: f64) -> Result<Self> {
        Ok(Self {
            grid: GridSpec::new(self.grid.modes, length)?,
            coeffs: self.coeffs.clone(),
        })
    }

    pub fn conj(&self) -> Self {
        let coeffs = self
            .grid
            .mode_numbers()
            .map(|n| self.coeff(-n).conj())
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn re(&self) -> Self {
        let c = self.conj();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&c.coeffs)
            .map(|(a, b)| (a + b) * 0.5)
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn im(&self) -> Self {
        let c = self.conj();
        let coeffs = self
            .coeffs
            .iter()
            .zip(&c.coeffs)
            .map(|(a, b)| (a - b) / C64::new(0.0, 2.0))
            .collect();
        Self {
            grid: self.grid,
            coeffs,
        }
    }

    /// Largest violation of `c_{-n} = conj(c_n)`.
    pub fn realness_defect(&self) -> f64 {
        self.grid
            .mode_numbers()
            .map(|n| (self.coeff(-n) - self.coeff(n).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.realness_defect() <= REAL_TOL * self.sup_coeff().max(1.0)
    }

    fn sup_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Coefficient-space l2 norm, `(sum |c_n|^2)^{1/2} = ((1/L) ∫|f|^2 ds)^{1/2}`.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum modulus on an oversampled grid.
    pub fn max_abs(&self) -> f64 {
        self.samples_on(self.fine_size())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn fine_size(&self) -> usize {
        (8 * self.grid.size()).max(512)
    }

    /// Hermitian inner product `sum conj(a_n) b_n`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Pointwise product, computed alias-free on a grid of `2(2N + 1)` points
    /// and truncated back to `N` modes.
    pub fn multiply(&self, other: &Self) -> Result<Product> {
        self.grid.ensure_same(&other.grid)?;
        let m = 2 * self.grid.size();
        let a = synthesize(&self.coeffs, m);
        let b = synthesize(&other.coeffs, m);
        let prod: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let full = analyze(&prod, 2 * self.grid.modes);
        let total: f64 = full.iter().map(|c| c.norm_sqr()).sum();
        let kept_range = self.grid.modes..self.grid.modes + self.grid.size();
        let lost: f64 = full
            .iter()
            .enumerate()
            .filter(|(i, _)| !kept_range.contains(i))
            .map(|(_, c)| c.norm_sqr())
            .sum();
        let coeffs = full[kept_range].to_vec();
        let truncation_loss = (lost > 1e-24 * total.max(f64::MIN_POSITIVE)).then(|| lost.sqrt());
        Ok(Product {
            value: Self {
                grid: self.grid,
                coeffs,
            },
            truncation_loss,
        })
    }

    /// Applies `f` pointwise on an oversampled grid and truncates back to `N`
    /// modes. Used for non-polynomial maps such as `exp`, `1/ζ`, `log|ζ|`.
    pub fn map_pointwise(&self, f: impl Fn(C64) -> C64) -> Self {
        let values: Vec<C64> = self.samples_on(self.fine_size()).into_iter().map(f).collect();
        Self {
            grid: self.grid,
            coeffs: analyze(&values, self.grid.modes),
        }
    }

    /// Minimum of `|f - z|` over an oversampled grid.
    pub fn distance_to(&self, z: C64) -> f64 {
        self.samples_on(self.fine_size())
            .iter()
            .map(|v| (v - z).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest mode with a non-negligible coefficient.
    pub fn bandwidth(&self) -> usize {
        let scale = self.sup_coeff();
        self.grid
            .mode_numbers()
            .filter(|&n| self.coeff(n).norm() > 1e-10 * scale)
            .map(|n| n.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn scale(&self, a: C64) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }
}

impl Add for &BoundaryFunction {
    type Output = BoundaryFunction;

    /// Panics if the grids differ.
    fn add(self, rhs: &BoundaryFunction) -> BoundaryFunction {
        assert!(self.grid.same_as(&rhs.grid), "grid mismatch in addition");
        BoundaryFunction {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &BoundaryFunction {
    type Output = BoundaryFunction;

    /// Panics if the grids differ.
    fn sub(self, rhs: &BoundaryFunction) -> BoundaryFunction {
        assert!(self.grid.same_as(&rhs.grid), "grid mismatch in subtraction");
        BoundaryFunction {
            grid: self.grid,
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul<C64> for &BoundaryFunction {
    type Output = BoundaryFunction;

    fn mul(self, rhs: C64) -> BoundaryFunction {
        self.scale(rhs)
    }
}

impl Mul<f64> for &BoundaryFunction {
    type Output = BoundaryFunction;

    fn mul(self, rhs: f64) -> BoundaryFunction {
        self.scale(C64::new(rhs, 0.0))
    }
}

impl Neg for &BoundaryFunction {
    type Output = BoundaryFunction;

    fn neg(self) -> BoundaryFunction {
        self.scale(C64::new(-1.0, 0.0))
    }
}

#[derive(Serialize, Deserialize)]
struct BoundaryFunctionJson {
    length: f64,
    modes: usize,
    coeffs: Vec<[f64; 2]>,
}

impl Serialize for BoundaryFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        BoundaryFunctionJson {
            length: self.grid.length,
            modes: self.grid.modes,
            coeffs: self.coeffs.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BoundaryFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = BoundaryFunctionJson::deserialize(deserializer)?;
        let grid = GridSpec::new(raw.modes, raw.length).map_err(serde::de::Error::custom)?;
        let coeffs = raw.coeffs.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        BoundaryFunction::from_coeffs(grid, coeffs).map_err(serde::de::Error::custom)
    }
}
