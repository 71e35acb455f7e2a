//! Winding fields, image regions and interior values recovered from the
//! kernel of `Υ`.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryFunction;
use crate::error::{Error, Result};
use crate::linalg::TolPolicy;
use crate::operator::{
    build_upsilon, check_off_curve, kernel_basis, reciprocal_multiplier, BoundaryOperator, KernelBasis,
    WindingEvaluator,
};

/// Below this the scalar least-squares problem is treated as having no
/// unique solution.
pub const DETERMINATE_THRESHOLD: f64 = 1e-6;

/// Axis-aligned box `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Bounds {
    /// Bounding box of `η(Γ)` grown by `margin` of its larger side on each
    /// side, made square.
    pub fn around(eta: &BoundaryFunction, margin: f64) -> Self {
        let s = eta.samples_on(eta.fine_size());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for v in &s {
            x0 = x0.min(v.re);
            x1 = x1.max(v.re);
            y0 = y0.min(v.im);
            y1 = y1.max(v.im);
        }
        let side = (x1 - x0).max(y1 - y0).max(1e-12) * (1.0 + 2.0 * margin);
        let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        Self {
            x0: cx - 0.5 * side,
            x1: cx + 0.5 * side,
            y0: cy - 0.5 * side,
            y1: cy + 0.5 * side,
        }
    }
}

/// Winding numbers `d(z)` at cell centres of a regular grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingField {
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `y` outer. Masked cells hold the winding number of the
    /// sampled polygon instead.
    pub values: Vec<i64>,
    /// Cells within 1.5 cell diagonals of the curve.
    pub mask: Vec<bool>,
}

impl WindingField {
    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.bounds.x1 - self.bounds.x0) / self.nx as f64,
            (self.bounds.y1 - self.bounds.y0) / self.ny as f64,
        )
    }

    pub fn center(&self, i: usize, j: usize) -> C64 {
        let (dx, dy) = self.cell_size();
        C64::new(
            self.bounds.x0 + (i as f64 + 0.5) * dx,
            self.bounds.y0 + (j as f64 + 0.5) * dy,
        )
    }

    pub fn value(&self, i: usize, j: usize) -> i64 {
        self.values[j * self.nx + i]
    }

    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.nx + i]
    }

    pub fn max_value(&self) -> i64 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn min_value(&self) -> i64 {
        self.values.iter().copied().min().unwrap_or(0)
    }

    /// Flips the sign of every value (for a negatively oriented operator).
    pub fn negated(mut self) -> Self {
        for v in &mut self.values {
            *v = -*v;
        }
        self
    }

    /// CSV with header `x,y,d`, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,d\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let z = self.center(i, j);
                out.push_str(&format!("{:.9},{:.9},{}\n", z.re, z.im, self.value(i, j)));
            }
        }
        out
    }
}

/// Nonzero-rule winding number of a closed polygon about `z`.
pub(crate) fn polygon_winding(poly: &[C64], z: C64) -> i64 {
    let mut w = 0i64;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k] - z, poly[(k + 1) % n] - z);
        let cross = a.re * b.im - a.im * b.re;
        if a.im <= 0.0 {
            if b.im > 0.0 && cross > 0.0 {
                w += 1;
            }
        } else if b.im <= 0.0 && cross < 0.0 {
            w -= 1;
        }
    }
    w
}

/// `d(z)` on an `n × n` grid over `bounds`. Cells whose centre lies within
/// 1.5 cell diagonals of `η(Γ)` are masked.
pub fn winding_field(eta: &BoundaryFunction, bounds: Bounds, n: usize) -> WindingField {
    let (nx, ny) = (n.max(1), n.max(1));
    let evaluator = WindingEvaluator::new(eta);
    let poly = evaluator.base_samples().to_vec();
    let mut field = WindingField {
        bounds,
        nx,
        ny,
        values: Vec::new(),
        mask: Vec::new(),
    };
    let (dx, dy) = field.cell_size();
    let guard = 1.5 * dx.hypot(dy);
    let rows: Vec<Vec<(i64, bool)>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            (0..nx)
                .map(|i| {
                    let z = field.center(i, j);
                    let near = poly.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min) < guard;
                    if near {
                        return (polygon_winding(&poly, z), true);
                    }
                    match evaluator.winding(z) {
                        Ok(w) => (w.value, false),
                        Err(_) => (polygon_winding(&poly, z), true),
                    }
                })
                .collect()
        })
        .collect();
    for row in rows {
        for (v, m) in row {
            field.values.push(v);
            field.mask.push(m);
        }
    }
    field
}

/// The set `{d > 0}` on a winding field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionImage {
    pub field: WindingField,
    /// Unmasked cells with `d > 0`.
    pub interior_cells: usize,
    /// Masked cells, counted with weight ½.
    pub boundary_cells: usize,
    pub area: f64,
    /// Closed polylines separating `d > 0` from `d <= 0`.
    pub boundary: Vec<Vec<[f64; 2]>>,
    /// Some unmasked cell has `d >= 2`.
    pub multivalent: bool,
}

pub fn image_region(field: WindingField) -> Result<RegionImage> {
    let inside = |k: usize| field.values[k] > 0;
    if !(0..field.values.len()).any(inside) {
        return Err(Error::EmptyRegion);
    }
    let mut interior = 0usize;
    let mut boundary = 0usize;
    let mut multivalent = false;
    for k in 0..field.values.len() {
        if field.mask[k] {
            boundary += 1;
        } else if field.values[k] > 0 {
            interior += 1;
            multivalent |= field.values[k] >= 2;
        }
    }
    let (dx, dy) = field.cell_size();
    let area = (interior as f64 + 0.5 * boundary as f64) * dx * dy;
    let polylines = contour(&field);
    Ok(RegionImage {
        interior_cells: interior,
        boundary_cells: boundary,
        area,
        boundary: polylines,
        multivalent,
        field,
    })
}

/// Marching squares on the indicator `d > 0` sampled at cell centres.
/// Saddles are split so that the two inside corners stay apart.
fn contour(field: &WindingField) -> Vec<Vec<[f64; 2]>> {
    let (nx, ny) = (field.nx, field.ny);
    // Pad with an outside ring so every contour closes.
    let b = |i: i64, j: i64| -> bool {
        if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
            false
        } else {
            field.value(i as usize, j as usize) > 0
        }
    };
    // Edge keys: (i, j, 0) horizontal edge from corner (i,j) to (i+1,j);
    // (i, j, 1) vertical edge from (i,j) to (i,j+1).
    type Key = (i64, i64, u8);
    let mut next: HashMap<Key, Key> = HashMap::new();
    for j in -1..ny as i64 {
        for i in -1..nx as i64 {
            let c = [b(i, j), b(i + 1, j), b(i + 1, j + 1), b(i, j + 1)];
            let bottom = (i, j, 0u8);
            let right = (i + 1, j, 1u8);
            let top = (i, j + 1, 0u8);
            let left = (i, j, 1u8);
            let code = c.iter().enumerate().fold(0u8, |acc, (k, &v)| acc | ((v as u8) << k));
            // Segments oriented with the inside on the left.
            let segs: &[(Key, Key)] = match code {
                0 | 15 => &[],
                1 => &[(left, bottom)],
                2 => &[(bottom, right)],
                3 => &[(left, right)],
                4 => &[(right, top)],
                5 => &[(left, bottom), (right, top)],
                6 => &[(bottom, top)],
                7 => &[(left, top)],
                8 => &[(top, left)],
                9 => &[(top, bottom)],
                10 => &[(bottom, right), (top, left)],
                11 => &[(top, right)],
                12 => &[(right, left)],
                13 => &[(right, bottom)],
                14 => &[(bottom, left)],
                _ => unreachable!(),
            };
            for &(a, bb) in segs {
                next.insert(a, bb);
            }
        }
    }
    let point = |k: Key| -> [f64; 2] {
        let z = field.center(0, 0);
        let (dx, dy) = field.cell_size();
        let (x, y) = match k.2 {
            0 => (k.0 as f64 + 0.5, k.1 as f64),
            _ => (k.0 as f64, k.1 as f64 + 0.5),
        };
        [z.re + x * dx, z.im + y * dy]
    };
    let mut starts: Vec<Key> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        let mut line = Vec::new();
        let mut k = s;
        while seen.insert(k) {
            line.push(point(k));
            match next.get(&k) {
                Some(&n) => k = n,
                None => break,
            }
        }
        if line.len() > 1 {
            out.push(line);
        }
    }
    out
}

/// Solution of the scalar problem `min_c ‖Υ((ζ − c e)/(η − z e))‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorValue {
    pub value: C64,
    /// `‖Υ_{η,z}ζ − c Υ_{η,z}e‖` relative to `‖Υ‖ · max|1/(η − z)| · ‖ζ‖`.
    pub residual: f64,
    /// `‖Υ_{η,z}e‖ / (‖Υ‖ · ‖P_N(1/(η − z))‖)`.
    pub conditioning: f64,
    pub determinate: bool,
}

/// Shares `Υ` and its norm across many evaluations.
pub struct InteriorEvaluator {
    upsilon: BoundaryOperator,
    norm: f64,
}

impl InteriorEvaluator {
    pub fn new(lambda: &BoundaryOperator) -> Result<Self> {
        let upsilon = build_upsilon(lambda)?;
        let norm = upsilon.norm()?;
        Ok(Self { upsilon, norm })
    }

    pub fn upsilon(&self) -> &BoundaryOperator {
        &self.upsilon
    }

    pub fn evaluate(&self, zeta: &BoundaryFunction, eta: &BoundaryFunction, z: C64) -> Result<InteriorValue> {
        check_off_curve(eta, z)?;
        let unit = BoundaryFunction::unit(*eta.grid());
        let mult = reciprocal_multiplier(eta, z)?;
        let r = mult.apply(&unit)?;
        let a = self.upsilon.apply(&r)?;
        let b = self.upsilon.apply(&mult.apply(zeta)?)?;
        let a2 = a.norm() * a.norm();
        let conditioning = a.norm() / (self.norm * r.norm()).max(f64::MIN_POSITIVE);
        let determinate = conditioning >= DETERMINATE_THRESHOLD;
        let value = if determinate { a.inner(&b) / a2 } else { C64::new(0.0, 0.0) };
        let res = (&b - &a.scale(value)).norm();
        let scale = self.norm / eta.distance_to(z) * zeta.norm().max(f64::MIN_POSITIVE);
        Ok(InteriorValue {
            value,
            residual: res / scale.max(f64::MIN_POSITIVE),
            conditioning,
            determinate,
        })
    }
}

/// One-off [`InteriorEvaluator::evaluate`]. `kb` fixes the grid and is
/// checked to contain `ζ` and `η`.
pub fn evaluate_interior(
    lambda: &BoundaryOperator,
    kb: &KernelBasis,
    zeta: &BoundaryFunction,
    eta: &BoundaryFunction,
    z: C64,
) -> Result<InteriorValue> {
    for f in [zeta, eta] {
        let distance = kb.relative_distance(f)?;
        if distance > 1e-6 {
            return Err(Error::NotInKernel { distance });
        }
    }
    InteriorEvaluator::new(lambda)?.evaluate(zeta, eta, z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub grid: usize,
    /// Margin around the curve, relative to its extent.
    pub margin: f64,
    /// Coordinate to use instead of automatic selection.
    pub eta: Option<BoundaryFunction>,
    pub kernel_policy: TolPolicy,
    pub kernel_gap: f64,
    /// Interior points at which the kernel basis is evaluated.
    pub samples: usize,
    /// Resolution of the field used to screen candidates.
    pub screen_grid: usize,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            grid: 256,
            margin: 0.15,
            eta: None,
            kernel_policy: TolPolicy::default(),
            kernel_gap: 1e3,
            samples: 8,
            screen_grid: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteriorSample {
    pub z: C64,
    /// One value per kernel basis element, in basis order.
    pub values: Vec<C64>,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub coordinate: BoundaryFunction,
    /// The coordinate's curve is simple with winding 1 about its inside.
    pub univalent: bool,
    pub region: RegionImage,
    pub samples: Vec<InteriorSample>,
}

/// Candidate coordinates: single kernel elements, then pairwise sums, by
/// increasing bandwidth.
fn candidates(kb: &KernelBasis) -> Vec<BoundaryFunction> {
    let vs: Vec<&BoundaryFunction> = kb
        .vectors()
        .iter()
        .filter(|v| {
            // FEM kernels leave rounding-level noise on the constant.
            let total = v.norm() * v.norm();
            total - v.coeff(0).norm_sqr() > 1e-6 * total
        })
        .take(6)
        .collect();
    let mut out: Vec<BoundaryFunction> = vs.iter().map(|v| (*v).clone()).collect();
    for a in 0..vs.len() {
        for b in a + 1..vs.len() {
            out.push(vs[a] + &vs[b].scale(C64::new(0.3, 0.0)));
        }
    }
    out.sort_by_key(|v| v.bandwidth());
    out
}

fn oriented_field(lambda: &BoundaryOperator, eta: &BoundaryFunction, bounds: Bounds, n: usize) -> WindingField {
    let f = winding_field(eta, bounds, n);
    if lambda.orientation().sign() < 0.0 {
        f.negated()
    } else {
        f
    }
}

fn is_univalent(field: &WindingField) -> bool {
    let mut one = false;
    for (k, &v) in field.values.iter().enumerate() {
        if field.mask[k] {
            continue;
        }
        match v {
            0 => {}
            1 => one = true,
            _ => return false,
        }
    }
    one
}

/// Picks a coordinate from `Ker Υ` (or uses the configured one), computes the
/// region `{d > 0}` and evaluates the kernel basis at a few interior points.
/// A simple winding-1 curve is preferred; failing that the first curve with a
/// nonempty region is used and reported as not univalent.
pub fn reconstruct(lambda: &BoundaryOperator, cfg: &ReconstructConfig) -> Result<Reconstruction> {
    let evaluator = InteriorEvaluator::new(lambda)?;
    let kb = kernel_basis(evaluator.upsilon(), cfg.kernel_policy, cfg.kernel_gap)?;
    if kb.dim() < 2 {
        return Err(Error::NoUnivalentCandidate);
    }
    let eta = match &cfg.eta {
        Some(e) => {
            lambda.grid().ensure_same(e.grid())?;
            e.clone()
        }
        None => {
            let mut fallback = None;
            let mut chosen = None;
            for c in candidates(&kb) {
                let f = oriented_field(lambda, &c, Bounds::around(&c, cfg.margin), cfg.screen_grid);
                if is_univalent(&f) {
                    chosen = Some(c);
                    break;
                }
                if fallback.is_none() && f.max_value() > 0 {
                    fallback = Some(c);
                }
            }
            chosen.or(fallback).ok_or(Error::NoUnivalentCandidate)?
        }
    };
    let field = oriented_field(lambda, &eta, Bounds::around(&eta, cfg.margin), cfg.grid);
    let univalent = is_univalent(&field);
    let region = image_region(field)?;

    let field = &region.field;
    let inside: Vec<(usize, usize)> = (0..field.ny)
        .flat_map(|j| (0..field.nx).map(move |i| (i, j)))
        .filter(|&(i, j)| !field.masked(i, j) && field.value(i, j) == 1)
        .collect();
    let mut samples = Vec::new();
    if !inside.is_empty() && cfg.samples > 0 {
        let stride = (inside.len() / cfg.samples).max(1);
        for &(i, j) in inside.iter().skip(stride / 2).step_by(stride).take(cfg.samples) {
            let z = field.center(i, j);
            let mut values = Vec::with_capacity(kb.dim());
            let mut worst = 0.0f64;
            for v in kb.vectors() {
                let r = evaluator.evaluate(v, &eta, z)?;
                worst = worst.max(r.residual);
                values.push(r.value);
            }
            samples.push(InteriorSample {
                z,
                values,
                max_residual: worst,
            });
        }
    }
    Ok(Reconstruction {
        coordinate: eta,
        univalent,
        region,
        samples,
    })
}
