//! Checks of the seven characterization conditions on a candidate operator.
//!
//! Every check returns a [`ConditionRecord`] rather than an error: failures
//! are data and carry the witness that produced them. Condition iii is not
//! finitely decidable and is replaced by a stability surrogate over a family
//! of truncations; condition ii is checked by seeded sampling.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::boundary::{analyze, BoundaryFunction, GridSpec};
use crate::error::{Error, Result};
use crate::linalg::TolPolicy;
use crate::operator::{
    build_upsilon, handle_operator, kernel_basis, restricted_rank, upsilon_eta_z, BoundaryOperator,
    KernelBasis, WindingEvaluator,
};
use crate::topology::max_handle_rank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    SurrogatePass,
    SurrogateFail,
    Skipped,
    Inconclusive,
}

impl Status {
    pub fn is_pass(self) -> bool {
        matches!(self, Status::Pass | Status::SurrogatePass)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// No condition failed, but some could not be decided.
    Uncertain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub id: String,
    pub status: Status,
    pub residual: f64,
    pub tolerance: f64,
    pub details: Value,
}

impl ConditionRecord {
    fn new(id: &str, status: Status, residual: f64, tolerance: f64, details: Value) -> Self {
        Self {
            id: id.into(),
            status,
            residual: finite(residual),
            tolerance,
            details,
        }
    }

    /// How many times the tolerance the residual is.
    pub fn violation(&self) -> f64 {
        if self.tolerance > 0.0 {
            self.residual / self.tolerance
        } else {
            f64::MAX
        }
    }
}

/// JSON has no infinities.
fn finite(x: f64) -> f64 {
    if x.is_nan() {
        f64::MAX
    } else {
        x.clamp(-f64::MAX, f64::MAX)
    }
}

/// Tolerances and sampling parameters for [`full_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    /// Relative residual tolerance for conditions i, ii, vi and vii.
    pub tol: f64,
    /// Threshold policy for `Ker Υ`.
    pub kernel_policy: TolPolicy,
    /// Gap required around the kernel threshold.
    pub kernel_gap: f64,
    /// Threshold policy for the handle operator.
    pub handle_policy: TolPolicy,
    /// Gap required around the handle rank.
    pub handle_gap: f64,
    /// Relative threshold for `rank(Υ_{η,z} Ker Υ)`.
    pub rank_eps: f64,
    /// Boundary points for condition vi.
    pub points: usize,
    /// Offset of the test points from the curve, relative to its diameter.
    pub vi_offset: f64,
    /// Required ratio between the two sides in condition vi.
    pub vi_separation: f64,
    /// Random quotient pairs for condition ii.
    pub trials: usize,
    /// Side of the square grid of test points for condition v.
    pub z_grid: usize,
    /// Number of kernel elements used as `η` in condition v.
    pub etas: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            kernel_policy: TolPolicy::default(),
            kernel_gap: 1e3,
            handle_policy: TolPolicy::default(),
            handle_gap: 1e3,
            rank_eps: 1e-12,
            points: 8,
            vi_offset: 0.05,
            vi_separation: 10.0,
            trials: 24,
            z_grid: 7,
            etas: 3,
            seed: 0,
        }
    }
}

impl CheckConfig {
    /// Settings for discretized operators whose forward error is about `err`
    /// (relative, on low modes).
    pub fn discretized(err: f64) -> Self {
        let err = err.max(1e-8);
        Self {
            tol: 10.0 * err,
            kernel_policy: TolPolicy::LeadingGap { min_ratio: 10.0 },
            kernel_gap: 10.0,
            handle_policy: TolPolicy::Gap {
                min_ratio: 10.0,
                max_rank: 8,
            },
            handle_gap: 10.0,
            rank_eps: err,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub verdict: Verdict,
    /// First condition that failed, in order i to vii.
    pub first_failure: Option<String>,
    pub grid: GridSpec,
    pub kernel_dim: Option<usize>,
    pub kernel_tol: Option<f64>,
    pub config: CheckConfig,
    pub conditions: Vec<ConditionRecord>,
}

impl CharacterizationReport {
    pub fn condition(&self, id: &str) -> Option<&ConditionRecord> {
        self.conditions.iter().find(|c| c.id == id)
    }
}

fn verdict_of(records: &[ConditionRecord]) -> (Verdict, Option<String>) {
    if let Some(r) = records.iter().find(|r| r.status == Status::Fail) {
        return (Verdict::Fail, Some(r.id.clone()));
    }
    let undecided = records
        .iter()
        .any(|r| matches!(r.status, Status::SurrogateFail | Status::Inconclusive));
    (if undecided { Verdict::Uncertain } else { Verdict::Pass }, None)
}

/// A family of operators at increasing truncation, for the condition iii
/// surrogate.
pub trait OperatorFamily: Sync {
    fn at(&self, modes: usize) -> Result<BoundaryOperator>;
    /// Truncation orders to compare, ascending.
    fn levels(&self) -> Vec<usize>;
    fn name(&self) -> String;
}

/// Operators known in closed form at any truncation; compared at `N`,
/// `N + 8`, `N + 16`.
pub struct ClosedForm<F: Fn(GridSpec) -> BoundaryOperator + Sync> {
    pub grid: GridSpec,
    pub build: F,
}

impl<F: Fn(GridSpec) -> BoundaryOperator + Sync> OperatorFamily for ClosedForm<F> {
    fn at(&self, modes: usize) -> Result<BoundaryOperator> {
        Ok((self.build)(self.grid.with_modes(modes)?))
    }

    fn levels(&self) -> Vec<usize> {
        let n = self.grid.modes;
        vec![n, n + 8, n + 16]
    }

    fn name(&self) -> String {
        "closed_form".into()
    }
}

/// Principal truncations of a fixed matrix: `N − 2s`, `N − s`, `N` with
/// `s = min(8, (N − 4) / 2)`.
pub struct Truncations<'a>(pub &'a BoundaryOperator);

impl OperatorFamily for Truncations<'_> {
    fn at(&self, modes: usize) -> Result<BoundaryOperator> {
        self.0.truncate(modes)
    }

    fn levels(&self) -> Vec<usize> {
        let n = self.0.grid().modes;
        let s = 8.min((n - GridSpec::MIN_MODES) / 2);
        if s == 0 {
            vec![n]
        } else {
            vec![n - 2 * s, n - s, n]
        }
    }

    fn name(&self) -> String {
        "truncations".into()
    }
}

fn kernel_of(lambda: &BoundaryOperator, cfg: &CheckConfig) -> Result<(BoundaryOperator, KernelBasis)> {
    let ups = build_upsilon(lambda)?;
    let kb = kernel_basis(&ups, cfg.kernel_policy, cfg.kernel_gap)?;
    Ok((ups, kb))
}

/// Kernel vectors other than (multiples of) the unit function, smoothest
/// first.
fn nonconstant(kb: &KernelBasis) -> Vec<&BoundaryFunction> {
    kb.vectors()
        .iter()
        .filter(|v| {
            let total: f64 = v.coeffs().iter().map(|c| c.norm_sqr()).sum();
            total - v.coeff(0).norm_sqr() > 1e-12 * total
        })
        .collect()
}

/// Condition i: `e ∈ Ker Υ` and the kernel is closed under products.
pub fn check_i(upsilon: &BoundaryOperator, kb: &KernelBasis, tol: f64) -> ConditionRecord {
    let g = *upsilon.grid();
    let norm = kb.operator_norm().max(f64::MIN_POSITIVE);
    let unit_res = match upsilon.apply(&BoundaryFunction::unit(g)) {
        Ok(v) => v.norm() / norm,
        Err(e) => return error_record("i", &e, tol),
    };
    let vs = kb.vectors();
    let mut worst = (0.0f64, 0usize, 0usize);
    let mut truncated = 0usize;
    for i in 0..vs.len() {
        for j in i..vs.len() {
            let p = match vs[i].multiply(&vs[j]) {
                Ok(p) => p,
                Err(e) => return error_record("i", &e, tol),
            };
            if p.truncation_loss.is_some() {
                truncated += 1;
            }
            // Relative to the factors: products that fall mostly beyond the
            // truncation are rounding noise.
            let d = kb.relative_distance(&p.value).unwrap_or(f64::MAX) * p.value.norm()
                / (vs[i].norm() * vs[j].norm()).max(f64::MIN_POSITIVE);
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    let residual = unit_res.max(worst.0);
    let status = if residual <= tol { Status::Pass } else { Status::Fail };
    let mut details = json!({
        "unit_residual": finite(unit_res),
        "pairs": vs.len() * (vs.len() + 1) / 2,
        "pairs_truncated": truncated,
        "worst_product_distance": finite(worst.0),
    });
    if status == Status::Fail && worst.0 >= unit_res {
        details["witness"] = json!({
            "pair": [worst.1, worst.2],
            "left": vs[worst.1],
            "right": vs[worst.2],
        });
    }
    ConditionRecord::new("i", status, residual, tol, details)
}

fn error_record(id: &str, e: &Error, tol: f64) -> ConditionRecord {
    let status = match e {
        Error::RankAmbiguous { .. } | Error::Linalg(_) | Error::NoCoordinateCandidate { .. } => Status::Inconclusive,
        _ => Status::Fail,
    };
    ConditionRecord::new(id, status, f64::MAX, tol, json!({ "error": e.to_string() }))
}

fn random_c64(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

/// Truncation of sampled values to the grid, or `None` when more than `tol`
/// of the energy lies beyond it.
fn resolved(samples: &[C64], g: GridSpec, tol: f64) -> Option<BoundaryFunction> {
    let wide = (samples.len() / 2 - 1).min(4 * g.modes);
    let c = analyze(samples, wide);
    let total: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    let kept = c[wide - g.modes..=wide + g.modes].to_vec();
    let inside: f64 = kept.iter().map(|x| x.norm_sqr()).sum();
    if total - inside > tol * tol * total {
        return None;
    }
    BoundaryFunction::from_coeffs(g, kept).ok()
}

/// Condition ii by seeded falsification. Quotients `q = ζ₁/ζ₂` of kernel
/// elements with `ζ₂` bounded away from zero are tested against
/// `P(w) = w^p` and `w^p + c w`, `p = 2..4`: whenever `P(q)` lies in the span
/// so must `q`.
pub fn check_ii(kb: &KernelBasis, cfg: &CheckConfig) -> ConditionRecord {
    let tol = cfg.tol;
    let g = *kb.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vs = kb.vectors();
    let mut pairs: Vec<(BoundaryFunction, BoundaryFunction, String)> = Vec::new();
    let m = vs.len().min(6);
    for a in 0..m {
        for b in 0..m {
            if a != b {
                pairs.push((vs[a].clone(), vs[b].clone(), format!("basis {a}/{b}")));
            }
        }
    }
    let unit = BoundaryFunction::unit(g);
    for t in 0..cfg.trials {
        if vs.is_empty() {
            break;
        }
        let num: Vec<C64> = (0..vs.len()).map(|_| random_c64(&mut rng)).collect();
        let spread = 0.5 / vs.len() as f64;
        let small: Vec<C64> = (0..vs.len()).map(|_| random_c64(&mut rng) * spread).collect();
        let den = kb.project(&(&unit + &kb.combine(&small))).unwrap_or_else(|_| unit.clone());
        pairs.push((kb.combine(&num), den, format!("random {t}")));
    }

    let fine = 8 * g.size().max(64);
    let mut tested = 0usize;
    let mut vacuous = 0usize;
    let mut worst = 0.0f64;
    let mut witness = Value::Null;
    'pairs: for (z1, z2, label) in &pairs {
        let s1 = z1.samples_on(fine);
        let s2 = z2.samples_on(fine);
        let max2 = s2.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let min2 = s2.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if max2 == 0.0 || min2 < 0.05 * max2 {
            continue;
        }
        let q: Vec<C64> = s1.iter().zip(&s2).map(|(a, b)| a / b).collect();
        let Some(q_fn) = resolved(&q, g, tol) else {
            continue;
        };
        let q_dist = kb.relative_distance(&q_fn).unwrap_or(f64::MAX);
        let c = random_c64(&mut rng);
        for p in 2..=4 {
            for with_linear in [false, true] {
                let pq: Vec<C64> = q
                    .iter()
                    .map(|v| v.powu(p) + if with_linear { c * v } else { C64::new(0.0, 0.0) })
                    .collect();
                tested += 1;
                // Beyond the truncation nothing can be concluded.
                let Some(pq_fn) = resolved(&pq, g, tol) else {
                    vacuous += 1;
                    continue;
                };
                let p_dist = kb.relative_distance(&pq_fn).unwrap_or(f64::MAX);
                if p_dist > tol {
                    vacuous += 1;
                    continue;
                }
                worst = worst.max(q_dist);
                if q_dist > tol && witness.is_null() {
                    witness = json!({
                        "pair": label,
                        "polynomial": if with_linear { format!("w^{p} + ({:.6} + {:.6}i) w", c.re, c.im) } else { format!("w^{p}") },
                        "polynomial_distance": finite(p_dist),
                        "quotient_distance": finite(q_dist),
                        "quotient": q_fn,
                    });
                    break 'pairs;
                }
            }
        }
    }
    let status = if witness.is_null() { Status::Pass } else { Status::Fail };
    let mut details = json!({
        "method": "sampled falsification",
        "pairs": pairs.len(),
        "tests": tested,
        "vacuous": vacuous,
        "seed": cfg.seed,
    });
    if !witness.is_null() {
        details["witness"] = witness;
    }
    ConditionRecord::new("ii", status, worst, tol, details)
}

/// Surrogate for condition iii: kernel dimensions over the family's levels
/// must grow by a constant 1 or 2 per added mode, and each kernel must embed
/// in the next with subspace angle at most `1e-6`.
pub fn check_iii_surrogate(family: &dyn OperatorFamily, cfg: &CheckConfig) -> ConditionRecord {
    const ANGLE_TOL: f64 = 1e-6;
    let levels = family.levels();
    let mut dims = Vec::new();
    let mut bases = Vec::new();
    for &n in &levels {
        match family.at(n).and_then(|op| kernel_of(&op, cfg)) {
            Ok((_, kb)) => {
                dims.push(kb.dim());
                bases.push(kb);
            }
            Err(e) => {
                return ConditionRecord::new(
                    "iii",
                    Status::SurrogateFail,
                    f64::MAX,
                    ANGLE_TOL,
                    json!({ "family": family.name(), "levels": levels, "dims": dims, "error": e.to_string() }),
                );
            }
        }
    }
    let mut angles = Vec::new();
    for w in bases.windows(2) {
        angles.push(w[1].max_angle_from(&w[0]).unwrap_or(f64::MAX));
    }
    let max_angle = angles.iter().copied().fold(0.0, f64::max);
    let slopes: Vec<f64> = dims
        .windows(2)
        .zip(levels.windows(2))
        .map(|(d, l)| (d[1] as f64 - d[0] as f64) / (l[1] - l[0]) as f64)
        .collect();
    let consistent = !slopes.is_empty()
        && slopes.iter().all(|&s| s == slopes[0])
        && (slopes[0] == 1.0 || slopes[0] == 2.0);
    let status = if consistent && max_angle <= ANGLE_TOL {
        Status::SurrogatePass
    } else {
        Status::SurrogateFail
    };
    ConditionRecord::new(
        "iii",
        status,
        max_angle,
        ANGLE_TOL,
        json!({
            "family": family.name(),
            "levels": levels,
            "dims": dims,
            "dims_per_mode": slopes,
            "angles": angles.iter().map(|a| finite(*a)).collect::<Vec<_>>(),
        }),
    )
}

/// Condition iv: the handle operator has small even rank behind a clear gap.
pub fn check_iv(lambda: &BoundaryOperator, cfg: &CheckConfig) -> ConditionRecord {
    let h = match handle_operator(lambda) {
        Ok(h) => h,
        Err(e) => return error_record("iv", &e, 1.0 / cfg.handle_gap),
    };
    let size = lambda.grid().size();
    let sv = match h.singular_values() {
        Ok(s) => s,
        Err(e) => return error_record("iv", &e, 1.0 / cfg.handle_gap),
    };
    let policy = match cfg.handle_policy {
        TolPolicy::Gap { min_ratio, max_rank } => TolPolicy::Gap {
            min_ratio,
            max_rank: max_rank.min(max_handle_rank(size)),
        },
        p => p,
    };
    let leading: Vec<f64> = sv.iter().take(8).copied().collect();
    let base = json!({
        "projection_residual": h.meta().projection_residual,
        "reference_norm": h.meta().reference_norm,
        "leading_singular_values": leading,
    });
    let info = match crate::linalg::decide_rank(&sv, h.meta().reference_norm.unwrap_or(0.0), size, policy) {
        Ok(i) => i,
        Err(e) => {
            let mut d = base;
            d["error"] = json!(e.to_string());
            return ConditionRecord::new("iv", Status::Fail, f64::MAX, 1.0 / cfg.handle_gap, d);
        }
    };
    let r = info.rank;
    let bounded = r <= max_handle_rank(size);
    let gapped = info.gap_ratio >= cfg.handle_gap;
    let even = r % 2 == 0;
    let status = if bounded && gapped && even { Status::Pass } else { Status::Fail };
    let mut d = base;
    d["rank"] = json!(r);
    d["gap_ratio"] = json!(finite(info.gap_ratio));
    d["max_rank"] = json!(max_handle_rank(size));
    d["even"] = json!(even);
    ConditionRecord::new("iv", status, 1.0 / info.gap_ratio, 1.0 / cfg.handle_gap, d)
}

/// Test points: cell centres of a grid over the curve's bounding box (20%
/// margin), at least 5% of the diameter away from the curve.
pub fn default_test_points(eta: &BoundaryFunction, side: usize) -> Vec<C64> {
    let samples = eta.samples_on(eta.fine_size());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in &samples {
        x0 = x0.min(v.re);
        x1 = x1.max(v.re);
        y0 = y0.min(v.im);
        y1 = y1.max(v.im);
    }
    let diam = (x1 - x0).hypot(y1 - y0);
    if diam == 0.0 || side == 0 {
        return Vec::new();
    }
    let (mx, my) = (0.2 * (x1 - x0) + 0.05 * diam, 0.2 * (y1 - y0) + 0.05 * diam);
    let (x0, x1, y0, y1) = (x0 - mx, x1 + mx, y0 - my, y1 + my);
    let mut out = Vec::new();
    for j in 0..side {
        for i in 0..side {
            let z = C64::new(
                x0 + (i as f64 + 0.5) * (x1 - x0) / side as f64,
                y0 + (j as f64 + 0.5) * (y1 - y0) / side as f64,
            );
            if eta.distance_to(z) >= 0.05 * diam {
                out.push(z);
            }
        }
    }
    out
}

/// One `(η, z)` comparison of condition v.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankWinding {
    pub z: [f64; 2],
    pub rank: Option<usize>,
    pub winding: Option<i64>,
    pub note: Option<String>,
}

/// `rank(Υ_{η,z} Ker Υ)` and the oriented winding number at each `z`.
pub fn rank_vs_winding(
    lambda: &BoundaryOperator,
    upsilon: &BoundaryOperator,
    kb: &KernelBasis,
    eta: &BoundaryFunction,
    zs: &[C64],
    rank_eps: f64,
) -> Vec<RankWinding> {
    let evaluator = WindingEvaluator::new(eta);
    let sign = lambda.orientation().sign() as i64;
    let ups_norm = kb.operator_norm();
    zs.par_iter()
        .map(|&z| {
            let mut out = RankWinding {
                z: [z.re, z.im],
                rank: None,
                winding: None,
                note: None,
            };
            match evaluator.winding(z) {
                Ok(w) => out.winding = Some(sign * w.value),
                Err(e) => {
                    out.note = Some(e.to_string());
                    return out;
                }
            }
            let scale = ups_norm / eta.distance_to(z);
            match upsilon_eta_z(upsilon, eta, z)
                .and_then(|u| restricted_rank(&u, kb, TolPolicy::Absolute { tau: rank_eps * scale }))
            {
                Ok(info) => out.rank = Some(info.rank),
                Err(e) => out.note = Some(e.to_string()),
            }
            out
        })
        .collect()
}

/// Condition v: `rank(Υ_{η,z} Ker Υ)` equals the winding number for every
/// tested pair. `etas` and `zs` default to the smoothest non-constant kernel
/// elements and [`default_test_points`].
pub fn check_v(
    lambda: &BoundaryOperator,
    upsilon: &BoundaryOperator,
    kb: &KernelBasis,
    etas: Option<&[BoundaryFunction]>,
    zs: Option<&[C64]>,
    cfg: &CheckConfig,
) -> ConditionRecord {
    let default_etas: Vec<BoundaryFunction>;
    let etas = match etas {
        Some(e) => e,
        None => {
            default_etas = nonconstant(kb).into_iter().take(cfg.etas).cloned().collect();
            &default_etas
        }
    };
    let mut tested = 0usize;
    let mut skipped = 0usize;
    let mut mismatches = Vec::new();
    let mut worst = 0.0f64;
    let mut per_eta = Vec::new();
    for (k, eta) in etas.iter().enumerate() {
        let points = match zs {
            Some(z) => z.to_vec(),
            None => default_test_points(eta, cfg.z_grid),
        };
        let results = rank_vs_winding(lambda, upsilon, kb, eta, &points, cfg.rank_eps);
        let mut windings = std::collections::BTreeMap::new();
        for r in &results {
            match (r.rank, r.winding) {
                (Some(rank), Some(w)) => {
                    tested += 1;
                    *windings.entry(w).or_insert(0usize) += 1;
                    let diff = (rank as f64 - w as f64).abs();
                    if diff > 0.0 {
                        worst = worst.max(diff);
                        if mismatches.len() < 8 {
                            mismatches.push(json!({ "eta": k, "z": r.z, "rank": rank, "winding": w }));
                        }
                    }
                }
                _ => skipped += 1,
            }
        }
        per_eta.push(json!({
            "eta": k,
            "bandwidth": eta.bandwidth(),
            "points": results.len(),
            "windings": windings.into_iter().map(|(w, n)| json!([w, n])).collect::<Vec<_>>(),
        }));
    }
    let status = if tested == 0 {
        Status::Skipped
    } else if mismatches.is_empty() {
        Status::Pass
    } else {
        Status::Fail
    };
    let mut details = json!({
        "tested": tested,
        "skipped_points": skipped,
        "etas": per_eta,
    });
    if !mismatches.is_empty() {
        details["mismatches"] = json!(mismatches);
    }
    // Tolerance 0.5: a pass means exact integer equality.
    ConditionRecord::new("v", status, worst, 0.5, details)
}

/// Outcome of condition vi at one boundary point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateTest {
    pub s: f64,
    /// Number of kernel elements combined into `η_x`.
    pub combined: usize,
    pub derivative: f64,
    pub z_interior: [f64; 2],
    pub z_exterior: [f64; 2],
    /// `‖Υ_{η,z}e‖`, relative, on each side.
    pub interior_norm: f64,
    pub exterior_norm: f64,
    /// Worst relative residual of the scalar least-squares problem.
    pub lstsq_residual: f64,
    /// Solutions `c` on the interior side, one per kernel basis element.
    pub values: Vec<[f64; 2]>,
    pub vi1: bool,
    pub vi2: bool,
    pub vi3: bool,
}

/// Relative `‖Υ_{η,z} f‖`: divided by `‖Υ‖ · max|1/(η − z)| · ‖f‖`.
fn relative_image(u: &BoundaryOperator, f: &BoundaryFunction, ups_norm: f64, dist: f64) -> Result<(BoundaryFunction, f64)> {
    let img = u.apply(f)?;
    let scale = ups_norm / dist * f.norm().max(f64::MIN_POSITIVE);
    let n = img.norm() / scale;
    Ok((img, n))
}

/// Runs vi.1 to vi.3 for a given coordinate candidate `eta` at arclength `s`.
pub fn test_coordinate(
    lambda: &BoundaryOperator,
    upsilon: &BoundaryOperator,
    kb: &KernelBasis,
    eta: &BoundaryFunction,
    s: f64,
    combined: usize,
    cfg: &CheckConfig,
) -> Result<CoordinateTest> {
    let g = *kb.grid();
    let o = lambda.orientation().sign();
    let d1 = eta.derivative();
    let deriv = d1.eval(s) * o;
    let curve_scale = eta.max_abs().max(f64::MIN_POSITIVE);
    let dnorm = deriv.norm();
    // vi.1: nonzero derivative at x and no common zero of the first three
    // derivatives anywhere on the boundary.
    let d2 = d1.derivative();
    let d3 = d2.derivative();
    let m = eta.fine_size();
    let (a, b, c) = (d1.samples_on(m), d2.samples_on(m), d3.samples_on(m));
    let jet_floor = (0..m)
        .map(|k| a[k].norm().max(b[k].norm()).max(c[k].norm()))
        .fold(f64::INFINITY, f64::min);
    let wn = 2.0 * PI / g.length;
    let vi1 = dnorm > 1e-6 * curve_scale * wn && jet_floor > 1e-8 * curve_scale * wn && eta.bandwidth() > 0;

    let samples = eta.samples_on(m);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in &samples {
        x0 = x0.min(v.re);
        x1 = x1.max(v.re);
        y0 = y0.min(v.im);
        y1 = y1.max(v.im);
    }
    let diam = (x1 - x0).hypot(y1 - y0);
    let delta = cfg.vi_offset * diam;
    let p = eta.eval(s);
    let normal = if dnorm > 0.0 { deriv / dnorm * C64::new(0.0, 1.0) } else { C64::new(0.0, 1.0) };
    let ups_norm = kb.operator_norm();
    let unit = BoundaryFunction::unit(g);
    let mut sides = Vec::new();
    for sign in [1.0, -1.0] {
        let z = p + normal * (sign * delta);
        let u = upsilon_eta_z(upsilon, eta, z)?;
        let dist = eta.distance_to(z);
        let (a_img, a_norm) = relative_image(&u, &unit, ups_norm, dist)?;
        sides.push((z, u, dist, a_img, a_norm));
    }
    let (hi, lo) = if sides[0].4 >= sides[1].4 { (0, 1) } else { (1, 0) };
    let vi2 = sides[lo].4 <= cfg.tol && sides[hi].4 >= cfg.vi_separation * cfg.tol;

    // vi.3 on both sides: c solves min |Υ_{η,z}ζ − c Υ_{η,z}e|.
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for (side, (_, u, dist, a_img, _)) in sides.iter().enumerate() {
        let a2 = a_img.norm() * a_img.norm();
        for zeta in kb.vectors() {
            let (b_img, _) = relative_image(u, zeta, ups_norm, *dist)?;
            let cval = if side == hi && a2 > 0.0 { a_img.inner(&b_img) / a2 } else { C64::new(0.0, 0.0) };
            let res = &b_img - &a_img.scale(cval);
            let scale = ups_norm / dist * zeta.norm().max(f64::MIN_POSITIVE);
            worst = worst.max(res.norm() / scale);
            if side == hi {
                values.push([cval.re, cval.im]);
            }
        }
    }
    let vi3 = worst <= cfg.tol;
    Ok(CoordinateTest {
        s,
        combined,
        derivative: dnorm,
        z_interior: [sides[hi].0.re, sides[hi].0.im],
        z_exterior: [sides[lo].0.re, sides[lo].0.im],
        interior_norm: finite(sides[hi].4),
        exterior_norm: finite(sides[lo].4),
        lstsq_residual: finite(worst),
        values,
        vi1,
        vi2,
        vi3,
    })
}

/// Coordinate candidate at `s`: the unit combination of the `m` smoothest
/// non-constant kernel elements maximizing `|∂γη(s)|`.
pub fn coordinate_candidate(kb: &KernelBasis, s: f64, m: usize) -> Result<BoundaryFunction> {
    let vs: Vec<&BoundaryFunction> = nonconstant(kb).into_iter().take(m).collect();
    if vs.len() < m || m == 0 {
        return Err(Error::NoCoordinateCandidate { at: s });
    }
    let grads: Vec<C64> = vs.iter().map(|v| v.derivative().eval(s)).collect();
    let gnorm = grads.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
    if gnorm <= 1e-12 * vs.iter().map(|v| v.norm()).fold(0.0, f64::max) {
        return Err(Error::NoCoordinateCandidate { at: s });
    }
    let mut out = BoundaryFunction::zero(*kb.grid());
    for (v, g) in vs.iter().zip(&grads) {
        out = &out + &v.scale(g.conj() / gnorm);
    }
    Ok(out)
}

/// Condition vi at `cfg.points` equispaced boundary points.
pub fn check_vi(lambda: &BoundaryOperator, upsilon: &BoundaryOperator, kb: &KernelBasis, cfg: &CheckConfig) -> ConditionRecord {
    let g = *kb.grid();
    let mut tests: Vec<Value> = Vec::new();
    let mut residual = 0.0f64;
    let mut violated = false;
    let mut unresolved = 0usize;
    for k in 0..cfg.points {
        let s = k as f64 * g.length / cfg.points as f64;
        let mut chosen: Option<CoordinateTest> = None;
        let mut first: Option<CoordinateTest> = None;
        let mut note = None;
        for m in 1..=3 {
            let t = coordinate_candidate(kb, s, m)
                .and_then(|eta| test_coordinate(lambda, upsilon, kb, &eta, s, m, cfg));
            match t {
                Ok(t) => {
                    let ok = t.vi1 && t.vi2 && t.vi3;
                    if first.is_none() {
                        first = Some(t.clone());
                    }
                    // A valid coordinate (vi.1, vi.2) with no solution of the
                    // scalar equation contradicts vi.3 outright.
                    if t.vi1 && t.vi2 && !t.vi3 {
                        violated = true;
                        chosen = Some(t);
                        break;
                    }
                    if ok {
                        chosen = Some(t);
                        break;
                    }
                }
                Err(e) => {
                    note.get_or_insert(e.to_string());
                }
            }
        }
        let best = chosen.clone().or(first);
        if let Some(t) = &best {
            let r = if t.vi2 { t.exterior_norm.max(t.lstsq_residual) } else { t.exterior_norm };
            residual = residual.max(r);
        }
        if chosen.is_none() {
            unresolved += 1;
        }
        tests.push(json!({ "test": best, "note": note }));
    }
    let status = if violated {
        Status::Fail
    } else if unresolved > 0 {
        Status::Inconclusive
    } else {
        Status::Pass
    };
    ConditionRecord::new(
        "vi",
        status,
        residual,
        cfg.tol,
        json!({ "points": tests, "unresolved": unresolved }),
    )
}

/// Residual of `Λ log|ζ| = ∂γ arg ζ` for one witness; also returns the
/// number of turns of `arg ζ`.
pub fn log_arg_residual(lambda: &BoundaryOperator, zeta: &BoundaryFunction) -> Result<(f64, i64)> {
    let g = *lambda.grid();
    let m = zeta.fine_size();
    let s = zeta.samples_on(m);
    if s.iter().any(|v| v.norm() == 0.0) {
        return Err(Error::WitnessNotInvertible("witness vanishes on the boundary".into()));
    }
    let log_abs: Vec<C64> = s.iter().map(|v| C64::new(v.norm().ln(), 0.0)).collect();
    let mut phase = Vec::with_capacity(m);
    let mut acc = s[0].arg();
    phase.push(acc);
    for k in 1..m {
        acc += (s[k] / s[k - 1]).arg();
        phase.push(acc);
    }
    let total = acc + (s[0] / s[m - 1]).arg() - s[0].arg();
    let turns = (total / (2.0 * PI)).round() as i64;
    // Remove the linear part so the remainder is periodic.
    let periodic: Vec<C64> = phase
        .iter()
        .enumerate()
        .map(|(k, p)| C64::new(p - 2.0 * PI * turns as f64 * k as f64 / m as f64, 0.0))
        .collect();
    let o = lambda.orientation().sign();
    let arg_fn = BoundaryFunction::from_coeffs(g, analyze(&periodic, g.modes))?;
    let slope = BoundaryFunction::constant(g, C64::new(2.0 * PI * turns as f64 / g.length, 0.0));
    let d_arg = &(&arg_fn.derivative() + &slope) * o;
    let lhs = lambda.apply(&BoundaryFunction::from_coeffs(g, analyze(&log_abs, g.modes))?)?;
    let diff = (&lhs - &d_arg).norm();
    let den = d_arg.norm();
    Ok((if den < 1e-14 { diff } else { diff / den }, turns))
}

/// Condition vii on invertible witnesses: a constant, then `exp(αv)` and
/// `exp(iαv)` for the smoothest non-constant kernel elements `v`, projected
/// back onto the kernel span.
pub fn check_vii(lambda: &BoundaryOperator, kb: &KernelBasis, witnesses: Option<&[BoundaryFunction]>, cfg: &CheckConfig) -> ConditionRecord {
    let g = *kb.grid();
    let default: Vec<BoundaryFunction>;
    let witnesses = match witnesses {
        Some(w) => w,
        None => {
            let mut w = vec![BoundaryFunction::constant(g, C64::new(5.0, 0.0))];
            for v in nonconstant(kb).into_iter().take(3) {
                let v = v.scale(C64::new(1.0 / v.max_abs(), 0.0));
                for alpha in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let z = v.map_pointwise(|x| (alpha * x).exp());
                    w.push(kb.project(&z).unwrap_or(z));
                }
            }
            default = w;
            &default
        }
    };
    let mut residual = 0.0f64;
    let mut used = 0usize;
    let mut records = Vec::new();
    for (k, z) in witnesses.iter().enumerate() {
        let member = kb.relative_distance(z).unwrap_or(f64::MAX);
        let min_abs = z.samples_on(z.fine_size()).iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if member > cfg.tol || min_abs <= 1e-3 * z.max_abs() {
            records.push(json!({ "witness": k, "skipped": "not an invertible kernel element", "distance": finite(member) }));
            continue;
        }
        let inv = z.map_pointwise(|x| x.inv());
        let inv_dist = kb.relative_distance(&inv).unwrap_or(f64::MAX);
        if inv_dist > cfg.tol {
            records.push(json!({ "witness": k, "skipped": "inverse not in kernel", "distance": finite(inv_dist) }));
            continue;
        }
        match log_arg_residual(lambda, z) {
            Ok((r, turns)) => {
                used += 1;
                residual = residual.max(r);
                records.push(json!({ "witness": k, "residual": finite(r), "turns": turns }));
            }
            Err(e) => records.push(json!({ "witness": k, "skipped": e.to_string() })),
        }
    }
    let status = if used == 0 {
        Status::Skipped
    } else if residual <= cfg.tol {
        Status::Pass
    } else {
        Status::Fail
    };
    ConditionRecord::new("vii", status, residual, cfg.tol, json!({ "witnesses": records, "used": used }))
}

/// Runs conditions i to vii with a shared kernel basis. The condition iii
/// surrogate uses the operator's own truncations.
pub fn full_report(lambda: &BoundaryOperator, cfg: &CheckConfig) -> CharacterizationReport {
    full_report_with_family(lambda, cfg, &Truncations(lambda))
}

pub fn full_report_with_family(
    lambda: &BoundaryOperator,
    cfg: &CheckConfig,
    family: &dyn OperatorFamily,
) -> CharacterizationReport {
    let kernel = kernel_of(lambda, cfg);
    let mut conditions = Vec::with_capacity(7);
    let (kernel_dim, kernel_tol) = match &kernel {
        Ok((_, kb)) => (Some(kb.dim()), Some(kb.tol())),
        Err(_) => (None, None),
    };
    match &kernel {
        Ok((ups, kb)) => {
            conditions.push(check_i(ups, kb, cfg.tol));
            conditions.push(check_ii(kb, cfg));
            conditions.push(check_iii_surrogate(family, cfg));
            conditions.push(check_iv(lambda, cfg));
            conditions.push(check_v(lambda, ups, kb, None, None, cfg));
            conditions.push(check_vi(lambda, ups, kb, cfg));
            conditions.push(check_vii(lambda, kb, None, cfg));
        }
        Err(e) => {
            for id in ["i", "ii"] {
                conditions.push(error_record(id, e, cfg.tol));
            }
            conditions.push(check_iii_surrogate(family, cfg));
            conditions.push(check_iv(lambda, cfg));
            for id in ["v", "vi", "vii"] {
                conditions.push(error_record(id, e, cfg.tol));
            }
        }
    }
    let (verdict, first_failure) = verdict_of(&conditions);
    CharacterizationReport {
        verdict,
        first_failure,
        grid: *lambda.grid(),
        kernel_dim,
        kernel_tol,
        config: cfg.clone(),
        conditions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::dn_disk;
    use crate::operator::Orientation;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn disk(n: usize) -> BoundaryOperator {
        dn_disk(GridSpec::unit_circle(n).unwrap())
    }

    /// Diagonal operator whose `Υ` vanishes exactly on the modes in `kernel`
    /// (nonnegative modes) and is 1 on the other nonnegative modes.
    fn with_kernel(n: usize, kernel: impl Fn(i64) -> bool) -> BoundaryOperator {
        let g = GridSpec::unit_circle(n).unwrap();
        BoundaryOperator::diagonal(g, |m| {
            let a = m.unsigned_abs() as i64;
            c(if kernel(a) { a as f64 } else { a as f64 + 1.0 }, 0.0)
        })
    }

    #[test]
    fn disk_passes_condition_i() {
        let lam = disk(16);
        let (ups, kb) = kernel_of(&lam, &CheckConfig::default()).unwrap();
        let r = check_i(&ups, &kb, 1e-8);
        assert_eq!(r.status, Status::Pass);
        assert!(r.residual <= 1e-9);
    }

    #[test]
    fn coupling_two_and_minus_one_breaks_products() {
        let lam = disk(16);
        let g = *lam.grid();
        let mut m = lam.matrix().clone();
        m[(g.index(-1), g.index(2))] += c(0.05, 0.0);
        m[(g.index(1), g.index(-2))] += c(0.05, 0.0);
        let pert = BoundaryOperator::new(g, m, Orientation::Positive).unwrap();
        let (ups, kb) = kernel_of(&pert, &CheckConfig::default()).unwrap();
        let r = check_i(&ups, &kb, 1e-8);
        assert_eq!(r.status, Status::Fail);
        assert!(r.details["witness"]["pair"].is_array());
    }

    #[test]
    fn condition_ii_on_disk_and_cusp_algebra() {
        let cfg = CheckConfig::default();
        let (_, kb) = kernel_of(&disk(8), &cfg).unwrap();
        let r = check_ii(&kb, &cfg);
        assert_eq!(r.status, Status::Pass, "{}", r.details);
        // Kernel span{1, w², w³, ...}: w = w³/w² is a quotient, w² is in the
        // kernel, w is not.
        let cusp = with_kernel(8, |a| a != 1);
        let (_, kb) = kernel_of(&cusp, &cfg).unwrap();
        let r = check_ii(&kb, &cfg);
        assert_eq!(r.status, Status::Fail, "{:?}", r.details);
    }

    #[test]
    fn surrogate_on_disk_zero_and_random() {
        let cfg = CheckConfig::default();
        let fam = ClosedForm { grid: GridSpec::unit_circle(8).unwrap(), build: dn_disk };
        let r = check_iii_surrogate(&fam, &cfg);
        assert_eq!(r.status, Status::SurrogatePass, "{}", r.details);
        assert_eq!(r.details["dims"], json!([9, 17, 25]));
        assert!(r.residual <= 1e-8);

        let zero = BoundaryOperator::zero(GridSpec::unit_circle(12).unwrap());
        // Υ = i∂γ keeps only the constants at every level.
        let r = check_iii_surrogate(&Truncations(&zero), &cfg);
        assert_eq!(r.status, Status::SurrogateFail);
        assert_eq!(r.details["dims"], json!([1, 1, 1]));

        let g = GridSpec::unit_circle(12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..g.size() * g.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Real operator: M_{-m,-n} = conj(M_{m,n}).
        let rand = BoundaryOperator::from_fn(g, Orientation::Positive, |m, n| {
            let (i, j) = (g.index(m), g.index(n));
            let (ri, rj) = (g.index(-m), g.index(-n));
            let a = C64::new(raw[i * g.size() + j], raw[ri * g.size() + rj]);
            let b = C64::new(raw[ri * g.size() + rj], raw[i * g.size() + j]).conj();
            (a + b) * 0.5
        });
        assert!(rand.is_real());
        let r = check_iii_surrogate(&Truncations(&rand), &cfg);
        assert_eq!(r.status, Status::SurrogateFail);
    }

    #[test]
    fn condition_iv_examples() {
        let cfg = CheckConfig::default();
        let r = check_iv(&disk(16), &cfg);
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.details["rank"], 0);
        let r = check_iv(&BoundaryOperator::zero(GridSpec::unit_circle(16).unwrap()), &cfg);
        assert_eq!(r.status, Status::Fail);
        assert_eq!(r.details["rank"], 32);
    }

    #[test]
    fn condition_v_examples() {
        let lam = disk(16);
        let cfg = CheckConfig::default();
        let (ups, kb) = kernel_of(&lam, &cfg).unwrap();
        let g = *lam.grid();
        let card = BoundaryFunction::from_modes(g, &[(1, c(1.0, 0.0)), (2, c(0.3, 0.0))]);
        let w2 = BoundaryFunction::mode(g, 2);
        let res = rank_vs_winding(&lam, &ups, &kb, &card, &[c(0.2, 0.1), c(3.0, 0.0)], cfg.rank_eps);
        assert_eq!((res[0].rank, res[0].winding), (Some(1), Some(1)));
        assert_eq!((res[1].rank, res[1].winding), (Some(0), Some(0)));
        let res = rank_vs_winding(&lam, &ups, &kb, &w2, &[c(0.0, 0.0)], cfg.rank_eps);
        assert_eq!((res[0].rank, res[0].winding), (Some(2), Some(2)));
        assert_eq!(check_v(&lam, &ups, &kb, None, None, &cfg).status, Status::Pass);
    }

    #[test]
    fn condition_vi_examples() {
        let lam = disk(16);
        let cfg = CheckConfig::default();
        let (ups, kb) = kernel_of(&lam, &cfg).unwrap();
        let g = *lam.grid();
        let w = BoundaryFunction::mode(g, 1);
        let e = BoundaryFunction::unit(g);
        let out = upsilon_eta_z(&ups, &w, c(1.1, 0.0)).unwrap().apply(&e).unwrap();
        assert!(out.norm() <= 1e-8);
        let a = upsilon_eta_z(&ups, &w, c(0.9, 0.0)).unwrap().apply(&e).unwrap();
        assert!(a.norm() >= 0.1);
        let b = upsilon_eta_z(&ups, &w, c(0.9, 0.0)).unwrap().apply(&BoundaryFunction::mode(g, 2)).unwrap();
        let cval = a.inner(&b) / (a.norm() * a.norm());
        assert!((cval - c(0.81, 0.0)).norm() < 1e-10);
        assert!((&b - &a.scale(cval)).norm() <= 1e-8);
        let r = check_vi(&lam, &ups, &kb, &cfg);
        assert_eq!(r.status, Status::Pass, "{}", r.details);
    }

    #[test]
    fn condition_vii_examples() {
        let lam = disk(16);
        let g = *lam.grid();
        let w = BoundaryFunction::mode(g, 1);
        let (r, turns) = log_arg_residual(&lam, &w.map_pointwise(|x| x.exp())).unwrap();
        assert!(r < 1e-10 && turns == 0);
        let (r, _) = log_arg_residual(&lam, &w.map_pointwise(|x| (C64::i() * x).exp())).unwrap();
        assert!(r < 1e-10);
        let (r, _) = log_arg_residual(&lam, &BoundaryFunction::constant(g, c(5.0, 0.0))).unwrap();
        assert!(r < 1e-14);
        let cfg = CheckConfig::default();
        let (_, kb) = kernel_of(&lam, &cfg).unwrap();
        let rec = check_vii(&lam, &kb, None, &cfg);
        assert_eq!(rec.status, Status::Pass, "{}", rec.details);
    }

    #[test]
    fn disk_full_report_passes_and_is_deterministic() {
        let lam = disk(16);
        let cfg = CheckConfig::default();
        let a = full_report(&lam, &cfg);
        assert_eq!(a.verdict, Verdict::Pass, "{:#?}", a.conditions);
        let b = full_report(&lam, &cfg);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn non_real_operator_fails_everything_but_reports() {
        let g = GridSpec::unit_circle(6).unwrap();
        let op = BoundaryOperator::diagonal(g, |n| c(0.0, n as f64 + 0.5));
        let r = full_report(&op, &CheckConfig::default());
        assert_eq!(r.verdict, Verdict::Fail);
        assert_eq!(r.first_failure.as_deref(), Some("i"));
    }
}
