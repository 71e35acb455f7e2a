//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the test
//! harness so the lines always reach the output; exits nonzero on failure.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::Instant;

use dnmap::characterization::{
    coordinate_candidate, full_report, full_report_with_family, rank_vs_winding, test_coordinate, CheckConfig,
    ClosedForm, Status,
};
use dnmap::forward::{dn_disk, dn_mesh_operator, mesh_disk, mesh_torus_minus_cap};
use dnmap::io::to_json_string;
use dnmap::operator::{build_upsilon, kernel_basis, upsilon_eta_z};
use dnmap::recon::{reconstruct, ReconstructConfig};
use dnmap::topology::{topology_of, TopologyConfig};
use dnmap::{BoundaryFunction, BoundaryOperator, GridSpec, Orientation, TolPolicy, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Disk operator written out directly: mode n goes to |n|.
fn disk_oracle(n: usize) -> BoundaryOperator {
    let g = GridSpec::unit_circle(n).unwrap();
    BoundaryOperator::from_fn(g, Orientation::Positive, |m, k| {
        if m == k {
            c(m.abs() as f64, 0.0)
        } else {
            c(0.0, 0.0)
        }
    })
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let lam = dn_disk(GridSpec::unit_circle(16).unwrap());
    let same = (lam.matrix() - disk_oracle(16).matrix()).norm_max() <= 1e-14;
    let cfg = CheckConfig::default();
    let fam = ClosedForm { grid: *lam.grid(), build: dn_disk };
    let r = full_report_with_family(&lam, &cfg, &fam);
    let elapsed = t0.elapsed().as_secs_f64();
    let mut ok = same && elapsed < 5.0;
    let mut parts = Vec::new();
    for id in ["i", "iv", "v", "vi", "vii"] {
        let rec = r.condition(id).unwrap();
        let good = rec.status == Status::Pass && (id == "iv" || id == "v" || rec.residual <= 1e-8);
        ok &= good;
        parts.push(format!("{id}={:?}({:.1e})", rec.status, rec.residual));
    }
    let iii = r.condition("iii").unwrap();
    ok &= iii.status == Status::SurrogatePass;
    parts.push(format!("iii={:?} dims {}", iii.status, iii.details["dims"]));
    outcome(ok, format!("{} time {elapsed:.2}s", parts.join(" ")))
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let g = GridSpec::unit_circle(16).unwrap();
    let disk = topology_of(&disk_oracle(16), &TopologyConfig::default());
    let torus = mesh_torus_minus_cap(2.0, 1.0, 0.1)
        .and_then(|m| dn_mesh_operator(&m, g))
        .and_then(|lam| topology_of(&lam, &TopologyConfig::discretized()));
    let elapsed = t0.elapsed().as_secs_f64();
    match (disk, torus) {
        (Ok(d), Ok(t)) => {
            let ok = d.handle_rank == 0
                && d.gap_ratio >= 1e3
                && d.genus == 0
                && t.handle_rank == 2
                && t.gap_ratio >= 10.0
                && t.genus == 1
                && elapsed < 60.0;
            outcome(
                ok,
                format!(
                    "disk r={} gap {:.1e} genus {}; torus r={} gap {:.1} genus {}; time {elapsed:.1}s",
                    d.handle_rank, d.gap_ratio, d.genus, t.handle_rank, t.gap_ratio, t.genus
                ),
            )
        }
        (d, t) => outcome(false, format!("disk {:?}; torus {:?}", d.err(), t.err())),
    }
}

/// Distance from `z` to a densely sampled curve.
fn curve_distance(f: &dyn Fn(C64) -> C64, z: C64) -> f64 {
    (0..4096)
        .map(|k| (f(C64::from_polar(1.0, 2.0 * PI * k as f64 / 4096.0)) - z).norm())
        .fold(f64::INFINITY, f64::min)
}

fn criterion_3() -> Outcome {
    let lam = disk_oracle(16);
    let g = *lam.grid();
    let ups = build_upsilon(&lam).unwrap();
    let kb = kernel_basis(&ups, TolPolicy::default(), 1e3).unwrap();
    let cfg = CheckConfig::default();
    // Each coordinate with a map on the disk and a count of preimages in the
    // unit disk, derived from the polynomial's roots.
    type Map = Box<dyn Fn(C64) -> C64>;
    type Count = Box<dyn Fn(C64) -> i64>;
    let cases: Vec<(&str, BoundaryFunction, Map, Count)> = vec![
        (
            "w",
            BoundaryFunction::mode(g, 1),
            Box::new(|w| w),
            Box::new(|z: C64| (z.norm() < 1.0) as i64),
        ),
        (
            "w^2",
            BoundaryFunction::mode(g, 2),
            Box::new(|w| w * w),
            Box::new(|z: C64| if z.norm() < 1.0 { 2 } else { 0 }),
        ),
        (
            "w+0.3w^2",
            BoundaryFunction::from_modes(g, &[(1, c(1.0, 0.0)), (2, c(0.3, 0.0))]),
            Box::new(|w| w + w * w * 0.3),
            Box::new(|z: C64| {
                // Roots of 0.3 w² + w − z.
                let disc = (c(1.0, 0.0) + z * 1.2).sqrt();
                [(-1.0 + disc) / 0.6, (-1.0 - disc) / 0.6]
                    .iter()
                    .filter(|r| r.norm() < 1.0)
                    .count() as i64
            }),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, eta, map, count) in &cases {
        let mut zs = Vec::new();
        let mut expected = Vec::new();
        let mut per_region = std::collections::BTreeMap::new();
        for j in 0..40 {
            for i in 0..40 {
                let z = c(-2.0 + 4.0 * (i as f64 + 0.5) / 40.0, -2.0 + 4.0 * (j as f64 + 0.5) / 40.0);
                if curve_distance(&**map, z) < 0.05 {
                    continue;
                }
                let d = count(z);
                let n = per_region.entry(d).or_insert(0usize);
                if *n < 25 {
                    *n += 1;
                    zs.push(z);
                    expected.push(d);
                }
            }
        }
        let res = rank_vs_winding(&lam, &ups, &kb, eta, &zs, cfg.rank_eps);
        let bad = res
            .iter()
            .zip(&expected)
            .filter(|(r, &d)| r.rank != Some(d as usize) || r.winding != Some(d))
            .count();
        let enough = per_region.len() == 2 && per_region.values().all(|&n| n >= 20);
        ok &= bad == 0 && enough;
        parts.push(format!("{name}: regions {per_region:?} mismatches {bad}"));
    }
    outcome(ok, parts.join("; "))
}

/// `(1/2πi) ∮ ζ dη / (η − z)` by the trapezoid rule on 8192 points.
fn cauchy(zeta: &BoundaryFunction, eta: &BoundaryFunction, z: C64) -> C64 {
    let m = 8192;
    let d_eta = eta.derivative();
    let mut acc = c(0.0, 0.0);
    for k in 0..m {
        let s = 2.0 * PI * k as f64 / m as f64;
        acc += zeta.eval(s) * d_eta.eval(s) / (eta.eval(s) - z);
    }
    acc * (2.0 * PI / m as f64) / c(0.0, 2.0 * PI)
}

fn criterion_4() -> Outcome {
    let lam = disk_oracle(16);
    let g = *lam.grid();
    let ups = build_upsilon(&lam).unwrap();
    let kb = kernel_basis(&ups, TolPolicy::default(), 1e3).unwrap();
    let cfg = CheckConfig::default();
    let unit = BoundaryFunction::unit(g);
    let (mut worst_ext, mut worst_ratio, mut worst_res, mut worst_val) = (0.0f64, f64::MAX, 0.0f64, 0.0f64);
    for k in 0..8 {
        let s = 2.0 * PI * k as f64 / 8.0;
        let eta = coordinate_candidate(&kb, s, 1).unwrap();
        let t = test_coordinate(&lam, &ups, &kb, &eta, s, 1, &cfg).unwrap();
        let z_in = c(t.z_interior[0], t.z_interior[1]);
        let z_out = c(t.z_exterior[0], t.z_exterior[1]);
        let u_in = upsilon_eta_z(&ups, &eta, z_in).unwrap();
        let u_out = upsilon_eta_z(&ups, &eta, z_out).unwrap();
        let a = u_in.apply(&unit).unwrap();
        let ext = u_out.apply(&unit).unwrap().norm();
        worst_ext = worst_ext.max(ext);
        worst_ratio = worst_ratio.min(a.norm() / ext.max(f64::MIN_POSITIVE));
        for zeta in kb.vectors() {
            let b = u_in.apply(zeta).unwrap();
            let cval = a.inner(&b) / (a.norm() * a.norm());
            worst_res = worst_res.max((&b - &a.scale(cval)).norm());
            worst_val = worst_val.max((cval - cauchy(zeta, &eta, z_in)).norm());
        }
    }
    let ok = worst_ext <= 1e-8 && worst_ratio >= 1e6 && worst_res <= 1e-8 && worst_val <= 1e-6;
    outcome(
        ok,
        format!(
            "exterior {worst_ext:.1e}, interior/exterior >= {worst_ratio:.1e}, lstsq residual {worst_res:.1e}, value error {worst_val:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    // ∫_D |1 + 0.6w|² dA on a polar grid (midpoint in r, trapezoid in θ).
    let (nr, nt) = (400, 256);
    let mut oracle = 0.0;
    for i in 0..nr {
        let r = (i as f64 + 0.5) / nr as f64;
        for j in 0..nt {
            let w = C64::from_polar(r, 2.0 * PI * j as f64 / nt as f64);
            oracle += (c(1.0, 0.0) + w * 0.6).norm_sqr() * r;
        }
    }
    oracle *= (1.0 / nr as f64) * (2.0 * PI / nt as f64);
    let lam = disk_oracle(16);
    let eta = BoundaryFunction::from_modes(*lam.grid(), &[(1, c(1.0, 0.0)), (2, c(0.3, 0.0))]);
    let area = |n: usize| {
        let cfg = ReconstructConfig {
            grid: n,
            eta: Some(eta.clone()),
            samples: 0,
            ..Default::default()
        };
        reconstruct(&lam, &cfg).map(|r| r.region.area)
    };
    match (area(256), area(512)) {
        (Ok(a1), Ok(a2)) => {
            let e1 = (a1 - oracle).abs() / oracle;
            let change = (a2 - a1).abs() / a1;
            outcome(
                e1 <= 0.02 && change <= 0.01,
                format!("oracle {oracle:.4}, area(256) {a1:.4} (err {:.2}%), area(512) {a2:.4} (change {:.2}%)", 100.0 * e1, 100.0 * change),
            )
        }
        (a, b) => outcome(false, format!("{:?} {:?}", a.err(), b.err())),
    }
}

/// Relative Frobenius error on modes |n| <= 4 against the diagonal |n|.
fn low_mode_error(op: &BoundaryOperator) -> f64 {
    let oracle = disk_oracle(4);
    (op.matrix() - oracle.matrix()).norm_l2() / oracle.matrix().norm_l2()
}

fn criterion_6() -> Outcome {
    let g = GridSpec::unit_circle(4).unwrap();
    let mut errs = Vec::new();
    for h in [0.2, 0.1, 0.05] {
        match mesh_disk(h).and_then(|m| dn_mesh_operator(&m, g)) {
            Ok(op) => errs.push(low_mode_error(&op)),
            Err(e) => return outcome(false, format!("h={h}: {e}")),
        }
    }
    // Swirl the interior, boundary fixed.
    let swirl = |p: [f64; 3]| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        let a = 0.4 * (1.0 - r2).powi(2);
        [p[0] * a.cos() - p[1] * a.sin(), p[0] * a.sin() + p[1] * a.cos(), p[2]]
    };
    let warped = mesh_disk(0.05)
        .and_then(|m| {
            let base = dn_mesh_operator(&m, g)?;
            let w = dn_mesh_operator(&m.map_interior(swirl)?, g)?;
            Ok((w.matrix() - base.matrix()).norm_l2() / disk_oracle(4).matrix().norm_l2())
        });
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    match warped {
        Ok(change) => outcome(
            decreasing && errs[2] <= 0.05 && change <= 2.0 * errs[2],
            format!(
                "errors h=0.2,0.1,0.05: {:.2}%, {:.2}%, {:.2}%; warp change {:.2}%",
                100.0 * errs[0],
                100.0 * errs[1],
                100.0 * errs[2],
                100.0 * change
            ),
        ),
        Err(e) => outcome(false, format!("warp: {e}")),
    }
}

fn criterion_7() -> Outcome {
    let lam = disk_oracle(16);
    let g = *lam.grid();
    let mut m = lam.matrix().clone();
    m[(g.index(-1), g.index(2))] += c(0.05, 0.0);
    m[(g.index(1), g.index(-2))] += c(0.05, 0.0);
    let pert = BoundaryOperator::new(g, m, Orientation::Positive).unwrap();
    let cfg = CheckConfig::default();
    let r = full_report(&pert, &cfg);
    let worst = ["i", "v"]
        .iter()
        .filter_map(|id| r.condition(id))
        .filter(|c| c.status == Status::Fail)
        .map(|c| c.violation())
        .fold(0.0, f64::max);
    let zero = full_report(&BoundaryOperator::zero(g), &cfg);
    let iv = zero.condition("iv").unwrap().status;
    outcome(
        r.condition("i").map(|c| c.status) == Some(Status::Fail) || r.condition("v").map(|c| c.status) == Some(Status::Fail),
        format!("perturbed: verdict {:?}, first failure {:?}, violation {worst:.1e}x tol; zero operator iv {iv:?}", r.verdict, r.first_failure),
    )
    .and(worst >= 10.0 && iv == Status::Fail)
}

impl Outcome {
    fn and(mut self, cond: bool) -> Self {
        self.pass &= cond;
        self
    }
}

fn criterion_8() -> Outcome {
    let lam = disk_oracle(12);
    let cfg = CheckConfig {
        seed: 42,
        ..CheckConfig::default()
    };
    let a = to_json_string(&full_report(&lam, &cfg), Some(2)).unwrap();
    let b = to_json_string(&full_report(&lam, &cfg), Some(2)).unwrap();
    let lib_same = a == b;

    let dir = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_dnmap");
    let dn = dir.path().join("dn.json");
    let run = |args: &[&str]| Command::new(exe).args(args).output().map(|o| o.status.code());
    let solved = run(&["solve", "--surface", "disk", "--modes", "12", "--out", dn.to_str().unwrap()]);
    let mut reports = Vec::new();
    for k in 0..2 {
        let p = dir.path().join(format!("r{k}.json"));
        let _ = run(&["check", dn.to_str().unwrap(), "--report", p.to_str().unwrap(), "--seed", "42"]);
        reports.push(std::fs::read(&p).unwrap_or_default());
    }
    let cli_same = !reports[0].is_empty() && reports[0] == reports[1];
    outcome(
        lib_same && cli_same && solved.ok().flatten() == Some(0),
        format!("library reports identical: {lib_same}; CLI reports identical: {cli_same} ({} bytes)", reports[0].len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = 0;
    for (k, f) in criteria {
        let o = f();
        println!("criterion {k}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as u32;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
