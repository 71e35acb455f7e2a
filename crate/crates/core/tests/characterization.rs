use dnmap::characterization::{check_i, check_ii, check_v, full_report, CheckConfig, Status, Verdict};
use dnmap::forward::dn_disk;
use dnmap::operator::{build_upsilon, kernel_basis};
use dnmap::{BoundaryOperator, GridSpec, Orientation, TolPolicy, C64};

fn perturbed(pairs: &[((i64, i64), f64)]) -> BoundaryOperator {
    let lam = dn_disk(GridSpec::unit_circle(16).unwrap());
    let g = *lam.grid();
    let mut m = lam.matrix().clone();
    for &((a, b), v) in pairs {
        m[(g.index(a), g.index(b))] += C64::new(v, 0.0);
    }
    BoundaryOperator::new(g, m, Orientation::Positive).unwrap()
}

/// Coupling modes 1 and -1 removes w from the kernel but leaves
/// span{1, w², w³, ...}, which is closed under products. The failure shows
/// up in the quotient condition, not in the product condition.
#[test]
fn coupling_one_and_minus_one_leaves_a_cusp_algebra() {
    let op = perturbed(&[((1, -1), 0.05), ((-1, 1), 0.05)]);
    let cfg = CheckConfig::default();
    let ups = build_upsilon(&op).unwrap();
    let kb = kernel_basis(&ups, TolPolicy::default(), 1e3).unwrap();
    assert_eq!(kb.dim(), 16);
    for v in kb.vectors() {
        assert!(v.coeff(1).norm() < 1e-12);
    }
    assert_eq!(check_i(&ups, &kb, cfg.tol).status, Status::Pass);
    let ii = check_ii(&kb, &cfg);
    assert_eq!(ii.status, Status::Fail);
    assert!(ii.details["witness"].is_object());
    assert_eq!(full_report(&op, &cfg).first_failure.as_deref(), Some("ii"));
}

/// Kernel span{1, w², w⁴, ...}: no quotient of kernel elements is odd, so the
/// quotient condition holds; the winding condition catches it instead.
#[test]
fn even_mode_kernel_fails_winding_rank() {
    let g = GridSpec::unit_circle(16).unwrap();
    let op = BoundaryOperator::diagonal(g, |n| {
        let a = n.unsigned_abs() as f64;
        C64::new(if n % 2 == 0 { a } else { a + 1.0 }, 0.0)
    });
    let cfg = CheckConfig::default();
    let ups = build_upsilon(&op).unwrap();
    let kb = kernel_basis(&ups, TolPolicy::default(), 1e3).unwrap();
    assert_eq!(kb.dim(), 9);
    assert_eq!(check_i(&ups, &kb, cfg.tol).status, Status::Pass);
    assert_eq!(check_ii(&kb, &cfg).status, Status::Pass);
    let v = check_v(&op, &ups, &kb, None, None, &cfg);
    assert_eq!(v.status, Status::Fail);
    assert_eq!(full_report(&op, &cfg).verdict, Verdict::Fail);
}

#[test]
fn different_seeds_only_change_sampling() {
    let op = dn_disk(GridSpec::unit_circle(10).unwrap());
    for seed in [1, 2, 3] {
        let cfg = CheckConfig { seed, ..CheckConfig::default() };
        assert_eq!(full_report(&op, &cfg).verdict, Verdict::Pass);
    }
}
