use dnmap::forward::dn_disk;
use dnmap::operator::{build_upsilon, kernel_basis, upsilon_componentwise};
use dnmap::recon::InteriorEvaluator;
use dnmap::{BoundaryFunction, BoundaryOperator, GridSpec, Orientation, TolPolicy, C64};
use proptest::prelude::*;

const N: usize = 8;

fn grid() -> GridSpec {
    GridSpec::unit_circle(N).unwrap()
}

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

/// Functions with modes `|n| <= band`.
fn function(band: usize) -> impl Strategy<Value = BoundaryFunction> {
    prop::collection::vec(c64(), 2 * band + 1).prop_map(move |c| {
        let terms: Vec<(i64, C64)> = c
            .into_iter()
            .enumerate()
            .map(|(k, v)| (k as i64 - band as i64, v))
            .collect();
        BoundaryFunction::from_modes(grid(), &terms)
    })
}

/// Kernel elements of the disk operator: modes `0..=band`.
fn holomorphic(band: usize) -> impl Strategy<Value = BoundaryFunction> {
    prop::collection::vec(c64(), band + 1).prop_map(|c| {
        let terms: Vec<(i64, C64)> = c.into_iter().enumerate().map(|(k, v)| (k as i64, v)).collect();
        BoundaryFunction::from_modes(grid(), &terms)
    })
}

/// Real operators: the disk plus a random perturbation made to satisfy
/// `M[-m,-n] = conj(M[m,n])`, optionally rotated.
fn real_operator() -> impl Strategy<Value = BoundaryOperator> {
    let size = grid().size();
    (prop::collection::vec(c64(), size * size), 0.0..6.0f64).prop_map(move |(raw, shift)| {
        let g = grid();
        let base = dn_disk(g).rotate(shift);
        BoundaryOperator::from_fn(g, Orientation::Positive, |m, n| {
            let a = raw[g.index(m) * size + g.index(n)];
            let b = raw[g.index(-m) * size + g.index(-n)].conj();
            base.entry(m, n) + (a + b) * 0.05
        })
    })
}

fn close(a: &BoundaryFunction, b: &BoundaryFunction, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn parseval(f in function(N), m in 17usize..80) {
        let s = f.samples_on(m);
        let mean_sq: f64 = s.iter().map(|v| v.norm_sqr()).sum::<f64>() / m as f64;
        prop_assert!((mean_sq - f.norm().powi(2)).abs() <= 1e-12 * (1.0 + mean_sq));
    }

    #[test]
    fn real_operators_commute_with_conjugation(op in real_operator(), f in function(N)) {
        prop_assert!(op.is_real());
        let lhs = op.apply(&f.conj()).unwrap();
        let rhs = op.apply(&f).unwrap().conj();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn products_commute_and_associate(a in function(2), b in function(2), c in function(2)) {
        let ab = a.multiply(&b).unwrap().value;
        prop_assert!(close(&ab, &b.multiply(&a).unwrap().value, 1e-13));
        let left = ab.multiply(&c).unwrap().value;
        let right = a.multiply(&b.multiply(&c).unwrap().value).unwrap().value;
        prop_assert!(close(&left, &right, 1e-12));
    }

    #[test]
    fn upsilon_matrix_matches_componentwise_form(op in real_operator(), f in function(N)) {
        let ups = build_upsilon(&op).unwrap();
        let a = ups.apply(&f).unwrap();
        let b = upsilon_componentwise(&op, &f).unwrap();
        prop_assert!(close(&a, &b, 1e-12));
    }

    #[test]
    fn interior_values_are_linear(
        z1 in holomorphic(N),
        z2 in holomorphic(N),
        alpha in c64(),
        beta in c64(),
        r in 0.0..0.8f64,
        t in 0.0..6.28f64,
    ) {
        let lam = dn_disk(grid());
        let eval = InteriorEvaluator::new(&lam).unwrap();
        let eta = BoundaryFunction::mode(grid(), 1);
        let z = C64::from_polar(r, t);
        let combo = &z1.scale(alpha) + &z2.scale(beta);
        let v = eval.evaluate(&combo, &eta, z).unwrap();
        let v1 = eval.evaluate(&z1, &eta, z).unwrap();
        let v2 = eval.evaluate(&z2, &eta, z).unwrap();
        prop_assert!(v.determinate && v1.determinate && v2.determinate);
        prop_assert!((v.value - (alpha * v1.value + beta * v2.value)).norm() <= 1e-9);
    }
}

#[test]
fn kernel_of_rotated_disk_is_still_hardy() {
    let lam = dn_disk(grid()).rotate(0.7);
    let kb = kernel_basis(&build_upsilon(&lam).unwrap(), TolPolicy::default(), 1e3).unwrap();
    assert_eq!(kb.dim(), N + 1);
    for v in kb.vectors() {
        for n in 1..=N as i64 {
            assert!(v.coeff(-n).norm() < 1e-10);
        }
    }
}
