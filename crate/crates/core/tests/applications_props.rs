use imprim_core::applications::{
    fixture_by_name, fixture_kumjian, fixture_matrix, fixture_self, fixture_transformation_group,
    run_fixture, AutAction,
};
use imprim_core::hilbmod::compacts_space;
use imprim_core::{
    random_fell_bundle, validate_fell_bundle, BlockAlgebra, BundleProfile, CMat, CVec, FellBundle,
    FiniteGroupoid, C64,
};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn small_profile() -> BundleProfile {
    BundleProfile {
        max_arrows: 4,
        max_fibre_dim: 2,
        ..Default::default()
    }
}

/// `Z/n` acting on `M₂(ℂ)` through `Ad(diag(1, ω))^x` with `ω = e^{2πi/n}`.
fn rotation_action(n: usize) -> AutAction {
    let x = FiniteGroupoid::cyclic(n);
    let w: Vec<Vec<CMat>> = (0..n)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
            vec![CMat::from_diagonal(&CVec::from_vec(vec![
                C64::new(1.0, 0.0),
                C64::from_polar(1.0, t),
            ]))]
        })
        .collect();
    AutAction::inner(&x, &BlockAlgebra::matrices(2), &w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn self_fixture_passes(seed in any::<u64>()) {
        let fb = random_fell_bundle(seed, &BundleProfile::default()).unwrap();
        let f = fixture_self(&fb).unwrap();
        prop_assert!(validate_fell_bundle(&f.expected.bundle, TOL).passed());
        let r = run_fixture(&f, TOL);
        prop_assert!(r.passed(), "{}", r);
    }

    #[test]
    fn matrix_fixture_passes(seed in any::<u64>(), n in 1usize..=3) {
        let fb = random_fell_bundle(seed, &small_profile()).unwrap();
        let f = fixture_matrix(&fb, n).unwrap();
        let r = run_fixture(&f, TOL);
        prop_assert!(r.passed(), "{}", r);
        let want: Vec<usize> = fb.dims.iter().map(|d| n * n * d).collect();
        prop_assert_eq!(r.constructed_dims, want);
    }

    #[test]
    fn kumjian_fixture_passes_with_dimension_law(seed in any::<u64>()) {
        let fb = random_fell_bundle(seed, &small_profile()).unwrap();
        let f = fixture_kumjian(&fb).unwrap();
        let g = &fb.base;
        for h in 0..g.n_arrows() {
            let want: usize = g.arrows_with_src(g.src[h]).iter().map(|&l| fb.dims[l]).sum();
            prop_assert_eq!(f.demi.dims[h], want);
        }
        let r = run_fixture(&f, TOL);
        prop_assert!(r.passed(), "{}", r);
        for a in 0..g.n_arrows() {
            let vs = f.demi.module_at(g.unit_embed[g.src[a]]).unwrap();
            let vr = f.demi.module_at(g.unit_embed[g.rng[a]]).unwrap();
            prop_assert_eq!(r.constructed_dims[a], compacts_space(&vs, &vr, TOL).unwrap().dim());
        }
    }
}

#[test]
fn transformation_groups_of_small_order() {
    let cases: &[(usize, &[usize])] = &[
        (2, &[0]),
        (2, &[0, 1]),
        (4, &[0, 2]),
        (6, &[0, 3]),
        (6, &[0, 2, 4]),
        (3, &[0]),
    ];
    for &(n, h) in cases {
        let x = FiniteGroupoid::cyclic(n);
        for alpha in [
            AutAction::trivial(&x, &BlockAlgebra::scalars()),
            rotation_action(n),
        ] {
            let f = fixture_transformation_group(&x, h, &alpha.alg.clone(), &alpha).unwrap();
            let r = run_fixture(&f, TOL);
            assert!(r.passed(), "Z/{n} over {h:?}: {r}");
            assert_eq!(f.expected.bundle.n_arrows(), n * n / h.len());
        }
    }
    let s3 = FiniteGroupoid::symmetric3();
    let sub: Vec<usize> = (0..6).filter(|&a| s3.try_comp(a, a) == Some(0)).collect();
    let f = fixture_transformation_group(
        &s3,
        &sub[..2],
        &BlockAlgebra::scalars(),
        &AutAction::trivial(&s3, &BlockAlgebra::scalars()),
    )
    .unwrap();
    assert!(run_fixture(&f, TOL).passed());
}

#[test]
fn catalogue_names_resolve() {
    for (kind, arg) in [
        ("self", "z3"),
        ("self", "m3"),
        ("matrix", "point"),
        ("kumjian", "z3"),
        ("kumjian", "pair2+point"),
        ("transformation", "m2"),
    ] {
        let f = fixture_by_name(kind, arg, 2).unwrap();
        assert!(run_fixture(&f, TOL).passed(), "{kind} {arg}");
    }
    assert!(fixture_by_name("self", "nope", 1).is_err());
    assert!(fixture_by_name("nope", "z2", 1).is_err());
}

#[test]
fn corrupted_expected_data_is_detected() {
    let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(3));
    let mut f = fixture_self(&fb).unwrap();
    let t = f.expected.left_inner[1].as_mut().unwrap();
    t.data[0] *= C64::new(0.0, 1.0);
    let r = run_fixture(&f, TOL);
    assert!(!r.passed());
    assert!(!r.stage("expected equivalence").unwrap().passed);
}
