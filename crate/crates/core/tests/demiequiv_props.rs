use imprim_core::cstar::is_positive;
use imprim_core::demiequiv::{derived_properties_check, random_demi, validate_demi, DemiProfile};
use imprim_core::linalg::{rand_cvec, rank};
use imprim_core::{CMat, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_demis_pass_both_suites(seed in any::<u64>()) {
        let m = random_demi(seed, &DemiProfile::default()).unwrap();
        let r = validate_demi(&m, TOL);
        prop_assert!(r.passed(), "{}", r);
        let d = derived_properties_check(&m, 3, TOL);
        prop_assert!(d.passed(), "{}", d);
    }

    #[test]
    fn inner_product_cauchy_schwarz(seed in any::<u64>()) {
        let m = random_demi(seed, &DemiProfile::default()).unwrap();
        let fb = &m.bundle;
        let g = fb.base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x1 in 0..m.n_points() {
            for x2 in 0..m.n_points() {
                let Ok(h) = m.translation(x1, x2) else { continue };
                let m1 = rand_cvec(&mut rng, m.dims[x1]);
                let m2 = rand_cvec(&mut rng, m.dims[x2]);
                let n2 = m.norm(x2, &m2);
                let a = m.ip(x1, x2, &m1, &m2).unwrap();
                let b = m.ip(x2, x1, &m2, &m1).unwrap();
                let ab = fb.mul(h, g.inv[h], &a, &b).unwrap();
                let u = m.action.sigma[x1];
                let diff = m.ip(x1, x1, &m1, &m1).unwrap() * C64::new(n2 * n2, 0.0) - ab;
                prop_assert!(is_positive(&fb.unit_algebra(u).element(&diff), TOL));
            }
        }
    }

    #[test]
    fn inner_products_land_over_reoq(seed in any::<u64>()) {
        let m = random_demi(seed, &DemiProfile::default()).unwrap();
        for x1 in 0..m.n_points() {
            for x2 in 0..m.n_points() {
                match m.action.find_translation(x1, x2) {
                    Some(h) => prop_assert_eq!(m.rip_tensor(x1, x2).unwrap().dout, m.bundle.dims[h]),
                    None => prop_assert!(m.rip_tensor(x1, x2).is_err()),
                }
            }
        }
    }

    #[test]
    fn module_fibres_are_saturated(seed in any::<u64>()) {
        let m = random_demi(seed, &DemiProfile::default()).unwrap();
        for x in 0..m.n_points() {
            for h in 0..m.n_arrows() {
                let Some(y) = m.action.try_act(x, h) else { continue };
                let t = m.ract_tensor(x, h).unwrap();
                let mut span = CMat::zeros(m.dims[y], t.dl * t.dr);
                for i in 0..t.dl {
                    for j in 0..t.dr {
                        span.set_column(i * t.dr + j, &t.value(i, j));
                    }
                }
                prop_assert_eq!(rank(&span, TOL), m.dims[y]);
            }
        }
    }

    #[test]
    fn every_fibre_is_a_hilbert_module(seed in any::<u64>()) {
        let m = random_demi(seed, &DemiProfile::default()).unwrap();
        for x in 0..m.n_points() {
            let r = m.module_at(x).unwrap().validate(TOL, seed);
            prop_assert!(r.passed(), "{}", r);
        }
    }
}
