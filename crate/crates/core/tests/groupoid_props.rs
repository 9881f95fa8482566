use imprim_core::groupoid::{
    imprimitivity_groupoid, leoq, reoq, validate_groupoid, validate_left_action, FiniteGroupoid,
};
use imprim_core::{random_demi, DemiProfile};
use proptest::prelude::*;

fn setup(seed: u64) -> (FiniteGroupoid, imprim_core::PrincipalAction) {
    let m = random_demi(seed, &DemiProfile::default()).expect("generator");
    (m.bundle.base.clone(), m.action.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn catalogue_groupoids_are_valid(i in 0..FiniteGroupoid::CATALOGUE.len()) {
        let g = FiniteGroupoid::named(FiniteGroupoid::CATALOGUE[i]).unwrap();
        prop_assert!(validate_groupoid(&g).passed());
    }

    #[test]
    fn imprimitivity_groupoid_is_a_groupoid(seed in any::<u64>()) {
        let (g, a) = setup(seed);
        let gq = imprimitivity_groupoid(&g, &a).unwrap();
        let r = validate_groupoid(&gq.base);
        prop_assert!(r.passed() && r.structural.is_empty(), "{}", r);
        prop_assert!(validate_left_action(&gq.base, &gq.left).passed());
    }

    #[test]
    fn leoq_acts_through_reoq(seed in any::<u64>()) {
        let (g, a) = setup(seed);
        let gq = imprimitivity_groupoid(&g, &a).unwrap();
        let np = a.n_points;
        for x in 0..np {
            for y in 0..np {
                let Ok(l) = leoq(&gq, x, y) else { continue };
                for z in 0..np {
                    let Ok(k) = reoq(&g, &a, y, z) else { continue };
                    prop_assert_eq!(gq.left.act(l, z).unwrap(), a.act(x, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn leoq_is_invariant_and_reoq_is_equivariant(seed in any::<u64>()) {
        let (g, a) = setup(seed);
        let gq = imprimitivity_groupoid(&g, &a).unwrap();
        let np = a.n_points;
        for x in 0..np {
            for y in 0..np {
                for h in 0..g.n_arrows() {
                    if a.sigma[x] == g.rng[h] && a.sigma[y] == g.src[h] {
                        let lhs = leoq(&gq, x, a.act(y, g.inv[h]).unwrap()).unwrap();
                        let rhs = leoq(&gq, a.act(x, h).unwrap(), y).unwrap();
                        prop_assert_eq!(lhs, rhs);
                    }
                    let Ok(k) = reoq(&g, &a, x, y) else { continue };
                    if let Some(xh) = a.try_act(x, h) {
                        prop_assert_eq!(reoq(&g, &a, xh, y).unwrap(), g.comp(g.inv[h], k).unwrap());
                    }
                    if let Some(yh) = a.try_act(y, h) {
                        prop_assert_eq!(reoq(&g, &a, x, yh).unwrap(), g.comp(k, h).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn leoq_is_the_class_and_reoq_is_unique(seed in any::<u64>()) {
        let (g, a) = setup(seed);
        let gq = imprimitivity_groupoid(&g, &a).unwrap();
        for x in 0..a.n_points {
            for y in 0..a.n_points {
                prop_assert_eq!(leoq(&gq, x, y).ok(), gq.class_of(x, y));
            }
            for h in 0..g.n_arrows() {
                if let Some(xh) = a.try_act(x, h) {
                    prop_assert_eq!(reoq(&g, &a, x, xh).unwrap(), h);
                }
            }
        }
    }
}
