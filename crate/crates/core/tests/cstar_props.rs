#![allow(clippy::needless_range_loop)]

use imprim_core::cstar::{
    gram_factorize, is_positive, operator_norm, AlgebraElement, BlockAlgebra,
};
use imprim_core::linalg::rand_cvec;
use imprim_core::C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn algebra() -> impl Strategy<Value = BlockAlgebra> {
    prop::collection::vec(1usize..=3, 1..=3).prop_map(|b| BlockAlgebra::new(b).unwrap())
}

fn random_elements(alg: &BlockAlgebra, seed: u64, n: usize) -> Vec<AlgebraElement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| alg.element(&rand_cvec(&mut rng, alg.dim())))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_is_submultiplicative_and_cstar(alg in algebra(), seed in any::<u64>()) {
        let xs = random_elements(&alg, seed, 32);
        for w in xs.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (na, nb) = (operator_norm(a), operator_norm(b));
            prop_assert!(operator_norm(&a.mul(b)) <= na * nb * (1.0 + 1e-9));
            let nss = operator_norm(&a.adjoint().mul(a));
            prop_assert!((nss - na * na).abs() <= 1e-9 * (1.0 + na * na));
        }
    }

    #[test]
    fn only_zero_is_positive_and_negative(alg in algebra(), seed in any::<u64>(), scale in 0.0f64..2.0) {
        let x = &random_elements(&alg, seed, 1)[0];
        let p = x.adjoint().mul(x).scale(C64::new(scale, 0.0));
        prop_assert!(is_positive(&p, 1e-9));
        let neg = p.scale(C64::new(-1.0, 0.0));
        if is_positive(&neg, 1e-9) {
            prop_assert!(operator_norm(&p) <= 1e-8);
        }
        prop_assert!(is_positive(&alg.zero(), 1e-9) && is_positive(&alg.zero().scale(C64::new(-1.0, 0.0)), 1e-9));
    }

    #[test]
    fn gram_factorization_reassembles(alg in algebra(), seed in any::<u64>(), k in 1usize..4, l in 1usize..4) {
        let xs = random_elements(&alg, seed, k * l);
        let g: Vec<Vec<AlgebraElement>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        (0..l).fold(alg.zero(), |acc, t| acc.add(&xs[i * l + t].mul(&xs[j * l + t].adjoint())))
                    })
                    .collect()
            })
            .collect();
        let f = gram_factorize(&alg, &g, 1e-9).unwrap();
        for i in 0..k {
            for j in 0..k {
                let mut acc = alg.zero();
                for t in 0..k {
                    acc = acc.add(&f[i][t].mul(&f[j][t].adjoint()));
                }
                let d = operator_norm(&acc.add(&g[i][j].scale(C64::new(-1.0, 0.0))));
                prop_assert!(d <= 1e-9 * (1.0 + operator_norm(&g[i][j])));
            }
        }
    }
}
