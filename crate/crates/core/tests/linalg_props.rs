use imprim_core::linalg::{fnorm, pinv, rand_cmat, rank, singular_values, spectral_norm, svd};
use imprim_core::{CMat, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A random `r×c` matrix of rank at most `k`, with repeated column blocks.
fn structured(seed: u64, r: usize, c: usize, k: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rand_cmat(&mut rng, r, k) * rand_cmat(&mut rng, k, c.div_ceil(2));
    CMat::from_fn(r, c, |i, j| base[(i, j % base.ncols())])
}

fn reconstruct(u: &CMat, s: &[f64], v: &CMat) -> CMat {
    let mut out = CMat::zeros(u.nrows(), v.nrows());
    for (l, &sl) in s.iter().enumerate() {
        out += u.column(l) * (v.column(l).adjoint() * C64::new(sl, 0.0));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn svd_reconstructs_every_shape(seed in any::<u64>(), r in 1usize..24, c in 1usize..80, k in 1usize..20) {
        let a = structured(seed, r, c, k);
        let (u, s, v) = svd(&a);
        prop_assert!(fnorm(&(reconstruct(&u, &s, &v) - &a)) <= 1e-12 * (1.0 + fnorm(&a)));
        let t = a.adjoint();
        let mut st = singular_values(&t);
        let mut sa = s.clone();
        st.sort_by(f64::total_cmp);
        sa.sort_by(f64::total_cmp);
        for (x, y) in sa.iter().zip(&st) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + spectral_norm(&a)));
        }
    }

    #[test]
    fn pinv_satisfies_penrose_identities(seed in any::<u64>(), r in 1usize..20, c in 1usize..60, k in 1usize..20) {
        let a = structured(seed, r, c, k);
        let p = pinv(&a, 1e-10);
        let scale = 1.0 + fnorm(&a) * fnorm(&p);
        prop_assert!(fnorm(&(&a * &p * &a - &a)) <= 1e-10 * scale * (1.0 + fnorm(&a)));
        prop_assert!(fnorm(&(&p * &a * &p - &p)) <= 1e-10 * scale * (1.0 + fnorm(&p)));
        let ap = &a * &p;
        prop_assert!(fnorm(&(&ap - ap.adjoint())) <= 1e-10 * scale);
        prop_assert_eq!(rank(&a, 1e-10), rank(&a.adjoint(), 1e-10));
    }
}
