//! Benchmark fixtures for the imprimitivity construction.

use imprim_core::{
    bundle_by_name, fixture_kumjian, fixture_matrix, fixture_self, random_demi, DemiEquivalence,
    DemiProfile,
};

/// Named demi-equivalences of increasing size.
pub fn cases() -> Vec<(String, DemiEquivalence)> {
    let mut out = Vec::new();
    for name in ["z3", "pair2", "m2"] {
        let fb = bundle_by_name(name).expect("catalogue bundle");
        out.push((
            format!("self/{name}"),
            fixture_self(&fb).expect("self fixture").demi,
        ));
    }
    let z2 = bundle_by_name("z2").expect("catalogue bundle");
    for n in [2, 3] {
        out.push((
            format!("matrix/z2/n={n}"),
            fixture_matrix(&z2, n).expect("matrix fixture").demi,
        ));
    }
    for name in ["pair2", "z3"] {
        let fb = bundle_by_name(name).expect("catalogue bundle");
        out.push((
            format!("kumjian/{name}"),
            fixture_kumjian(&fb).expect("kumjian fixture").demi,
        ));
    }
    for seed in [1, 2] {
        out.push((
            format!("random/{seed}"),
            random_demi(seed, &DemiProfile::default()).expect("random demi"),
        ));
    }
    out
}
