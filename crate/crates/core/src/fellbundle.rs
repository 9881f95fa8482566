//! Fell bundles over finite groupoids given by structure tensors.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cstar::{positivity_defect, BlockAlgebra};
use crate::error::{Error, Result};
use crate::groupoid::{validate_groupoid, FiniteGroupoid};
use crate::linalg::{
    inverse, rand_cvec, rand_unitary, rand_wellcond, rank, rel_dist, rel_dist_mat, Bilinear, CMat,
    CVec, C64, ONE,
};
use crate::report::ValidationReport;

/// A Fell bundle over a finite groupoid. Unit fibres are block algebras in their
/// canonical coordinates; every other fibre is an abstract space of dimension
/// `dims[g]` whose structure is carried by the tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct FellBundle {
    pub base: FiniteGroupoid,
    /// Per unit.
    pub unit_fibres: Vec<BlockAlgebra>,
    /// Per arrow.
    pub dims: Vec<usize>,
    /// `B(g) × B(h) → B(gh)`, indexed `g·n + h`, present exactly for composable pairs.
    pub mult: Vec<Option<Bilinear>>,
    /// `J_g` with `b* = J_g·conj(b)`, a `dims[g⁻¹] × dims[g]` matrix.
    pub invol: Vec<CMat>,
}

impl FellBundle {
    /// Assembles a bundle, checking that every table has the shape its arrow demands.
    pub fn new(
        base: FiniteGroupoid,
        unit_fibres: Vec<BlockAlgebra>,
        dims: Vec<usize>,
        mult: Vec<Option<Bilinear>>,
        invol: Vec<CMat>,
    ) -> Result<Self> {
        let fb = FellBundle {
            base,
            unit_fibres,
            dims,
            mult,
            invol,
        };
        let errs = fb.shape_errors();
        if let Some(e) = errs.into_iter().next() {
            return Err(Error::structural(e));
        }
        Ok(fb)
    }

    fn shape_errors(&self) -> Vec<String> {
        let g = &self.base;
        let n = g.n_arrows();
        let mut errs = Vec::new();
        if self.unit_fibres.len() != g.n_units {
            errs.push(format!(
                "expected {} unit fibres, found {}",
                g.n_units,
                self.unit_fibres.len()
            ));
            return errs;
        }
        if self.dims.len() != n || self.invol.len() != n || self.mult.len() != n * n {
            errs.push("fibre tables do not match the number of arrows".into());
            return errs;
        }
        for u in 0..g.n_units {
            let a = g.unit_embed[u];
            if self.dims[a] != self.unit_fibres[u].dim() {
                errs.push(format!(
                    "unit fibre at arrow {a} has dimension {} but its algebra has {}",
                    self.dims[a],
                    self.unit_fibres[u].dim()
                ));
            }
        }
        for a in 0..n {
            for b in 0..n {
                match (g.try_comp(a, b), &self.mult[a * n + b]) {
                    (Some(c), Some(t)) => {
                        if (t.dl, t.dr, t.dout) != (self.dims[a], self.dims[b], self.dims[c]) {
                            errs.push(format!(
                                "multiplication tensor ({a}, {b}) has the wrong shape"
                            ));
                        }
                    }
                    (Some(_), None) => errs.push(format!(
                        "missing multiplication tensor for composable pair ({a}, {b})"
                    )),
                    (None, Some(_)) => errs.push(format!(
                        "multiplication tensor given for non-composable pair ({a}, {b})"
                    )),
                    (None, None) => {}
                }
            }
            if self.invol[a].shape() != (self.dims[g.inv[a]], self.dims[a]) {
                errs.push(format!(
                    "involution matrix at arrow {a} has the wrong shape"
                ));
            }
        }
        errs
    }

    pub fn n_arrows(&self) -> usize {
        self.base.n_arrows()
    }

    /// The algebra `B(u)` for a unit `u`.
    pub fn unit_algebra(&self, u: usize) -> &BlockAlgebra {
        &self.unit_fibres[u]
    }

    /// Multiplication tensor for a composable pair.
    pub fn mult_tensor(&self, g: usize, h: usize) -> Result<&Bilinear> {
        let n = self.n_arrows();
        self.mult
            .get(g * n + h)
            .and_then(|t| t.as_ref())
            .ok_or_else(|| Error::structural(format!("arrows ({g}, {h}) are not composable")))
    }

    /// Product `a·b` of `a ∈ B(g)` and `b ∈ B(h)`.
    pub fn mul(&self, g: usize, h: usize, a: &CVec, b: &CVec) -> Result<CVec> {
        Ok(self.mult_tensor(g, h)?.apply(a, b))
    }

    /// Adjoint `b* ∈ B(g⁻¹)` of `b ∈ B(g)`.
    pub fn star(&self, g: usize, b: &CVec) -> CVec {
        &self.invol[g] * b.map(|z| z.conj())
    }

    /// The line bundle `B(g) = ℂ` with complex multiplication and conjugation.
    pub fn line_bundle(base: &FiniteGroupoid) -> Self {
        let n = base.n_arrows();
        FellBundle::semidirect(
            base,
            vec![BlockAlgebra::scalars(); base.n_units],
            vec![CMat::identity(1, 1); n],
        )
        .expect("line bundle is well formed")
    }

    /// The trivial bundle `A × G` with the same algebra at every arrow.
    pub fn trivial(base: &FiniteGroupoid, alg: &BlockAlgebra) -> Self {
        let d = alg.dim();
        FellBundle::semidirect(
            base,
            vec![alg.clone(); base.n_units],
            vec![CMat::identity(d, d); base.n_arrows()],
        )
        .expect("trivial bundle is well formed")
    }

    /// The semidirect bundle `B(g) = A(r(g))` with `(a, g)(b, h) = (a·α_g(b), gh)` and
    /// `(a, g)* = (α_{g⁻¹}(a*), g⁻¹)`, where `alpha[g]` is the matrix of `α_g` in algebra
    /// coordinates. Unit fibres must agree along every arrow.
    pub fn semidirect(
        base: &FiniteGroupoid,
        algs: Vec<BlockAlgebra>,
        alpha: Vec<CMat>,
    ) -> Result<Self> {
        let n = base.n_arrows();
        if algs.len() != base.n_units || alpha.len() != n {
            return Err(Error::structural(
                "semidirect data does not match the groupoid",
            ));
        }
        for g in 0..n {
            if algs[base.src[g]] != algs[base.rng[g]] {
                return Err(Error::structural(format!(
                    "arrow {g} joins units with different algebras"
                )));
            }
            let d = algs[base.rng[g]].dim();
            if alpha[g].shape() != (d, d) {
                return Err(Error::structural(format!(
                    "automorphism at arrow {g} has the wrong shape"
                )));
            }
        }
        let dims: Vec<usize> = (0..n).map(|g| algs[base.rng[g]].dim()).collect();
        let mut mult = vec![None; n * n];
        for (g, h) in base.composable_pairs() {
            let alg = &algs[base.rng[g]];
            let d = alg.dim();
            let t = Bilinear::from_basis_values(d, d, d, |i, j| {
                let mut ei = CVec::zeros(d);
                ei[i] = ONE;
                alg.mul_coords(&ei, &alpha[g].column(j).into_owned())
            });
            mult[g * n + h] = Some(t);
        }
        let invol = (0..n)
            .map(|g| {
                let alg = &algs[base.rng[g]];
                &alpha[base.inv[g]] * alg.invol_matrix()
            })
            .collect();
        FellBundle::new(base.clone(), algs, dims, mult, invol)
    }

    /// Re-expresses each fibre `B(g)` in the basis given by the columns of `p[g]`;
    /// unit fibres must keep the identity.
    pub fn with_basis_change(&self, p: &[CMat]) -> Result<Self> {
        let g = &self.base;
        let n = g.n_arrows();
        if p.len() != n {
            return Err(Error::structural("one basis change per arrow is required"));
        }
        let mut pinv = Vec::with_capacity(n);
        for a in 0..n {
            if p[a].shape() != (self.dims[a], self.dims[a]) {
                return Err(Error::structural(format!(
                    "basis change at arrow {a} has the wrong shape"
                )));
            }
            pinv.push(inverse(&p[a]).ok_or_else(|| {
                Error::structural(format!("basis change at arrow {a} is singular"))
            })?);
        }
        let mut mult = vec![None; n * n];
        for (a, b) in g.composable_pairs() {
            let c = g.try_comp(a, b).expect("composable");
            let t = self.mult[a * n + b]
                .as_ref()
                .expect("composable pair has a tensor");
            mult[a * n + b] = Some(t.change_basis(&p[a], &p[b], &pinv[c], false));
        }
        let invol = (0..n)
            .map(|a| &pinv[g.inv[a]] * &self.invol[a] * p[a].map(|z| z.conj()))
            .collect();
        FellBundle::new(
            g.clone(),
            self.unit_fibres.clone(),
            self.dims.clone(),
            mult,
            invol,
        )
    }
}

/// `‖b‖ = ‖b*b‖^{1/2}`, evaluated in the unit fibre `B(s(g))`.
pub fn fibre_norm(fb: &FellBundle, g: usize, b: &CVec) -> f64 {
    let gi = fb.base.inv[g];
    let bs = fb.star(g, b);
    let p = fb.mult[gi * fb.n_arrows() + g]
        .as_ref()
        .expect("g⁻¹g is composable")
        .apply(&bs, b);
    fb.unit_fibres[fb.base.src[g]]
        .norm_coords(&p)
        .max(0.0)
        .sqrt()
}

fn basis(i: usize, n: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = ONE;
    v
}

/// Number of random draws per arrow used by the norm and positivity checks.
const RANDOM_DRAWS: usize = 6;

/// Checks the Fell-bundle axioms and saturation on basis tuples and random draws.
pub fn validate_fell_bundle(fb: &FellBundle, tol: f64) -> ValidationReport {
    let mut rep = ValidationReport::new("fell bundle", tol);
    let base_rep = validate_groupoid(&fb.base);
    if !base_rep.passed() {
        for s in &base_rep.structural {
            rep.structural_error(format!("base: {s}"));
        }
        for l in base_rep.failed_labels() {
            rep.structural_error(format!("base groupoid fails {l}"));
        }
        return rep;
    }
    for e in fb.shape_errors() {
        rep.structural_error(e);
    }
    if rep.has_structural_errors() {
        return rep;
    }
    for l in [
        "F1", "F2", "F3", "F4", "F5", "F6", "F7", "F8", "F9", "F10", "SAT", "UNIT",
    ] {
        rep.declare(l);
    }
    let g = &fb.base;
    let n = g.n_arrows();
    let pairs = g.composable_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

    for &(a, b) in &pairs {
        let c = g.try_comp(a, b).expect("composable");
        let t = fb.mult[a * n + b].as_ref().expect("tensor present");
        rep.require(
            "F1",
            &[a, b],
            (t.dl, t.dr, t.dout) == (fb.dims[a], fb.dims[b], fb.dims[c]),
        );
        // linearity of the induced product in each slot on random draws
        let (x1, x2, y) = (
            rand_cvec(&mut rng, fb.dims[a]),
            rand_cvec(&mut rng, fb.dims[a]),
            rand_cvec(&mut rng, fb.dims[b]),
        );
        let s = C64::new(0.3, -1.2);
        let lhs = t.apply(&(&x1 * s + &x2), &y);
        let rhs = t.apply(&x1, &y) * s + t.apply(&x2, &y);
        rep.residual("F2", &[a, b], rel_dist(&lhs, &rhs));
        let y2 = rand_cvec(&mut rng, fb.dims[b]);
        let lhs = t.apply(&x1, &(&y * s + &y2));
        let rhs = t.apply(&x1, &y) * s + t.apply(&x1, &y2);
        rep.residual("F2", &[a, b], rel_dist(&lhs, &rhs));
    }
    for a in 0..n {
        let ai = g.inv[a];
        rep.require("F5", &[a], fb.invol[a].shape() == (fb.dims[ai], fb.dims[a]));
        let (x1, x2) = (
            rand_cvec(&mut rng, fb.dims[a]),
            rand_cvec(&mut rng, fb.dims[a]),
        );
        let s = C64::new(-0.7, 0.4);
        let lhs = fb.star(a, &(&x1 * s + &x2));
        let rhs = fb.star(a, &x1) * s.conj() + fb.star(a, &x2);
        rep.residual("F6", &[a], rel_dist(&lhs, &rhs));
        let back = &fb.invol[ai] * fb.invol[a].map(|z| z.conj());
        rep.residual(
            "F8",
            &[a],
            rel_dist_mat(&back, &CMat::identity(fb.dims[a], fb.dims[a])),
        );
    }

    for &(a, b) in &pairs {
        let ab = g.try_comp(a, b).expect("composable");
        for c in g.arrows_with_rng(g.src[b]) {
            let bc = g.try_comp(b, c).expect("composable");
            let tab = fb.mult[a * n + b].as_ref().expect("tensor");
            let tabc = fb.mult[ab * n + c].as_ref().expect("tensor");
            let tbc = fb.mult[b * n + c].as_ref().expect("tensor");
            let ta_bc = fb.mult[a * n + bc].as_ref().expect("tensor");
            for i in 0..fb.dims[a] {
                for j in 0..fb.dims[b] {
                    let xy = tab.value(i, j);
                    for k in 0..fb.dims[c] {
                        let ek = basis(k, fb.dims[c]);
                        let lhs = tabc.apply(&xy, &ek);
                        let rhs = ta_bc.apply(&basis(i, fb.dims[a]), &tbc.value(j, k));
                        rep.residual("F3", &[a, b, c, i, j, k], rel_dist(&lhs, &rhs));
                    }
                }
            }
        }
    }

    for &(a, b) in &pairs {
        let ab = g.try_comp(a, b).expect("composable");
        let t = fb.mult[a * n + b].as_ref().expect("tensor");
        let mut samples: Vec<(CVec, CVec, Vec<usize>)> = Vec::new();
        for i in 0..fb.dims[a] {
            for j in 0..fb.dims[b] {
                samples.push((basis(i, fb.dims[a]), basis(j, fb.dims[b]), vec![a, b, i, j]));
            }
        }
        for r in 0..2 {
            samples.push((
                rand_cvec(&mut rng, fb.dims[a]),
                rand_cvec(&mut rng, fb.dims[b]),
                vec![a, b, usize::MAX - r],
            ));
        }
        for (x, y, idx) in &samples {
            let xy = t.apply(x, y);
            let bound = fibre_norm(fb, a, x) * fibre_norm(fb, b, y);
            let excess = (fibre_norm(fb, ab, &xy) - bound).max(0.0) / (1.0 + bound);
            rep.residual("F4", idx, excess);
            let lhs = fb.star(ab, &xy);
            let (ai, bi) = (g.inv[a], g.inv[b]);
            let rhs = fb.mult[bi * n + ai]
                .as_ref()
                .expect("tensor")
                .apply(&fb.star(b, y), &fb.star(a, x));
            rep.residual("F7", idx, rel_dist(&lhs, &rhs));
        }
    }

    for a in 0..n {
        let ai = g.inv[a];
        let (s, r) = (g.src[a], g.rng[a]);
        let mut samples: Vec<(CVec, usize)> =
            (0..fb.dims[a]).map(|i| (basis(i, fb.dims[a]), i)).collect();
        for k in 0..RANDOM_DRAWS {
            samples.push((rand_cvec(&mut rng, fb.dims[a]), usize::MAX - k));
        }
        let t_ss = fb.mult[ai * n + a].as_ref().expect("tensor");
        let t_rr = fb.mult[a * n + ai].as_ref().expect("tensor");
        for (x, k) in &samples {
            let xs = fb.star(a, x);
            let nb = fibre_norm(fb, a, x);
            let bbs = t_rr.apply(x, &xs);
            let bsb = t_ss.apply(&xs, x);
            let nbbs = fb.unit_fibres[r].norm_coords(&bbs);
            rep.residual("F9", &[a, *k], (nbbs - nb * nb).abs() / (1.0 + nb * nb));
            let nstar = fibre_norm(fb, ai, &xs);
            rep.residual("F9", &[a, *k], (nstar - nb).abs() / (1.0 + nb));
            let pd1 = positivity_defect(&fb.unit_fibres[s].element(&bsb));
            let pd2 = positivity_defect(&fb.unit_fibres[r].element(&bbs));
            rep.residual("F10", &[a, *k], pd1.max(pd2));
        }
    }

    for &(a, b) in &pairs {
        let c = g.try_comp(a, b).expect("composable");
        let t = fb.mult[a * n + b].as_ref().expect("tensor");
        let span = CMat::from_fn(fb.dims[c], fb.dims[a] * fb.dims[b], |p, q| {
            t.get(q / fb.dims[b], q % fb.dims[b], p)
        });
        let r = rank(&span, tol);
        rep.outcome(
            "SAT",
            &[a, b],
            (fb.dims[c] - r.min(fb.dims[c])) as f64,
            r == fb.dims[c],
        );
    }

    for u in 0..g.n_units {
        let a = g.unit_embed[u];
        let alg = &fb.unit_fibres[u];
        let t = fb.mult[a * n + a].as_ref().expect("tensor");
        let expected = alg.mult_tensor();
        let diff = t
            .data
            .iter()
            .zip(&expected.data)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        rep.residual("UNIT", &[u], diff);
        rep.residual(
            "UNIT",
            &[u],
            rel_dist_mat(&fb.invol[a], &alg.invol_matrix()),
        );
    }
    rep.note("F2", "multilinearity of the stored tensors on random draws");
    rep
}

/// Size parameters for [`random_fell_bundle`].
#[derive(Clone, Debug, PartialEq)]
pub struct BundleProfile {
    /// Catalogue name of the base groupoid; a random catalogue entry when `None`.
    pub groupoid: Option<String>,
    pub max_arrows: usize,
    pub max_fibre_dim: usize,
    /// Forces every unit fibre to be `M_n(ℂ)`.
    pub matrix_n: Option<usize>,
}

impl Default for BundleProfile {
    fn default() -> Self {
        BundleProfile {
            groupoid: None,
            max_arrows: 6,
            max_fibre_dim: 3,
            matrix_n: None,
        }
    }
}

impl BundleProfile {
    pub fn named(name: &str) -> Self {
        BundleProfile {
            groupoid: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn matrix(name: &str, n: usize) -> Self {
        BundleProfile {
            groupoid: Some(name.to_string()),
            max_fibre_dim: n * n,
            matrix_n: Some(n),
            ..Default::default()
        }
    }
}

/// All functors from `g` into the symmetric group on `k` letters that preserve the
/// given block sizes, as permutation tables per arrow.
fn block_permutation_functors(
    g: &FiniteGroupoid,
    sizes: &[usize],
    limit: usize,
) -> Vec<Vec<Vec<usize>>> {
    let k = sizes.len();
    let mut perms: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    permutations(&mut cur, 0, &mut perms);
    perms.retain(|p| (0..k).all(|i| sizes[p[i]] == sizes[i]));
    let id: Vec<usize> = (0..k).collect();
    let n = g.n_arrows();
    let mut out = Vec::new();
    let mut assign: Vec<Option<usize>> = vec![None; n];
    for u in 0..g.n_units {
        assign[g.unit_embed[u]] = Some(
            perms
                .iter()
                .position(|p| *p == id)
                .expect("identity present"),
        );
    }
    fn compose(p: &[usize], q: &[usize]) -> Vec<usize> {
        q.iter().map(|&i| p[i]).collect()
    }
    fn consistent(g: &FiniteGroupoid, perms: &[Vec<usize>], assign: &[Option<usize>]) -> bool {
        for (a, b) in g.composable_pairs() {
            let c = g.try_comp(a, b).expect("composable");
            if let (Some(pa), Some(pb), Some(pc)) = (assign[a], assign[b], assign[c]) {
                if compose(&perms[pa], &perms[pb]) != perms[pc] {
                    return false;
                }
            }
        }
        true
    }
    fn rec(
        g: &FiniteGroupoid,
        perms: &[Vec<usize>],
        assign: &mut Vec<Option<usize>>,
        pos: usize,
        out: &mut Vec<Vec<Vec<usize>>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if pos == assign.len() {
            out.push(
                assign
                    .iter()
                    .map(|a| perms[a.expect("assigned")].clone())
                    .collect(),
            );
            return;
        }
        if assign[pos].is_some() {
            rec(g, perms, assign, pos + 1, out, limit);
            return;
        }
        for p in 0..perms.len() {
            assign[pos] = Some(p);
            if consistent(g, perms, assign) {
                rec(g, perms, assign, pos + 1, out, limit);
            }
        }
        assign[pos] = None;
    }
    rec(g, &perms, &mut assign, 0, &mut out, limit);
    out
}

fn permutations(cur: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == cur.len() {
        out.push(cur.clone());
        return;
    }
    for i in k..cur.len() {
        cur.swap(k, i);
        permutations(cur, k + 1, out);
        cur.swap(k, i);
    }
}

/// Matrix of the block permutation `a ↦ b` with `b_{p(j)} = a_j` on a block algebra.
fn block_permutation_matrix(alg: &BlockAlgebra, p: &[usize]) -> CMat {
    let d = alg.dim();
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        let (j, a, b) = alg.locate(i);
        m[(alg.index(p[j], a, b), i)] = ONE;
    }
    m
}

/// Matrix of `Ad(u)` on `M_n(ℂ)` in row-major coordinates.
fn inner_automorphism_matrix(u: &CMat) -> CMat {
    let n = u.nrows();
    let alg = BlockAlgebra::matrices(n);
    let d = n * n;
    let mut m = CMat::zeros(d, d);
    for i in 0..d {
        let (_, a, b) = alg.locate(i);
        let mut e = CMat::zeros(n, n);
        e[(a, b)] = ONE;
        let img = u * e * u.adjoint();
        for r in 0..n {
            for c in 0..n {
                m[(r * n + c, i)] = img[(r, c)];
            }
        }
    }
    m
}

/// A random valid saturated Fell bundle: a semidirect bundle of a block algebra by a
/// functor into its automorphisms, with every non-unit fibre re-expressed in a random
/// well-conditioned basis. Seed 0 gives the untwisted bundle in the standard basis.
pub fn random_fell_bundle(seed: u64, profile: &BundleProfile) -> Result<FellBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = match &profile.groupoid {
        Some(name) => FiniteGroupoid::named(name)
            .ok_or_else(|| Error::structural(format!("unknown groupoid `{name}`")))?,
        None => {
            let choices: Vec<FiniteGroupoid> = FiniteGroupoid::CATALOGUE
                .iter()
                .filter_map(|n| FiniteGroupoid::named(n))
                .filter(|g| g.n_arrows() <= profile.max_arrows)
                .collect();
            choices
                .choose(&mut rng)
                .cloned()
                .ok_or_else(|| Error::structural("no catalogue groupoid fits the profile"))?
        }
    };
    if base.n_arrows() > profile.max_arrows {
        return Err(Error::structural("named groupoid exceeds the arrow budget"));
    }
    if profile.max_fibre_dim == 0 {
        return Err(Error::structural("fibre dimension budget must be positive"));
    }
    if let Some(nm) = profile.matrix_n {
        if nm == 0 || nm * nm > profile.max_fibre_dim {
            return Err(Error::structural(
                "matrix size does not fit the fibre budget",
            ));
        }
    }
    let n = base.n_arrows();
    let comps = base.unit_components();
    let mut roots: Vec<usize> = comps.clone();
    roots.sort_unstable();
    roots.dedup();
    let mut algs = vec![BlockAlgebra::scalars(); base.n_units];
    let mut alpha: Vec<CMat> = vec![CMat::zeros(0, 0); n];
    for &root in &roots {
        let units: Vec<usize> = (0..base.n_units).filter(|&u| comps[u] == root).collect();
        let arrows: Vec<usize> = (0..n).filter(|&g| comps[base.src[g]] == root).collect();
        let sub = sub_groupoid(&base, &arrows);
        let (alg, maps) = if let Some(nm) = profile.matrix_n {
            let alg = BlockAlgebra::matrices(nm);
            let maps = if seed == 0 {
                identity_maps(&alg, arrows.len())
            } else {
                matrix_action(&mut rng, &sub, nm)
            };
            (alg, maps)
        } else if seed == 0 {
            let alg = BlockAlgebra::scalars();
            (alg.clone(), identity_maps(&alg, arrows.len()))
        } else {
            let use_matrix = profile.max_fibre_dim >= 4 && rng.random_bool(0.3);
            if use_matrix {
                (BlockAlgebra::matrices(2), matrix_action(&mut rng, &sub, 2))
            } else {
                let k = rng.random_range(1..=profile.max_fibre_dim);
                let alg = BlockAlgebra::new(vec![1; k])?;
                let functors = block_permutation_functors(&sub, &vec![1; k], 64);
                let f = functors
                    .choose(&mut rng)
                    .expect("the trivial functor exists");
                (
                    alg.clone(),
                    f.iter()
                        .map(|p| block_permutation_matrix(&alg, p))
                        .collect(),
                )
            }
        };
        for &u in &units {
            algs[u] = alg.clone();
        }
        for (i, &g) in arrows.iter().enumerate() {
            alpha[g] = maps[i].clone();
        }
    }
    let fb = FellBundle::semidirect(&base, algs, alpha)?;
    if seed == 0 {
        return Ok(fb);
    }
    let p: Vec<CMat> = (0..n)
        .map(|g| {
            let d = fb.dims[g];
            if base.is_unit_arrow(g) {
                CMat::identity(d, d)
            } else {
                rand_wellcond(&mut rng, d, 0.5, 2.0)
            }
        })
        .collect();
    fb.with_basis_change(&p)
}

fn identity_maps(alg: &BlockAlgebra, count: usize) -> Vec<CMat> {
    vec![CMat::identity(alg.dim(), alg.dim()); count]
}

/// `Ad(W·P_g·W*)` for a random functor `g ↦ P_g` into permutation matrices and a
/// random unitary `W`.
fn matrix_action<R: Rng>(rng: &mut R, sub: &FiniteGroupoid, nm: usize) -> Vec<CMat> {
    let functors = block_permutation_functors(sub, &vec![1; nm], 64);
    let f = functors.choose(rng).expect("the trivial functor exists");
    let w = rand_unitary(rng, nm);
    f.iter()
        .map(|p| {
            let mut pm = CMat::zeros(nm, nm);
            for (j, &pj) in p.iter().enumerate() {
                pm[(pj, j)] = ONE;
            }
            inner_automorphism_matrix(&(&w * pm * w.adjoint()))
        })
        .collect()
}

/// The full subgroupoid on a union of connected components, arrows renumbered in the
/// given order.
fn sub_groupoid(g: &FiniteGroupoid, arrows: &[usize]) -> FiniteGroupoid {
    let mut units: Vec<usize> = arrows.iter().map(|&a| g.src[a]).collect();
    units.sort_unstable();
    units.dedup();
    let upos = |u: usize| {
        units
            .iter()
            .position(|&v| v == u)
            .expect("unit in component")
    };
    let apos = |a: usize| {
        arrows
            .iter()
            .position(|&b| b == a)
            .expect("arrow in component")
    };
    let src = arrows.iter().map(|&a| upos(g.src[a])).collect();
    let rng = arrows.iter().map(|&a| upos(g.rng[a])).collect();
    let unit_embed = units.iter().map(|&u| apos(g.unit_embed[u])).collect();
    FiniteGroupoid::from_rule(units.len(), src, rng, unit_embed, |a, b| {
        apos(g.try_comp(arrows[a], arrows[b]).expect("composable"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z2_sign_twisted() -> FellBundle {
        let mut fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let n = 2;
        fb.mult[n + 1].as_mut().unwrap().data[0] = C64::new(-1.0, 0.0);
        fb
    }

    #[test]
    fn line_bundle_over_z2_is_valid() {
        let r = validate_fell_bundle(&FellBundle::line_bundle(&FiniteGroupoid::cyclic(2)), 1e-9);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn matrix_algebra_over_a_point_is_valid() {
        let fb = FellBundle::trivial(&FiniteGroupoid::point(), &BlockAlgebra::matrices(2));
        assert!(validate_fell_bundle(&fb, 1e-9).passed());
    }

    #[test]
    fn sign_twist_fails_positivity() {
        let r = validate_fell_bundle(&z2_sign_twisted(), 1e-9);
        let f10 = r.status("F10").unwrap();
        assert!(!f10.passed);
        assert_eq!(f10.witnesses[0].indices[0], 1);
    }

    #[test]
    fn fibre_norm_examples() {
        let fb = random_fell_bundle(3, &BundleProfile::default()).unwrap();
        for g in 0..fb.n_arrows() {
            assert_eq!(fibre_norm(&fb, g, &CVec::zeros(fb.dims[g])), 0.0);
        }
        let u = fb.base.unit_embed[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = rand_cvec(&mut rng, fb.dims[u]);
        let want = crate::cstar::operator_norm(&fb.unit_fibres[0].element(&b));
        assert!((fibre_norm(&fb, u, &b) - want).abs() < 1e-9);
    }

    #[test]
    fn generator_seed_zero_z2_is_line_bundle() {
        let fb = random_fell_bundle(0, &BundleProfile::named("z2")).unwrap();
        assert_eq!(fb, FellBundle::line_bundle(&FiniteGroupoid::cyclic(2)));
    }

    #[test]
    fn generator_matrix_point_is_m2() {
        let fb = random_fell_bundle(5, &BundleProfile::matrix("point", 2)).unwrap();
        assert_eq!(fb.unit_fibres, vec![BlockAlgebra::matrices(2)]);
        assert!(validate_fell_bundle(&fb, 1e-9).passed());
    }

    #[test]
    fn generated_bundles_validate() {
        for seed in 1..30 {
            let profile = BundleProfile {
                max_fibre_dim: 4,
                ..Default::default()
            };
            let fb = random_fell_bundle(seed, &profile).unwrap();
            let r = validate_fell_bundle(&fb, 1e-9);
            assert!(r.passed(), "seed {seed}: {r}");
        }
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let mut fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        fb.invol[1] = CMat::zeros(2, 1);
        let r = validate_fell_bundle(&fb, 1e-9);
        assert!(r.has_structural_errors());
    }
}
