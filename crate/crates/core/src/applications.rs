//! Closed-form examples: self-equivalence, matrix amplification, transformation
//! groups, and the finite stabilization bundle, each with an independently built
//! expected equivalence.

use std::fmt;

use crate::cstar::BlockAlgebra;
use crate::demiequiv::{induced_demi, self_demi, DemiEquivalence};
use crate::error::{Error, Result};
use crate::fellbundle::{random_fell_bundle, validate_fell_bundle, BundleProfile, FellBundle};
use crate::groupoid::{FiniteGroupoid, LeftAction, PrincipalAction};
use crate::hilbmod::{adjoint_map, frame_basis, frame_coords, rank_one, Frame, HilbertModule};
use crate::imprimitivity::{
    build_imprimitivity_bundle, uniqueness_iso, validate_equivalence, BundleIsomorphism,
    Equivalence,
};
use crate::linalg::{fnorm, pinv, rel_dist_mat, Bilinear, CMat, CVec, ONE};
use crate::report::ValidationReport;

/// A demi-equivalence together with the equivalence its imprimitivity bundle should
/// be isomorphic to.
#[derive(Clone, Debug)]
pub struct NamedFixture {
    pub name: String,
    pub demi: DemiEquivalence,
    pub expected: Equivalence,
    /// The elementary-tensor formula realizing the expected isomorphism.
    pub expected_iso_hint: String,
}

impl NamedFixture {
    pub fn expected_bundle(&self) -> &FellBundle {
        &self.expected.bundle
    }
}

fn unit_vec(i: usize, n: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = ONE;
    v
}

/// Left translation of a groupoid on its own arrows, anchored by the range map.
fn left_translation(g: &FiniteGroupoid) -> LeftAction {
    let n = g.n_arrows();
    LeftAction {
        n_points: n,
        n_arrows: n,
        anchor: g.rng.clone(),
        act: (0..n * n).map(|i| g.try_comp(i / n, i % n)).collect(),
    }
}

/// `Mₙ(ℂ) ⊗ 𝓑` over the base of `fb`, with its left structure on `ℂⁿ ⊗ 𝓑` viewed as a
/// demi-equivalence over `X = H`.
fn amplified_equivalence(fb: &FellBundle, demi: DemiEquivalence, n: usize) -> Result<Equivalence> {
    let g = &fb.base;
    let na = g.n_arrows();
    let mut algs = Vec::with_capacity(g.n_units);
    for u in 0..g.n_units {
        let blocks = fb.unit_fibres[u].blocks.iter().map(|k| k * n).collect();
        algs.push(BlockAlgebra::new(blocks)?);
    }
    let idx = |h: usize, i: usize, ip: usize, p: usize| -> usize {
        match g.unit_of_arrow(h) {
            Some(u) => {
                let (j, a, b) = fb.unit_fibres[u].locate(p);
                let k = fb.unit_fibres[u].blocks[j];
                algs[u].index(j, i * k + a, ip * k + b)
            }
            None => (i * n + ip) * fb.dims[h] + p,
        }
    };
    let dims: Vec<usize> = (0..na).map(|h| n * n * fb.dims[h]).collect();
    let mut mult = vec![None; na * na];
    for (h, k) in g.composable_pairs() {
        let hk = g.try_comp(h, k).expect("composable");
        let t = fb.mult_tensor(h, k)?;
        let mut out = Bilinear::zeros(dims[h], dims[k], dims[hk]);
        for i in 0..n {
            for c in 0..n {
                for jp in 0..n {
                    for p in 0..fb.dims[h] {
                        for q in 0..fb.dims[k] {
                            for r in 0..fb.dims[hk] {
                                let at =
                                    out.idx(idx(h, i, c, p), idx(k, c, jp, q), idx(hk, i, jp, r));
                                out.data[at] += t.get(p, q, r);
                            }
                        }
                    }
                }
            }
        }
        mult[h * na + k] = Some(out);
    }
    let mut invol = Vec::with_capacity(na);
    for h in 0..na {
        let hi = g.inv[h];
        let mut j = CMat::zeros(dims[hi], dims[h]);
        for i in 0..n {
            for ip in 0..n {
                for p in 0..fb.dims[h] {
                    for r in 0..fb.dims[hi] {
                        j[(idx(hi, ip, i, r), idx(h, i, ip, p))] = fb.invol[h][(r, p)];
                    }
                }
            }
        }
        invol.push(j);
    }
    let bundle = FellBundle::new(g.clone(), algs.clone(), dims.clone(), mult, invol)?;

    let np = demi.n_points();
    let left = left_translation(g);
    let mut left_action = vec![None; na * np];
    for k in 0..na {
        for y in 0..np {
            let Some(ky) = left.try_act(k, y) else {
                continue;
            };
            let t = fb.mult_tensor(k, y)?;
            let (dy, dky) = (fb.dims[y], fb.dims[ky]);
            let mut out = Bilinear::zeros(dims[k], n * dy, n * dky);
            for i in 0..n {
                for a in 0..n {
                    for p in 0..fb.dims[k] {
                        for q in 0..dy {
                            for r in 0..dky {
                                let at = out.idx(idx(k, i, a, p), a * dy + q, i * dky + r);
                                out.data[at] += t.get(p, q, r);
                            }
                        }
                    }
                }
            }
            left_action[k * np + y] = Some(out);
        }
    }
    let mut left_inner = vec![None; np * np];
    for x in 0..np {
        for y in 0..np {
            if g.src[x] != g.src[y] {
                continue;
            }
            let yi = g.inv[y];
            let h = g.try_comp(x, yi).expect("same source");
            let (dx, dy) = (fb.dims[x], fb.dims[y]);
            let mut out = Bilinear::zeros(n * dx, n * dy, dims[h]);
            for p in 0..dx {
                for q in 0..dy {
                    let v = fb.mul(x, yi, &unit_vec(p, dx), &fb.star(y, &unit_vec(q, dy)))?;
                    for a in 0..n {
                        for c in 0..n {
                            for r in 0..fb.dims[h] {
                                let at = out.idx(a * dx + p, c * dy + q, idx(h, a, c, r));
                                out.data[at] += v[r];
                            }
                        }
                    }
                }
            }
            left_inner[x * np + y] = Some(out);
        }
    }
    Equivalence::new(demi, bundle, left, left_action, left_inner)
}

/// `𝓑` as a demi-equivalence over itself; the expected bundle is `𝓑` with
/// `⟨b₁, b₂⟩_𝓐 = b₁b₂*`.
pub fn fixture_self(fb: &FellBundle) -> Result<NamedFixture> {
    let demi = self_demi(fb);
    let expected = amplified_equivalence(fb, demi.clone(), 1)?;
    Ok(NamedFixture {
        name: "self".into(),
        demi,
        expected,
        expected_iso_hint: "b1 b2*".into(),
    })
}

/// `ℂⁿ ⊗ 𝓑` over `X = H` with `⟨(x, b), (y, c)⟩ = ⟨x, y⟩·b*c`; the expected bundle is
/// `Mₙ(ℂ) ⊗ 𝓑` with `⟨(eᵢ, b₁), (eⱼ, b₂)⟩_𝓐 = (E_ij, b₁b₂*)`.
pub fn fixture_matrix(fb: &FellBundle, n: usize) -> Result<NamedFixture> {
    if n == 0 {
        return Err(Error::structural("matrix size must be positive"));
    }
    let comps: Vec<(usize, usize)> = (0..fb.base.n_units).map(|u| (u, n)).collect();
    let demi = induced_demi(fb, &comps)?;
    let expected = amplified_equivalence(fb, demi.clone(), n)?;
    Ok(NamedFixture {
        name: format!("matrix n={n}"),
        demi,
        expected,
        expected_iso_hint: "(E_ij, b1 b2*)".into(),
    })
}

/// An action of a finite group by `*`-automorphisms of a block algebra, as coordinate
/// matrices `α_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct AutAction {
    pub group: FiniteGroupoid,
    pub alg: BlockAlgebra,
    pub maps: Vec<CMat>,
}

impl AutAction {
    pub fn trivial(group: &FiniteGroupoid, alg: &BlockAlgebra) -> Self {
        let d = alg.dim();
        AutAction {
            group: group.clone(),
            alg: alg.clone(),
            maps: vec![CMat::identity(d, d); group.n_arrows()],
        }
    }

    /// `α_x = Ad(W_x)`, where `w[x][j]` is the block-`j` part of `W_x`.
    pub fn inner(group: &FiniteGroupoid, alg: &BlockAlgebra, w: &[Vec<CMat>]) -> Result<Self> {
        if w.len() != group.n_arrows() {
            return Err(Error::structural(
                "one unitary per group element is required",
            ));
        }
        let d = alg.dim();
        let mut maps = Vec::with_capacity(w.len());
        for wx in w {
            if wx.len() != alg.blocks.len()
                || wx
                    .iter()
                    .zip(&alg.blocks)
                    .any(|(m, &k)| m.shape() != (k, k))
            {
                return Err(Error::structural("unitary blocks do not match the algebra"));
            }
            let mut m = CMat::zeros(d, d);
            for c in 0..d {
                let (j, a, b) = alg.locate(c);
                let img = wx[j].column(a) * wx[j].column(b).adjoint();
                for p in 0..alg.blocks[j] {
                    for q in 0..alg.blocks[j] {
                        m[(alg.index(j, p, q), c)] = img[(p, q)];
                    }
                }
            }
            maps.push(m);
        }
        Ok(AutAction {
            group: group.clone(),
            alg: alg.clone(),
            maps,
        })
    }

    /// Checks that `x ↦ α_x` is a homomorphism into the `*`-automorphisms.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let mut rep = ValidationReport::new("automorphism action", tol);
        let d = self.alg.dim();
        let g = &self.group;
        if g.n_units != 1
            || self.maps.len() != g.n_arrows()
            || self.maps.iter().any(|m| m.shape() != (d, d))
        {
            rep.structural_error("action does not match a group and algebra");
            return rep;
        }
        for l in ["AUT-UNIT", "AUT-HOM", "AUT-MUL", "AUT-STAR"] {
            rep.declare(l);
        }
        let e = g.unit_embed[0];
        rep.residual(
            "AUT-UNIT",
            &[e],
            rel_dist_mat(&self.maps[e], &CMat::identity(d, d)),
        );
        for (x, y) in g.composable_pairs() {
            let xy = g.try_comp(x, y).expect("group");
            rep.residual(
                "AUT-HOM",
                &[x, y],
                rel_dist_mat(&(&self.maps[x] * &self.maps[y]), &self.maps[xy]),
            );
        }
        let inv = self.alg.invol_matrix();
        for (x, m) in self.maps.iter().enumerate() {
            for i in 0..d {
                let ei = unit_vec(i, d);
                let lhs = m * inv.clone() * &ei;
                let rhs = inv.clone() * (m * &ei).map(|z| z.conj());
                rep.residual("AUT-STAR", &[x, i], crate::linalg::rel_dist(&lhs, &rhs));
                for j in 0..d {
                    let ej = unit_vec(j, d);
                    let lhs = m * self.alg.mul_coords(&ei, &ej);
                    let rhs = self.alg.mul_coords(&(m * &ei), &(m * &ej));
                    rep.residual("AUT-MUL", &[x, i, j], crate::linalg::rel_dist(&lhs, &rhs));
                }
            }
        }
        rep
    }
}

/// The transformation groupoid `X ⋉ X/H` of a group acting on its left cosets... of
/// `H` by left multiplication. Arrow `(x, c)` has index `x·n_cosets + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformationGroupoid {
    pub groupoid: FiniteGroupoid,
    /// Coset index of every group element, numbered by first appearance.
    pub coset: Vec<usize>,
    pub n_cosets: usize,
}

impl TransformationGroupoid {
    pub fn arrow(&self, x: usize, c: usize) -> usize {
        x * self.n_cosets + c
    }
}

fn check_subgroup(x_group: &FiniteGroupoid, h_sub: &[usize]) -> Result<()> {
    let n = x_group.n_arrows();
    if x_group.n_units != 1 {
        return Err(Error::structural("the acted-on object must be a group"));
    }
    let e = x_group.unit_embed[0];
    let closed = h_sub.iter().all(|&a| a < n)
        && h_sub.contains(&e)
        && h_sub.iter().all(|&a| h_sub.contains(&x_group.inv[a]))
        && h_sub.iter().all(|&a| {
            h_sub
                .iter()
                .all(|&b| x_group.try_comp(a, b).is_some_and(|c| h_sub.contains(&c)))
        });
    let mut sorted = h_sub.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if !closed || sorted.len() != h_sub.len() {
        return Err(Error::structural("the given arrows do not form a subgroup"));
    }
    Ok(())
}

/// `X ⋉ X/H` with `s(x, yH) = yH`, `r(x, yH) = xyH` and `(x, yzH)(y, zH) = (xy, zH)`.
pub fn transformation_groupoid(
    x_group: &FiniteGroupoid,
    h_sub: &[usize],
) -> Result<TransformationGroupoid> {
    check_subgroup(x_group, h_sub)?;
    let n = x_group.n_arrows();
    let mul = |a: usize, b: usize| x_group.try_comp(a, b).expect("group");
    let mut coset = vec![usize::MAX; n];
    let mut reps = Vec::new();
    for x in 0..n {
        if coset[x] == usize::MAX {
            for &h in h_sub {
                coset[mul(x, h)] = reps.len();
            }
            reps.push(x);
        }
    }
    let nc = reps.len();
    let src: Vec<usize> = (0..n * nc).map(|a| a % nc).collect();
    let rng: Vec<usize> = (0..n * nc)
        .map(|a| coset[mul(a / nc, reps[a % nc])])
        .collect();
    let e = x_group.unit_embed[0];
    let units = (0..nc).map(|c| e * nc + c).collect();
    let groupoid = FiniteGroupoid::from_rule(nc, src, rng, units, |g, h| {
        mul(g / nc, h / nc) * nc + h % nc
    });
    Ok(TransformationGroupoid {
        groupoid,
        coset,
        n_cosets: nc,
    })
}

/// The trivial `A`-bundle over a group `X`, as a demi-equivalence over `𝓑 = A ⋊ H` with
/// `(m, x)◁(b, h) = (m·α_x(b), xh)` and `⟨(m, x), (n, y)⟩ = (α_{x⁻¹}(m*n), x⁻¹y)`; the
/// expected bundle is the semidirect bundle of `X` acting on `A × X/H`.
pub fn fixture_transformation_group(
    x_group: &FiniteGroupoid,
    h_sub: &[usize],
    alg: &BlockAlgebra,
    alpha: &AutAction,
) -> Result<NamedFixture> {
    let tg = transformation_groupoid(x_group, h_sub)?;
    if alpha.group != *x_group || alpha.alg != *alg {
        return Err(Error::structural(
            "automorphism action is not over the given group and algebra",
        ));
    }
    let ar = alpha.validate(1e-9);
    if !ar.passed() {
        return Err(Error::axiom(format!(
            "not an action by *-automorphisms\n{ar}"
        )));
    }
    let n = x_group.n_arrows();
    let mul = |a: usize, b: usize| x_group.try_comp(a, b).expect("group");
    let inv = |a: usize| x_group.inv[a];
    let mut hs = h_sub.to_vec();
    hs.sort_unstable();
    let nh = hs.len();
    let pos = |a: usize| hs.iter().position(|&b| b == a);
    let table: Vec<Vec<usize>> = (0..nh)
        .map(|i| {
            (0..nh)
                .map(|j| pos(mul(hs[i], hs[j])).expect("closed"))
                .collect()
        })
        .collect();
    let hgroup = FiniteGroupoid::group(&table);
    let d = alg.dim();
    let bundle = FellBundle::semidirect(
        &hgroup,
        vec![alg.clone()],
        hs.iter().map(|&h| alpha.maps[h].clone()).collect(),
    )?;
    let mut act = vec![None; n * nh];
    for x in 0..n {
        for (i, &h) in hs.iter().enumerate() {
            act[x * nh + i] = Some(mul(x, h));
        }
    }
    let action = PrincipalAction::from_tables(&hgroup, vec![0; n], act)?;
    let prod = |a: &CVec, b: &CVec| alg.mul_coords(a, b);
    let mut ract = vec![None; n * nh];
    for x in 0..n {
        for i in 0..nh {
            let t = Bilinear::from_basis_values(d, d, d, |p, q| {
                prod(&unit_vec(p, d), &(&alpha.maps[x] * unit_vec(q, d)))
            });
            ract[x * nh + i] = Some(t);
        }
    }
    let mut rip = vec![None; n * n];
    for x in 0..n {
        for y in 0..n {
            if pos(mul(inv(x), y)).is_none() {
                continue;
            }
            let t = Bilinear::from_basis_values(d, d, d, |p, q| {
                &alpha.maps[inv(x)] * prod(&alg.star_coords(&unit_vec(p, d)), &unit_vec(q, d))
            });
            rip[x * n + y] = Some(t);
        }
    }
    let demi = DemiEquivalence::new(bundle, action, vec![d; n], ract, rip)?;

    let g = &tg.groupoid;
    let nc = tg.n_cosets;
    let na = g.n_arrows();
    let a_bundle = FellBundle::semidirect(
        g,
        vec![alg.clone(); nc],
        (0..na).map(|a| alpha.maps[a / nc].clone()).collect(),
    )?;
    let mut lact = vec![None; na * n];
    for a in 0..na {
        for y in 0..n {
            if tg.coset[y] == a % nc {
                lact[a * n + y] = Some(mul(a / nc, y));
            }
        }
    }
    let left = LeftAction {
        n_points: n,
        n_arrows: na,
        anchor: tg.coset.clone(),
        act: lact,
    };
    let mut left_action = vec![None; na * n];
    for a in 0..na {
        for y in 0..n {
            if left.try_act(a, y).is_none() {
                continue;
            }
            let t = Bilinear::from_basis_values(d, d, d, |p, q| {
                prod(&unit_vec(p, d), &(&alpha.maps[a / nc] * unit_vec(q, d)))
            });
            left_action[a * n + y] = Some(t);
        }
    }
    let mut left_inner = vec![None; n * n];
    for x in 0..n {
        for y in 0..n {
            let xy = mul(x, inv(y));
            let t = Bilinear::from_basis_values(d, d, d, |p, q| {
                prod(
                    &unit_vec(p, d),
                    &alg.star_coords(&(&alpha.maps[xy] * unit_vec(q, d))),
                )
            });
            left_inner[x * n + y] = Some(t);
        }
    }
    let expected = Equivalence::new(demi.clone(), a_bundle, left, left_action, left_inner)?;
    Ok(NamedFixture {
        name: "transformation group".into(),
        demi,
        expected,
        expected_iso_hint: "m alpha_{xy^-1}(n)*".into(),
    })
}

/// Per-unit data of the module bundle `𝒱 = 𝓜|_{H⁰}`.
struct UnitModules {
    modules: Vec<HilbertModule>,
    frames: Vec<Frame>,
    bases: Vec<Vec<CMat>>,
}

impl UnitModules {
    fn coords(&self, u: usize, op: &CMat) -> CVec {
        frame_coords(&self.modules[u], &self.frames[u], &self.frames[u], op)
    }
}

/// Solves `R_b S = T R_b` for all `b` in a basis, where `R_b` are the given maps.
fn intertwine_left(rs: &[CMat], t: &CMat, tol: f64) -> Result<CMat> {
    let rows: usize = rs.iter().map(|r| r.nrows()).sum();
    let cols = rs[0].ncols();
    let mut rst = CMat::zeros(rows, cols);
    let mut tst = CMat::zeros(rows, cols);
    let mut s = 0;
    for r in rs {
        rst.view_mut((s, 0), r.shape()).copy_from(r);
        tst.view_mut((s, 0), r.shape()).copy_from(&(t * r));
        s += r.nrows();
    }
    let out = pinv(&rst, 1e-12) * &tst;
    let res = fnorm(&(&rst * &out - &tst)) / (1.0 + fnorm(&tst));
    if res > tol {
        return Err(Error::Residual {
            context: "shift intertwiner".into(),
            residual: res,
        });
    }
    Ok(out)
}

/// Solves `S R_b = R_b T` for all `b` in a basis.
fn intertwine_right(rs: &[CMat], t: &CMat, tol: f64) -> Result<CMat> {
    let rows = rs[0].nrows();
    let cols: usize = rs.iter().map(|r| r.ncols()).sum();
    let mut rh = CMat::zeros(rows, cols);
    let mut rt = CMat::zeros(rows, cols);
    let mut s = 0;
    for r in rs {
        rh.view_mut((0, s), r.shape()).copy_from(r);
        rt.view_mut((0, s), r.shape()).copy_from(&(r * t));
        s += r.ncols();
    }
    let out = &rt * pinv(&rh, 1e-12);
    let res = fnorm(&(&out * &rh - &rt)) / (1.0 + fnorm(&rt));
    if res > tol {
        return Err(Error::Residual {
            context: "shift intertwiner".into(),
            residual: res,
        });
    }
    Ok(out)
}

/// `M(h) = Γ(H s(h); 𝓑) = ⊕_{s(ℓ) = s(h)} B(ℓ)` over `X = H` with the counting Haar
/// system: `(ξ◁b)(ℓ) = ξ(ℓk⁻¹)·b` and `⟨μ, ξ⟩ = Σ_ℓ μ(ℓ)*·ξ(ℓg⁻¹h)`.
pub fn kumjian_demi(fb: &FellBundle) -> Result<DemiEquivalence> {
    let g = &fb.base;
    let na = g.n_arrows();
    let lists: Vec<Vec<usize>> = (0..g.n_units).map(|u| g.arrows_with_src(u)).collect();
    let mut offset = vec![0; na];
    let mut vdim = vec![0; g.n_units];
    for (u, list) in lists.iter().enumerate() {
        for &l in list {
            offset[l] = vdim[u];
            vdim[u] += fb.dims[l];
        }
    }
    let action = PrincipalAction::translation(g);
    let dims: Vec<usize> = (0..na).map(|x| vdim[g.src[x]]).collect();
    let mut ract = vec![None; na * na];
    for x in 0..na {
        for k in 0..na {
            if g.try_comp(x, k).is_none() {
                continue;
            }
            let ki = g.inv[k];
            let mut out = Bilinear::zeros(dims[x], fb.dims[k], vdim[g.src[k]]);
            for &l in &lists[g.src[k]] {
                let lk = g.try_comp(l, ki).expect("same source");
                let t = fb.mult_tensor(lk, k)?;
                for p in 0..fb.dims[lk] {
                    for q in 0..fb.dims[k] {
                        for r in 0..fb.dims[l] {
                            let at = out.idx(offset[lk] + p, q, offset[l] + r);
                            out.data[at] += t.get(p, q, r);
                        }
                    }
                }
            }
            ract[x * na + k] = Some(out);
        }
    }
    let mut rip = vec![None; na * na];
    for x in 0..na {
        for y in 0..na {
            if g.rng[x] != g.rng[y] {
                continue;
            }
            let xy = g.try_comp(g.inv[x], y).expect("same range");
            let mut out = Bilinear::zeros(dims[x], dims[y], fb.dims[xy]);
            for &l in &lists[g.src[x]] {
                let lp = g.try_comp(l, xy).expect("composable");
                let li = g.inv[l];
                for p in 0..fb.dims[l] {
                    let ps = fb.star(l, &unit_vec(p, fb.dims[l]));
                    for q in 0..fb.dims[lp] {
                        let v = fb.mul(li, lp, &ps, &unit_vec(q, fb.dims[lp]))?;
                        out.set_value(offset[l] + p, offset[lp] + q, &v);
                    }
                }
            }
            rip[x * na + y] = Some(out);
        }
    }
    DemiEquivalence::new(fb.clone(), action, dims, ract, rip)
}

/// The stabilization demi-equivalence; the expected bundle is `𝒦(𝒱) ⋊ H` with
/// `(T₁, h)(T₂, k) = (T₁ ∘ (h▷T₂), hk)` and `(T, h)* = (h⁻¹▷T*, h⁻¹)`, where `h▷T` is the
/// transport of `T ∈ 𝒦(V(s(h)))` determined by `(h▷T)(κ)◁b = T(κ◁b)` for `b ∈ B(h)`.
pub fn fixture_kumjian(fb: &FellBundle) -> Result<NamedFixture> {
    let tol = 1e-9;
    let demi = kumjian_demi(fb)?;
    let g = &fb.base;
    let na = g.n_arrows();
    let mut modules = Vec::with_capacity(g.n_units);
    let mut frames = Vec::with_capacity(g.n_units);
    let mut bases = Vec::with_capacity(g.n_units);
    for u in 0..g.n_units {
        let m = demi.module_at(g.unit_embed[u])?;
        let f = m.frame(tol);
        bases.push(frame_basis(&m, &f, &m, &f));
        modules.push(m);
        frames.push(f);
    }
    let um = UnitModules {
        modules,
        frames,
        bases,
    };
    let shifts = |v: usize, x: usize| -> Result<Vec<CMat>> {
        let t = demi.ract_tensor(g.unit_embed[v], x)?;
        Ok((0..fb.dims[x])
            .map(|b| t.right_operator(&unit_vec(b, fb.dims[x])))
            .collect())
    };
    // h▷T: 𝒦(V(s(h))) → 𝒦(V(r(h)))
    let transport =
        |h: usize, t: &CMat| -> Result<CMat> { intertwine_left(&shifts(g.rng[h], h)?, t, tol) };

    let dims: Vec<usize> = (0..na).map(|h| um.bases[g.rng[h]].len()).collect();
    let mut algs = Vec::with_capacity(g.n_units);
    for u in 0..g.n_units {
        algs.push(BlockAlgebra::new(um.frames[u].dims())?);
    }
    let mut mult = vec![None; na * na];
    for (h, k) in g.composable_pairs() {
        let hk = g.try_comp(h, k).expect("composable");
        let v = g.rng[h];
        let moved: Vec<CMat> = um.bases[g.rng[k]]
            .iter()
            .map(|t| transport(h, t))
            .collect::<Result<_>>()?;
        let t = Bilinear::from_basis_values(dims[h], dims[k], dims[hk], |i, j| {
            um.coords(v, &(&um.bases[v][i] * &moved[j]))
        });
        mult[h * na + k] = Some(t);
    }
    let mut invol = Vec::with_capacity(na);
    for h in 0..na {
        let (v, u, hi) = (g.rng[h], g.src[h], g.inv[h]);
        let mut j = CMat::zeros(dims[hi], dims[h]);
        for (c, t) in um.bases[v].iter().enumerate() {
            let adj = adjoint_map(&um.modules[v], &um.modules[v], t, tol)?;
            j.set_column(c, &um.coords(u, &transport(hi, &adj)?));
        }
        invol.push(j);
    }
    let bundle = FellBundle::new(g.clone(), algs, dims.clone(), mult, invol)?;

    let left = left_translation(g);
    let mut left_action = vec![None; na * na];
    for k in 0..na {
        for x in 0..na {
            let Some(j) = left.try_act(k, x) else {
                continue;
            };
            let rs = shifts(g.rng[j], j)?;
            let ops: Vec<CMat> = um.bases[g.rng[k]]
                .iter()
                .map(|t| intertwine_right(&rs, t, tol))
                .collect::<Result<_>>()?;
            let t = Bilinear::from_basis_values(dims[k], demi.dims[x], demi.dims[j], |c, i| {
                ops[c].column(i).into_owned()
            });
            left_action[k * na + x] = Some(t);
        }
    }
    let mut left_inner = vec![None; na * na];
    for x in 0..na {
        for y in 0..na {
            if g.src[x] != g.src[y] {
                continue;
            }
            let h = g.try_comp(x, g.inv[y]).expect("same source");
            let (v, u) = (g.rng[x], g.src[x]);
            let rs = shifts(v, x)?;
            let mv = &um.modules[u];
            let mut out = Bilinear::zeros(demi.dims[x], demi.dims[y], dims[h]);
            for i in 0..demi.dims[x] {
                for jj in 0..demi.dims[y] {
                    let theta = rank_one(
                        mv,
                        mv,
                        &unit_vec(i, demi.dims[x]),
                        &unit_vec(jj, demi.dims[y]),
                    )?;
                    let s = intertwine_left(&rs, &theta, tol)?;
                    out.set_value(i, jj, &um.coords(v, &s));
                }
            }
            left_inner[x * na + y] = Some(out);
        }
    }
    let expected = Equivalence::new(demi.clone(), bundle, left, left_action, left_inner)?;
    Ok(NamedFixture {
        name: "kumjian".into(),
        demi,
        expected,
        expected_iso_hint: "(|mu><xi| shifted to r(x), x y^-1)".into(),
    })
}

/// Outcome of one pipeline stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageResult {
    pub stage: String,
    pub passed: bool,
    pub max_residual: f64,
    pub detail: Option<String>,
}

/// Result of running a fixture through construction, validation and comparison.
#[derive(Clone, Debug)]
pub struct FixtureReport {
    pub name: String,
    pub hint: String,
    pub stages: Vec<StageResult>,
    pub constructed_dims: Vec<usize>,
    pub expected_dims: Vec<usize>,
    pub iso: Option<BundleIsomorphism>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        !self.stages.is_empty() && self.stages.iter().all(|s| s.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| s.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn stage(&self, name: &str) -> Option<&StageResult> {
        self.stages.iter().find(|s| s.stage == name)
    }

    fn push_report(&mut self, stage: &str, r: &ValidationReport) {
        let failed = r.failed_labels();
        let mut detail: Vec<String> = r.structural.clone();
        if !failed.is_empty() {
            detail.push(format!("failed: {}", failed.join(", ")));
        }
        self.stages.push(StageResult {
            stage: stage.into(),
            passed: r.passed(),
            max_residual: r.max_residual(),
            detail: if detail.is_empty() {
                None
            } else {
                Some(detail.join("; "))
            },
        });
    }

    fn push_error(&mut self, stage: &str, e: &Error) {
        self.stages.push(StageResult {
            stage: stage.into(),
            passed: false,
            max_residual: f64::INFINITY,
            detail: Some(e.to_string()),
        });
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "fixture {}: {} (max residual {:.3e})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_residual()
        )?;
        writeln!(f, "  iso hint: {}", self.hint)?;
        for s in &self.stages {
            write!(
                f,
                "  {:<24} {} max_residual={:.3e}",
                s.stage,
                if s.passed { "pass" } else { "FAIL" },
                s.max_residual
            )?;
            if let Some(d) = &s.detail {
                write!(f, " ({d})")?;
            }
            writeln!(f)?;
        }
        writeln!(f, "  arrow  constructed_dim  expected_dim  base_map")?;
        for (g, d) in self.constructed_dims.iter().enumerate() {
            let w = self.iso.as_ref().map(|i| i.base_map[g]);
            let ed = w.and_then(|w| self.expected_dims.get(w)).copied();
            writeln!(
                f,
                "  {:<5}  {:<15}  {:<12}  {}",
                g,
                d,
                ed.map_or("-".into(), |v| v.to_string()),
                w.map_or("-".into(), |v| v.to_string())
            )?;
        }
        Ok(())
    }
}

/// Builds the imprimitivity bundle of the fixture, validates it and the expected data,
/// and compares the two through the uniqueness isomorphism. Failures are recorded per
/// stage; every stage that can run does.
pub fn run_fixture(f: &NamedFixture, tol: f64) -> FixtureReport {
    let mut rep = FixtureReport {
        name: f.name.clone(),
        hint: f.expected_iso_hint.clone(),
        stages: Vec::new(),
        constructed_dims: Vec::new(),
        expected_dims: f.expected.bundle.dims.clone(),
        iso: None,
    };
    rep.push_report(
        "expected bundle",
        &validate_fell_bundle(&f.expected.bundle, tol),
    );
    rep.push_report(
        "expected equivalence",
        &validate_equivalence(&f.expected, tol),
    );
    let imp = match build_imprimitivity_bundle(&f.demi, tol) {
        Ok(imp) => imp,
        Err(e) => {
            rep.push_error("construction", &e);
            return rep;
        }
    };
    rep.constructed_dims = imp.bundle().dims.clone();
    rep.push_report(
        "constructed bundle",
        &validate_fell_bundle(imp.bundle(), tol),
    );
    rep.push_report(
        "constructed equivalence",
        &validate_equivalence(&imp.equivalence, tol),
    );
    match uniqueness_iso(&imp.equivalence, &f.expected, tol) {
        Ok(iso) => {
            rep.push_report("uniqueness isomorphism", &iso.report);
            rep.iso = Some(iso);
        }
        Err(e) => rep.push_error("uniqueness isomorphism", &e),
    }
    rep
}

/// Fell bundles addressable by name: catalogue groupoid names give line bundles,
/// `m2` and `m3` give matrix algebras over a point, and `random:<seed>` a random bundle.
pub fn bundle_by_name(name: &str) -> Result<FellBundle> {
    if let Some(seed) = name.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::structural(format!("bad seed in {name:?}")))?;
        return random_fell_bundle(seed, &BundleProfile::default());
    }
    match name {
        "m2" => Ok(FellBundle::trivial(
            &FiniteGroupoid::point(),
            &BlockAlgebra::matrices(2),
        )),
        "m3" => Ok(FellBundle::trivial(
            &FiniteGroupoid::point(),
            &BlockAlgebra::matrices(3),
        )),
        _ => FiniteGroupoid::named(name)
            .map(|g| FellBundle::line_bundle(&g))
            .ok_or_else(|| Error::structural(format!("unknown bundle {name:?}"))),
    }
}

/// Fixture kinds accepted by [`fixture_by_name`].
pub const FIXTURE_KINDS: &[&str] = &["self", "matrix", "kumjian", "transformation"];

/// Looks up a fixture: `self <bundle>`, `matrix <bundle>` with size `n`,
/// `kumjian <bundle>`, or `transformation <c|m2>` (the group `Z/4` over `{0, 2}`).
pub fn fixture_by_name(kind: &str, arg: &str, n: usize) -> Result<NamedFixture> {
    let mut f = match kind {
        "self" => fixture_self(&bundle_by_name(arg)?)?,
        "matrix" => fixture_matrix(&bundle_by_name(arg)?, n)?,
        "kumjian" => fixture_kumjian(&bundle_by_name(arg)?)?,
        "transformation" => {
            let x = FiniteGroupoid::cyclic(4);
            let alpha = match arg {
                "c" => AutAction::trivial(&x, &BlockAlgebra::scalars()),
                "m2" => z4_inner_action(),
                _ => {
                    return Err(Error::structural(format!(
                        "unknown coefficient algebra {arg:?}"
                    )))
                }
            };
            fixture_transformation_group(&x, &[0, 2], &alpha.alg.clone(), &alpha)?
        }
        _ => return Err(Error::structural(format!("unknown fixture {kind:?}"))),
    };
    f.name = if kind == "matrix" {
        format!("matrix n={n} {arg}")
    } else {
        format!("{kind} {arg}")
    };
    Ok(f)
}

/// `Z/4` acting on `M₂(ℂ)` by `Ad(diag(1, i))^x`.
pub fn z4_inner_action() -> AutAction {
    let x = FiniteGroupoid::cyclic(4);
    let i = crate::linalg::C64::new(0.0, 1.0);
    let w: Vec<Vec<CMat>> = (0..4)
        .map(|k| vec![CMat::from_diagonal(&CVec::from_vec(vec![ONE, i.powi(k)]))])
        .collect();
    AutAction::inner(&x, &BlockAlgebra::matrices(2), &w).expect("well-formed unitaries")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_z2_expected_is_the_bundle() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let f = fixture_self(&fb).unwrap();
        assert_eq!(f.expected.bundle, fb);
        let r = run_fixture(&f, 1e-9);
        assert!(r.passed(), "{r}");
        assert!(r.max_residual() < 1e-8);
    }

    #[test]
    fn self_point_m2() {
        let f = fixture_by_name("self", "m2", 1).unwrap();
        assert_eq!(f.expected.bundle.dims, vec![4]);
        assert!(run_fixture(&f, 1e-9).passed());
    }

    #[test]
    fn matrix_reduces_to_self_for_n1() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let a = fixture_matrix(&fb, 1).unwrap();
        let b = fixture_self(&fb).unwrap();
        assert_eq!(a.expected.bundle, b.expected.bundle);
        assert_eq!(a.demi, b.demi);
    }

    #[test]
    fn matrix_fixtures_pass() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let f = fixture_matrix(&fb, 2).unwrap();
        assert_eq!(f.expected.bundle.dims, vec![4, 4]);
        let r = run_fixture(&f, 1e-9);
        assert!(r.passed(), "{r}");
        assert_eq!(r.constructed_dims, vec![4, 4]);
        let p = fixture_matrix(&FellBundle::line_bundle(&FiniteGroupoid::point()), 2).unwrap();
        assert!(run_fixture(&p, 1e-9).passed());
    }

    #[test]
    fn transformation_group_z4() {
        let f = fixture_by_name("transformation", "c", 1).unwrap();
        assert_eq!(f.expected.bundle.n_arrows(), 8);
        assert!(f.expected.bundle.dims.iter().all(|&d| d == 1));
        let r = run_fixture(&f, 1e-9);
        assert!(r.passed(), "{r}");
        let g = fixture_by_name("transformation", "m2", 1).unwrap();
        let r = run_fixture(&g, 1e-9);
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn transformation_group_full_subgroup_and_m2_over_z2() {
        let x = FiniteGroupoid::cyclic(2);
        let alg = BlockAlgebra::matrices(2);
        let w: Vec<Vec<CMat>> = (0..2)
            .map(|k| {
                vec![CMat::from_diagonal(&CVec::from_vec(vec![
                    ONE,
                    if k == 0 { ONE } else { -ONE },
                ]))]
            })
            .collect();
        let alpha = AutAction::inner(&x, &alg, &w).unwrap();
        let full = fixture_transformation_group(&x, &[0, 1], &alg, &alpha).unwrap();
        assert_eq!(full.expected.bundle.n_arrows(), 2);
        assert!(run_fixture(&full, 1e-9).passed());
        let free = fixture_transformation_group(&x, &[0], &alg, &alpha).unwrap();
        let r = run_fixture(&free, 1e-9);
        assert!(r.passed(), "{r}");
        assert!(r.max_residual() < 1e-8);
        assert!(fixture_transformation_group(&x, &[1], &alg, &alpha).is_err());
    }

    #[test]
    fn kumjian_fixtures() {
        let pair = fixture_by_name("kumjian", "pair2", 1).unwrap();
        assert!(pair.demi.dims.iter().all(|&d| d == 2));
        assert_eq!(pair.expected.bundle.dims, vec![4; 4]);
        let r = run_fixture(&pair, 1e-9);
        assert!(r.passed(), "{r}");
        let z2 = fixture_by_name("kumjian", "z2", 1).unwrap();
        assert_eq!(z2.demi.dims, vec![2, 2]);
        assert!(run_fixture(&z2, 1e-9).passed());
        let pt = fixture_kumjian(&FellBundle::trivial(
            &FiniteGroupoid::point(),
            &BlockAlgebra::matrices(2),
        ))
        .unwrap();
        let selfpt = fixture_self(&FellBundle::trivial(
            &FiniteGroupoid::point(),
            &BlockAlgebra::matrices(2),
        ))
        .unwrap();
        assert_eq!(pt.demi.dims, selfpt.demi.dims);
        assert!(run_fixture(&pt, 1e-9).passed());
    }

    #[test]
    fn sign_twisted_expected_fails_at_uniqueness() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let mut f = fixture_self(&fb).unwrap();
        let t = f.expected.bundle.mult[3].as_mut().unwrap();
        t.data[0] = -t.data[0];
        let r = run_fixture(&f, 1e-9);
        assert!(!r.passed());
        assert!(!r.stage("uniqueness isomorphism").unwrap().passed);
    }
}
