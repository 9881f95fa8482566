//! The imprimitivity Fell bundle `𝓜 ⊗_𝓑 𝓜^op` of a demi-equivalence, realized on
//! spaces of compact module maps, together with the equivalence data and the
//! uniqueness isomorphism.

use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cstar::{gram_positivity_defect, AlgebraElement, BlockAlgebra};
use crate::demiequiv::{validate_demi, DemiEquivalence};
use crate::error::{Error, Result};
use crate::fellbundle::{fibre_norm, FellBundle};
use crate::groupoid::{
    groupoid_isomorphic, imprimitivity_groupoid, validate_left_action, ImprimitivityGroupoid,
    LeftAction,
};
use crate::hilbmod::{adjoint_map, frame_basis, frame_coords, rank_one, Frame, HilbertModule};
use crate::linalg::{
    fnorm, pinv, rand_cvec, rank, rel_dist, rel_dist_mat, spectral_norm, Bilinear, CMat, CVec, C64,
    ONE, ZERO,
};
use crate::report::ValidationReport;

/// An element of `K(x, y^op)`: a compact module map `M(y) → M(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KElem {
    pub at: (usize, usize),
    pub op: CMat,
}

/// The fibre `K(x, y^op) = 𝒦(M(y), M(x))` with its frame basis.
#[derive(Clone, Debug)]
pub struct KFibre {
    pub at: (usize, usize),
    pub target: HilbertModule,
    pub source: HilbertModule,
    pub frame_target: Frame,
    pub frame_source: Frame,
    pub basis: Vec<CMat>,
}

impl KFibre {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Block shapes `(k_j(x), k_j(y))` of the frame coordinates.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        self.frame_target
            .dims()
            .into_iter()
            .zip(self.frame_source.dims())
            .collect()
    }

    pub fn coords(&self, op: &CMat) -> CVec {
        frame_coords(&self.target, &self.frame_target, &self.frame_source, op)
    }

    pub fn op(&self, c: &CVec) -> CMat {
        let mut out = CMat::zeros(self.target.dim, self.source.dim);
        for (k, b) in self.basis.iter().enumerate() {
            if c[k] != ZERO {
                out += b * c[k];
            }
        }
        out
    }

    pub fn element(&self, c: &CVec) -> KElem {
        KElem {
            at: self.at,
            op: self.op(c),
        }
    }

    /// `|m⟩⟨n|` for `m ∈ M(x)`, `n ∈ M(y)`.
    pub fn rank_one(&self, m: &CVec, n: &CVec) -> CMat {
        rank_one(&self.target, &self.source, m, n).expect("fibre modules share their algebra")
    }

    /// Operator norm, read off the frame blocks.
    pub fn norm_coords(&self, c: &CVec) -> f64 {
        split_blocks(&self.blocks(), c)
            .iter()
            .map(spectral_norm)
            .fold(0.0, f64::max)
    }

    pub fn norm(&self, op: &CMat) -> f64 {
        self.norm_coords(&self.coords(op))
    }
}

fn split_blocks(shape: &[(usize, usize)], c: &CVec) -> Vec<CMat> {
    let mut out = Vec::with_capacity(shape.len());
    let mut s = 0;
    for &(r, k) in shape {
        out.push(CMat::from_fn(r, k, |a, b| c[s + a * k + b]));
        s += r * k;
    }
    out
}

fn join_blocks(blocks: &[CMat]) -> CVec {
    let mut v = Vec::new();
    for b in blocks {
        for a in 0..b.nrows() {
            for c in 0..b.ncols() {
                v.push(b[(a, c)]);
            }
        }
    }
    CVec::from_vec(v)
}

fn unit_vec(i: usize, n: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = ONE;
    v
}

/// Cached modules, frames, fibres and transports of one demi-equivalence.
pub(crate) struct Kit<'a> {
    m: &'a DemiEquivalence,
    tol: f64,
    modules: Vec<HilbertModule>,
    frames: Vec<Frame>,
    fibres: HashMap<(usize, usize), Rc<KFibre>>,
    solvers: HashMap<(usize, usize), Rc<(CMat, CMat)>>,
    psi_cache: HashMap<(usize, usize, usize), Rc<CMat>>,
}

impl<'a> Kit<'a> {
    pub(crate) fn new(m: &'a DemiEquivalence, tol: f64) -> Result<Self> {
        let mut modules = Vec::with_capacity(m.n_points());
        let mut frames = Vec::with_capacity(m.n_points());
        for x in 0..m.n_points() {
            let module = m.module_at(x)?;
            frames.push(module.frame(tol));
            modules.push(module);
        }
        Ok(Kit {
            m,
            tol,
            modules,
            frames,
            fibres: HashMap::new(),
            solvers: HashMap::new(),
            psi_cache: HashMap::new(),
        })
    }

    fn check_pair(&self, x: usize, y: usize) -> Result<()> {
        let np = self.m.n_points();
        if x >= np || y >= np {
            return Err(Error::structural(format!(
                "point pair ({x}, {y}) out of range"
            )));
        }
        if self.m.action.sigma[x] != self.m.action.sigma[y] {
            return Err(Error::structural(format!(
                "points {x} and {y} have different anchors"
            )));
        }
        Ok(())
    }

    pub(crate) fn fibre(&mut self, x: usize, y: usize) -> Result<Rc<KFibre>> {
        if let Some(f) = self.fibres.get(&(x, y)) {
            return Ok(f.clone());
        }
        self.check_pair(x, y)?;
        let (mx, my) = (&self.modules[x], &self.modules[y]);
        let (fx, fy) = (&self.frames[x], &self.frames[y]);
        let basis = frame_basis(mx, fx, my, fy);
        let f = Rc::new(KFibre {
            at: (x, y),
            target: mx.clone(),
            source: my.clone(),
            frame_target: fx.clone(),
            frame_source: fy.clone(),
            basis,
        });
        self.fibres.insert((x, y), f.clone());
        Ok(f)
    }

    /// Least-squares data for decomposing `M(x·h)` over `{e_i◁β_l}`.
    fn solver(&mut self, x: usize, h: usize) -> Result<Rc<(CMat, CMat)>> {
        if let Some(s) = self.solvers.get(&(x, h)) {
            return Ok(s.clone());
        }
        let t = self.m.ract_tensor(x, h)?;
        let dh = self.m.bundle.dims[h];
        let a = CMat::from_fn(t.dout, t.dl * dh, |r, c| t.get(c / dh, c % dh, r));
        let p = pinv(&a, 1e-12);
        let s = Rc::new((a, p));
        self.solvers.insert((x, h), s.clone());
        Ok(s)
    }

    /// `Ψ_h: K(x·h, y^op) → K(x, (y·h⁻¹)^op)` on one element, by the elementary formula
    /// `|m◁b⟩⟨n| ↦ |m⟩⟨n◁b*|`.
    pub(crate) fn psi_op(&mut self, h: usize, xi: &KElem, shortcut_units: bool) -> Result<KElem> {
        let m = self.m;
        let g = &m.bundle.base;
        let (xp, y) = xi.at;
        self.check_pair(xp, y)?;
        if h >= g.n_arrows() || g.src[h] != m.action.sigma[xp] {
            return Err(Error::structural(format!(
                "arrow {h} cannot transport the fibre at ({xp}, {y})"
            )));
        }
        if shortcut_units && g.is_unit_arrow(h) {
            return Ok(xi.clone());
        }
        let hi = g.inv[h];
        let x = m.action.act(xp, hi)?;
        let yh = m.action.act(y, hi)?;
        let sol = self.solver(x, h)?;
        let (a, p) = (&sol.0, &sol.1);
        let dh = m.bundle.dims[h];
        let dx = m.dims[x];
        let stars: Vec<CVec> = (0..dh)
            .map(|l| m.bundle.star(h, &unit_vec(l, dh)))
            .collect();
        let mut s = CMat::zeros(dx, m.dims[yh]);
        for vs in &self.frames[y].vectors {
            for v in vs {
                let w = &xi.op * v;
                let c = p * &w;
                let res = crate::linalg::vnorm(&(a * &c - &w)) / (1.0 + crate::linalg::vnorm(&w));
                if res > self.tol {
                    return Err(Error::Residual {
                        context: format!("Ψ decomposition at ({x}, {h})"),
                        residual: res,
                    });
                }
                for (l, bl) in stars.iter().enumerate() {
                    let u = CVec::from_fn(dx, |i, _| c[i * dh + l]);
                    let n = m.act(y, hi, v, bl)?;
                    s += rank_one(&self.modules[x], &self.modules[yh], &u, &n)?;
                }
            }
        }
        Ok(KElem { at: (x, yh), op: s })
    }

    /// Matrix of `Ψ_h` from frame coordinates at `(x·h, y)` to those at `(x, y·h⁻¹)`.
    pub(crate) fn psi_matrix(&mut self, xp: usize, y: usize, h: usize) -> Result<Rc<CMat>> {
        if let Some(p) = self.psi_cache.get(&(xp, y, h)) {
            return Ok(p.clone());
        }
        let g = &self.m.bundle.base;
        let src = self.fibre(xp, y)?;
        let out = if g.is_unit_arrow(h) && g.src[h] == self.m.action.sigma[xp] {
            CMat::identity(src.dim(), src.dim())
        } else {
            let hi = g.inv[h];
            let x = self.m.action.act(xp, hi)?;
            let yh = self.m.action.act(y, hi)?;
            let dst = self.fibre(x, yh)?;
            let mut out = CMat::zeros(dst.dim(), src.dim());
            for k in 0..src.dim() {
                let img = self.psi_op(
                    h,
                    &KElem {
                        at: (xp, y),
                        op: src.basis[k].clone(),
                    },
                    true,
                )?;
                out.set_column(k, &dst.coords(&img.op));
            }
            out
        };
        let out = Rc::new(out);
        self.psi_cache.insert((xp, y, h), out.clone());
        Ok(out)
    }

    /// Transport of frame coordinates between two representatives `(a, b)` and
    /// `(c, d) = (a·k⁻¹, b·k⁻¹)` of one class.
    pub(crate) fn transport(
        &mut self,
        from: (usize, usize),
        to: (usize, usize),
    ) -> Result<Rc<CMat>> {
        let (a, b) = from;
        let (c, d) = to;
        let k = self.m.action.find_translation(c, a).ok_or_else(|| {
            Error::structural(format!(
                "({a}, {b}) and ({c}, {d}) lie in different classes"
            ))
        })?;
        if self.m.action.try_act(d, k) != Some(b) {
            return Err(Error::structural(format!(
                "({a}, {b}) and ({c}, {d}) lie in different classes"
            )));
        }
        self.psi_matrix(a, b, k)
    }

    pub(crate) fn flip(&self, xi: &KElem) -> Result<KElem> {
        let (x, y) = xi.at;
        self.check_pair(x, y)?;
        let op = adjoint_map(&self.modules[y], &self.modules[x], &xi.op, self.tol)?;
        Ok(KElem { at: (y, x), op })
    }
}

/// Product of frame coordinates at `(x, y)` and `(y, z)`.
fn block_mul(s1: &[(usize, usize)], s2: &[(usize, usize)], c1: &CVec, c2: &CVec) -> CVec {
    let b1 = split_blocks(s1, c1);
    let b2 = split_blocks(s2, c2);
    let prod: Vec<CMat> = b1.iter().zip(&b2).map(|(a, b)| a * b).collect();
    join_blocks(&prod)
}

/// Index permutation taking frame coordinates at `(x, y)` to the transposed ones at
/// `(y, x)`.
fn transpose_matrix(shape: &[(usize, usize)]) -> CMat {
    let d: usize = shape.iter().map(|&(r, k)| r * k).sum();
    let mut m = CMat::zeros(d, d);
    let mut s = 0;
    for &(r, k) in shape {
        for a in 0..r {
            for b in 0..k {
                m[(s + b * r + a, s + a * k + b)] = ONE;
            }
        }
        s += r * k;
    }
    m
}

/// The fibre `K(x, y^op)` as the compact maps `M(y) → M(x)`.
pub fn k_fibre(m: &DemiEquivalence, x: usize, y: usize, tol: f64) -> Result<KFibre> {
    let mut kit = Kit::new(m, tol)?;
    Ok((*kit.fibre(x, y)?).clone())
}

/// `Ψ_h: K(x·h, y^op) → K(x, (y·h⁻¹)^op)`.
pub fn psi_transport(m: &DemiEquivalence, h: usize, xi: &KElem, tol: f64) -> Result<KElem> {
    Kit::new(m, tol)?.psi_op(h, xi, false)
}

/// `Flip: K(x, y^op) → K(y, x^op)`, the module adjoint.
pub fn flip(m: &DemiEquivalence, xi: &KElem, tol: f64) -> Result<KElem> {
    Kit::new(m, tol)?.flip(xi)
}

/// `Φ(ξ, k) = T_ξ(k)`.
pub fn phi_apply(m: &DemiEquivalence, xi: &KElem, k: &CVec) -> Result<CVec> {
    let (_, y) = xi.at;
    if y >= m.n_points() || k.len() != m.dims[y] || xi.op.ncols() != k.len() {
        return Err(Error::structural(
            "module element does not lie in the source fibre",
        ));
    }
    Ok(&xi.op * k)
}

/// `U_y(ξ, η) = T_ξ ∘ T_η ∈ K(x, z^op)` for `ξ ∈ K(x, y^op)`, `η ∈ K(y, z^op)`.
pub fn u_compose(xi: &KElem, eta: &KElem) -> Result<KElem> {
    if xi.at.1 != eta.at.0 || xi.op.ncols() != eta.op.nrows() {
        return Err(Error::structural(format!(
            "middle points {} and {} differ",
            xi.at.1, eta.at.0
        )));
    }
    Ok(KElem {
        at: (xi.at.0, eta.at.1),
        op: &xi.op * &eta.op,
    })
}

/// Two-sided equivalence data: a demi-equivalence over `(H, 𝓑)`, a Fell bundle `𝓐`
/// over `G`, a left action of `G` on `X`, and the left action and inner product of `𝓐`.
#[derive(Clone, Debug, PartialEq)]
pub struct Equivalence {
    pub demi: DemiEquivalence,
    pub bundle: FellBundle,
    pub left: LeftAction,
    /// `A(g) × M(y) → M(g▷y)`, indexed `g·n_points + y`.
    pub left_action: Vec<Option<Bilinear>>,
    /// `M(x) × M(y) → A(⟨x, y⟩_G)`, conjugate-linear in the second slot, indexed
    /// `x·n_points + y`.
    pub left_inner: Vec<Option<Bilinear>>,
    /// `⟨x, y⟩_G`: the unique `g` with `g▷y = x`.
    pub leoq: Vec<Option<usize>>,
}

impl Equivalence {
    pub fn new(
        demi: DemiEquivalence,
        bundle: FellBundle,
        left: LeftAction,
        left_action: Vec<Option<Bilinear>>,
        left_inner: Vec<Option<Bilinear>>,
    ) -> Result<Self> {
        let np = demi.n_points();
        let n = bundle.n_arrows();
        if left.n_points != np || left.n_arrows != n {
            return Err(Error::structural(
                "left action does not match the bundle and the space",
            ));
        }
        if left_action.len() != n * np || left_inner.len() != np * np {
            return Err(Error::structural(
                "left equivalence tables have the wrong length",
            ));
        }
        let mut leoq = vec![None; np * np];
        for x in 0..np {
            for y in 0..np {
                if demi.action.sigma[x] != demi.action.sigma[y] {
                    continue;
                }
                let found: Vec<usize> = (0..n).filter(|&g| left.try_act(g, y) == Some(x)).collect();
                if found.len() != 1 {
                    return Err(Error::structural(format!(
                        "points ({x}, {y}) are joined by {} arrows of the left groupoid",
                        found.len()
                    )));
                }
                leoq[x * np + y] = Some(found[0]);
            }
        }
        Ok(Equivalence {
            demi,
            bundle,
            left,
            left_action,
            left_inner,
            leoq,
        })
    }

    pub fn n_points(&self) -> usize {
        self.demi.n_points()
    }

    pub fn leoq_of(&self, x: usize, y: usize) -> Result<usize> {
        self.leoq
            .get(x * self.n_points() + y)
            .copied()
            .flatten()
            .ok_or_else(|| Error::structural(format!("points {x} and {y} have different anchors")))
    }

    pub fn left_action_tensor(&self, g: usize, y: usize) -> Result<&Bilinear> {
        self.left_action
            .get(g * self.n_points() + y)
            .and_then(|t| t.as_ref())
            .ok_or_else(|| Error::structural(format!("no left action for arrow {g} on point {y}")))
    }

    pub fn left_inner_tensor(&self, x: usize, y: usize) -> Result<&Bilinear> {
        self.left_inner
            .get(x * self.n_points() + y)
            .and_then(|t| t.as_ref())
            .ok_or_else(|| {
                Error::structural(format!("no left inner product for points ({x}, {y})"))
            })
    }

    /// `a▷m ∈ M(g▷y)`.
    pub fn lact(&self, g: usize, y: usize, a: &CVec, m: &CVec) -> Result<CVec> {
        Ok(self.left_action_tensor(g, y)?.apply(a, m))
    }

    /// `⟨m, n⟩_𝓐 ∈ A(⟨x, y⟩_G)`.
    pub fn lip(&self, x: usize, y: usize, m: &CVec, n: &CVec) -> Result<CVec> {
        Ok(self.left_inner_tensor(x, y)?.apply(m, &n.map(|z| z.conj())))
    }
}

/// The constructed bundle with its groupoid, fibres and equivalence data.
#[derive(Clone, Debug)]
pub struct ImprimitivityFellBundle {
    pub groupoid: ImprimitivityGroupoid,
    /// Fibre of each arrow at its representative.
    pub fibres: Vec<KFibre>,
    pub equivalence: Equivalence,
    pub tol: f64,
}

impl ImprimitivityFellBundle {
    pub fn bundle(&self) -> &FellBundle {
        &self.equivalence.bundle
    }

    pub fn demi(&self) -> &DemiEquivalence {
        &self.equivalence.demi
    }
}

/// Builds `𝓐 = 𝓜 ⊗_𝓑 𝓜^op` over the imprimitivity groupoid, with fibres stored at the
/// lexicographically least representative of each arrow.
pub fn build_imprimitivity_bundle(
    m: &DemiEquivalence,
    tol: f64,
) -> Result<ImprimitivityFellBundle> {
    let vr = validate_demi(m, tol);
    if vr.has_structural_errors() {
        return Err(Error::structural(format!("invalid demi-equivalence\n{vr}")));
    }
    if !vr.passed() {
        return Err(Error::axiom(format!("invalid demi-equivalence\n{vr}")));
    }
    let gq = imprimitivity_groupoid(&m.bundle.base, &m.action)?;
    let gb = &gq.base;
    let n = gb.n_arrows();
    let np = m.n_points();
    let mut kit = Kit::new(m, tol)?;
    let mut fibres = Vec::with_capacity(n);
    for g in 0..n {
        let (x, y) = gq.rep[g];
        fibres.push(kit.fibre(x, y)?);
    }
    let mut unit_fibres = Vec::with_capacity(gb.n_units);
    for u in 0..gb.n_units {
        let f = &fibres[gb.unit_embed[u]];
        unit_fibres.push(BlockAlgebra::new(f.frame_target.dims())?);
    }
    let dims: Vec<usize> = fibres.iter().map(|f| f.dim()).collect();

    let mut mult = vec![None; n * n];
    for (g1, g2) in gb.composable_pairs() {
        let (x1, y1) = gq.rep[g1];
        let (x2, y2) = gq.rep[g2];
        let h = gq
            .reoq(y1, x2)
            .ok_or_else(|| Error::structural("composable arrows with unaligned legs"))?;
        let p = kit.psi_matrix(x2, y2, h)?;
        let z = m.action.act(y2, m.bundle.base.inv[h])?;
        let g12 = gb.comp(g1, g2)?;
        let r = kit.transport((x1, z), gq.rep[g12])?;
        let s1 = fibres[g1].blocks();
        let s2 = kit.fibre(y1, z)?.blocks();
        let t = Bilinear::from_basis_values(dims[g1], dims[g2], dims[g12], |k1, k2| {
            let c = block_mul(
                &s1,
                &s2,
                &unit_vec(k1, dims[g1]),
                &p.column(k2).into_owned(),
            );
            &*r * c
        });
        mult[g1 * n + g2] = Some(t);
    }
    let mut invol = Vec::with_capacity(n);
    for g in 0..n {
        let (x, y) = gq.rep[g];
        let perm = transpose_matrix(&fibres[g].blocks());
        let r = kit.transport((y, x), gq.rep[gb.inv[g]])?;
        invol.push(&*r * perm);
    }
    let bundle = FellBundle::new(gb.clone(), unit_fibres, dims.clone(), mult, invol)?;

    let mut left_action = vec![None; n * np];
    for g in 0..n {
        let (x, y) = gq.rep[g];
        for yp in 0..np {
            if gq.rho[yp] != gq.rho[y] {
                continue;
            }
            let k = gq.reoq(y, yp).expect("same orbit");
            let xk = m.action.act(x, k)?;
            let r = kit.transport((x, y), (xk, yp))?;
            let f = kit.fibre(xk, yp)?;
            let t = Bilinear::from_basis_values(dims[g], m.dims[yp], m.dims[xk], |a, i| {
                f.op(&r.column(a).into_owned()).column(i).into_owned()
            });
            left_action[g * np + yp] = Some(t);
        }
    }
    let mut left_inner = vec![None; np * np];
    for x in 0..np {
        for y in 0..np {
            let Some(g) = gq.class_of(x, y) else { continue };
            let f = kit.fibre(x, y)?;
            let r = kit.transport((x, y), gq.rep[g])?;
            let t = Bilinear::from_basis_values(m.dims[x], m.dims[y], dims[g], |i, j| {
                let op = f.rank_one(&unit_vec(i, m.dims[x]), &unit_vec(j, m.dims[y]));
                &*r * f.coords(&op)
            });
            left_inner[x * np + y] = Some(t);
        }
    }
    let equivalence =
        Equivalence::new(m.clone(), bundle, gq.left.clone(), left_action, left_inner)?;
    let fibres = fibres.iter().map(|f| (**f).clone()).collect();
    Ok(ImprimitivityFellBundle {
        groupoid: gq,
        fibres,
        equivalence,
        tol,
    })
}

/// Checks that `e` makes its demi-equivalence a two-sided equivalence: the left action
/// and inner product axioms and their compatibility with the right-hand structure.
pub fn validate_equivalence(e: &Equivalence, tol: f64) -> ValidationReport {
    let mut rep = ValidationReport::new("equivalence", tol);
    let m = &e.demi;
    let a = &e.bundle;
    let ga = &a.base;
    let gh = &m.bundle.base;
    let np = m.n_points();
    let na = ga.n_arrows();
    let nh = gh.n_arrows();
    let lr = validate_left_action(ga, &e.left);
    for s in &lr.structural {
        rep.structural_error(format!("left action: {s}"));
    }
    if rep.has_structural_errors() {
        return rep;
    }
    for l in [
        "LA1", "LAM", "LA2", "ADJ", "LIP1", "LIP2", "LIP3", "LIP4", "LIP5", "LDE6", "LDE8",
    ] {
        rep.declare(l);
    }
    for l in lr.failed_labels() {
        rep.require("LA1", &[], false);
        rep.note("LA1", &format!("left groupoid action fails {l}"));
    }
    for g in 0..na {
        for y in 0..np {
            let ok = match (e.left.try_act(g, y), &e.left_action[g * np + y]) {
                (Some(x), Some(t)) => {
                    (t.dl, t.dr, t.dout) == (a.dims[g], m.dims[y], m.dims[x])
                        && m.action.sigma[x] == m.action.sigma[y]
                }
                (None, None) => true,
                _ => false,
            };
            rep.require("LA1", &[g, y], ok);
        }
    }
    for x in 0..np {
        for y in 0..np {
            let ok = match (e.leoq[x * np + y], &e.left_inner[x * np + y]) {
                (Some(g), Some(t)) => (t.dl, t.dr, t.dout) == (m.dims[x], m.dims[y], a.dims[g]),
                (None, None) => true,
                _ => false,
            };
            rep.require("LIP1", &[x, y], ok);
        }
    }
    if !rep.passed() {
        return rep;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e7);
    let la = |g: usize, y: usize| e.left_action[g * np + y].as_ref().expect("checked");
    let li = |x: usize, y: usize| e.left_inner[x * np + y].as_ref().expect("checked");

    for (g1, g2) in ga.composable_pairs() {
        let g12 = ga.try_comp(g1, g2).expect("composable");
        let tm = a.mult[g1 * na + g2].as_ref().expect("composable");
        for y in 0..np {
            let Some(y2) = e.left.try_act(g2, y) else {
                continue;
            };
            for k1 in 0..a.dims[g1] {
                for k2 in 0..a.dims[g2] {
                    let prod = tm.value(k1, k2);
                    for i in 0..m.dims[y] {
                        let ei = unit_vec(i, m.dims[y]);
                        let lhs = la(g12, y).apply(&prod, &ei);
                        let inner = la(g2, y).apply(&unit_vec(k2, a.dims[g2]), &ei);
                        let rhs = la(g1, y2).apply(&unit_vec(k1, a.dims[g1]), &inner);
                        rep.residual("LAM", &[g1, g2, y, k1, k2, i], rel_dist(&lhs, &rhs));
                    }
                }
            }
        }
    }

    for g in 0..na {
        for y in 0..np {
            let Some(x) = e.left.try_act(g, y) else {
                continue;
            };
            for h in gh.arrows_with_rng(m.action.sigma[y]) {
                let yh = m.action.try_act(y, h).expect("anchor matches");
                let Some(xh) = m.action.try_act(x, h) else {
                    rep.require("LA2", &[g, y, h], false);
                    continue;
                };
                rep.require("LA2", &[g, y, h], e.left.try_act(g, yh) == Some(xh));
                let tr_y = m.ract[y * nh + h].as_ref().expect("action defined");
                let tr_x = m.ract[x * nh + h].as_ref().expect("action defined");
                for k in 0..a.dims[g] {
                    let ak = unit_vec(k, a.dims[g]);
                    for i in 0..m.dims[y] {
                        let am = la(g, y).apply(&ak, &unit_vec(i, m.dims[y]));
                        for b in 0..m.bundle.dims[h] {
                            let eb = unit_vec(b, m.bundle.dims[h]);
                            let lhs = tr_x.apply(&am, &eb);
                            let rhs = la(g, yh).apply(&ak, &tr_y.value(i, b));
                            rep.residual("LA2", &[g, y, h, k, i, b], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
        }
    }

    for g in 0..na {
        let gi = ga.inv[g];
        for y1 in 0..np {
            let Some(x1) = e.left.try_act(g, y1) else {
                continue;
            };
            for y2 in 0..np {
                let Some(z) = e.left.try_act(gi, y2) else {
                    continue;
                };
                let (Some(t_l), Some(t_r)) =
                    (m.rip[x1 * np + y2].as_ref(), m.rip[y1 * np + z].as_ref())
                else {
                    continue;
                };
                for k in 0..a.dims[g] {
                    let ak = unit_vec(k, a.dims[g]);
                    let aks = a.star(g, &ak);
                    for i in 0..m.dims[y1] {
                        let am = la(g, y1).apply(&ak, &unit_vec(i, m.dims[y1]));
                        for j in 0..m.dims[y2] {
                            let ej = unit_vec(j, m.dims[y2]);
                            let lhs = t_l.apply_conj(&am, &ej);
                            let rhs = t_r
                                .apply_conj(&unit_vec(i, m.dims[y1]), &la(gi, y2).apply(&aks, &ej));
                            rep.residual("ADJ", &[g, y1, y2, k, i, j], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
        }
    }

    for x in 0..np {
        for y in 0..np {
            let Some(g) = e.leoq[x * np + y] else {
                continue;
            };
            let t = li(x, y);
            rep.require("LIP1", &[x, y], e.left.try_act(g, y) == Some(x));
            let (m1, m2, n1) = (
                rand_cvec(&mut rng, m.dims[x]),
                rand_cvec(&mut rng, m.dims[x]),
                rand_cvec(&mut rng, m.dims[y]),
            );
            let n2 = rand_cvec(&mut rng, m.dims[y]);
            let s = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let lhs = e.lip(x, y, &(&m1 * s + &m2), &n1).expect("checked");
            let rhs = e.lip(x, y, &m1, &n1).expect("checked") * s
                + e.lip(x, y, &m2, &n1).expect("checked");
            rep.residual("LIP2", &[x, y], rel_dist(&lhs, &rhs));
            let lhs = e.lip(x, y, &m1, &(&n1 * s + &n2)).expect("checked");
            let rhs = e.lip(x, y, &m1, &n1).expect("checked") * s.conj()
                + e.lip(x, y, &m1, &n2).expect("checked");
            rep.residual("LIP2", &[x, y], rel_dist(&lhs, &rhs));
            let tt = li(y, x);
            for i in 0..m.dims[x] {
                for j in 0..m.dims[y] {
                    let lhs = a.star(g, &t.value(i, j));
                    rep.residual("LIP3", &[x, y, i, j], rel_dist(&lhs, &tt.value(j, i)));
                }
            }
            // LIP4: a·⟨m, n⟩ = ⟨a▷m, n⟩ for a ∈ A(g'), s(g') = ρ(x)
            for gp in ga.arrows_with_src(ga.rng[g]) {
                let gg = ga.try_comp(gp, g).expect("composable");
                let xp = e.left.try_act(gp, x).expect("anchor matches");
                let tm = a.mult[gp * na + g].as_ref().expect("composable");
                for k in 0..a.dims[gp] {
                    let ak = unit_vec(k, a.dims[gp]);
                    for i in 0..m.dims[x] {
                        let am = la(gp, x).apply(&ak, &unit_vec(i, m.dims[x]));
                        for j in 0..m.dims[y] {
                            let lhs = tm.apply(&ak, &t.value(i, j));
                            let rhs = li(xp, y).apply(&am, &unit_vec(j, m.dims[y]));
                            let _ = gg;
                            rep.residual("LIP4", &[gp, x, y, k, i, j], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
            // LIP5: ⟨m₁, m₂⟩_𝓐 ▷ m₃ = m₁ ◁ ⟨m₂, m₃⟩_𝓑
            for z in 0..np {
                let Some(h) = m.action.find_translation(y, z) else {
                    continue;
                };
                let Some(w) = e.left.try_act(g, z) else {
                    rep.require("LIP5", &[x, y, z], false);
                    continue;
                };
                let tr = m.ract[x * nh + h].as_ref().expect("action defined");
                let trip = m.rip[y * np + z].as_ref().expect("same orbit");
                rep.require("LIP5", &[x, y, z], m.action.try_act(x, h) == Some(w));
                for i in 0..m.dims[x] {
                    for j in 0..m.dims[y] {
                        let tij = t.value(i, j);
                        for l in 0..m.dims[z] {
                            let el = unit_vec(l, m.dims[z]);
                            let lhs = la(g, z).apply(&tij, &el);
                            let rhs = tr.apply(&unit_vec(i, m.dims[x]), &trip.value(j, l));
                            rep.residual("LIP5", &[x, y, z, i, j, l], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
            let span = CMat::from_fn(a.dims[g], m.dims[x] * m.dims[y], |p, c| {
                t.get(c / m.dims[y], c % m.dims[y], p)
            });
            let r = rank(&span, tol);
            rep.outcome(
                "LDE8",
                &[x, y],
                (a.dims[g] - r.min(a.dims[g])) as f64,
                r == a.dims[g],
            );
        }
    }
    for x in 0..np {
        let g = e.leoq[x * np + x].expect("diagonal");
        let Some(u) = ga.unit_of_arrow(g) else {
            rep.require("LDE6", &[x], false);
            continue;
        };
        let alg = &a.unit_fibres[u];
        let t = li(x, x);
        let d = m.dims[x];
        let gram: Vec<Vec<AlgebraElement>> = (0..d)
            .map(|i| (0..d).map(|j| alg.element(&t.value(i, j))).collect())
            .collect();
        rep.residual("LDE6", &[x], gram_positivity_defect(alg, &gram));
    }
    rep
}

/// An isomorphism of Fell bundles over an isomorphism of base groupoids.
#[derive(Clone, Debug)]
pub struct BundleIsomorphism {
    pub base_map: Vec<usize>,
    /// `Ω_g: A₁(g) → A₂(ω(g))`.
    pub fibre_maps: Vec<CMat>,
    /// Residual of the defining solve `Ω_g⟨x, y⟩₁ = ⟨x, y⟩₂` per arrow.
    pub fibre_residuals: Vec<f64>,
    pub report: ValidationReport,
}

impl BundleIsomorphism {
    pub fn max_residual(&self) -> f64 {
        self.report.max_residual()
    }

    /// True iff every base and fibre map is an identity.
    pub fn is_identity(&self, tol: f64) -> bool {
        self.base_map.iter().enumerate().all(|(g, &w)| g == w)
            && self.fibre_maps.iter().all(|f| {
                f.is_square() && rel_dist_mat(f, &CMat::identity(f.nrows(), f.nrows())) <= tol
            })
    }
}

/// The isomorphism `Ω: 𝓐₁ → 𝓐₂` determined by `⟨m, n⟩_𝓐₁ ↦ ⟨m, n⟩_𝓐₂` over
/// `⟨x, y⟩_{G₁} ↦ ⟨x, y⟩_{G₂}`, with its verification report.
pub fn uniqueness_iso(e1: &Equivalence, e2: &Equivalence, tol: f64) -> Result<BundleIsomorphism> {
    let m1 = &e1.demi;
    let m2 = &e2.demi;
    if m1.n_points() != m2.n_points() || m1.dims != m2.dims || m1.action.sigma != m2.action.sigma {
        return Err(Error::structural(
            "the equivalences do not share their demi-equivalence",
        ));
    }
    let np = m1.n_points();
    let (a1, a2) = (&e1.bundle, &e2.bundle);
    let n = a1.n_arrows();
    if a2.n_arrows() != n {
        return Err(Error::axiom(format!(
            "base groupoids have {} and {} arrows",
            n,
            a2.n_arrows()
        )));
    }
    let mut rep = ValidationReport::new("uniqueness isomorphism", tol);
    for l in [
        "ISO-BASE",
        "ISO-SOLVE",
        "ISO-BIJ",
        "ISO-NORM",
        "ISO-MULT",
        "ISO-STAR",
    ] {
        rep.declare(l);
    }
    let mut omega = vec![usize::MAX; n];
    let mut pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for x in 0..np {
        for y in 0..np {
            let (Some(g1), Some(g2)) = (e1.leoq[x * np + y], e2.leoq[x * np + y]) else {
                if e1.leoq[x * np + y].is_some() != e2.leoq[x * np + y].is_some() {
                    return Err(Error::axiom(format!(
                        "pair ({x}, {y}) is related in only one equivalence"
                    )));
                }
                continue;
            };
            if omega[g1] == usize::MAX {
                omega[g1] = g2;
            } else if omega[g1] != g2 {
                return Err(Error::axiom(format!(
                    "base map is not well defined at pair ({x}, {y})"
                )));
            }
            pairs[g1].push((x, y));
        }
    }
    if omega.contains(&usize::MAX) {
        return Err(Error::axiom("some arrow is not of the form ⟨x, y⟩"));
    }
    rep.require(
        "ISO-BASE",
        &[],
        groupoid_isomorphic(&a1.base, &a2.base, &omega),
    );

    let mut fibre_maps = Vec::with_capacity(n);
    let mut fibre_residuals = Vec::with_capacity(n);
    for g in 0..n {
        let cols: usize = pairs[g].iter().map(|&(x, y)| m1.dims[x] * m1.dims[y]).sum();
        let mut p1 = CMat::zeros(a1.dims[g], cols);
        let mut p2 = CMat::zeros(a2.dims[omega[g]], cols);
        let mut c = 0;
        for &(x, y) in &pairs[g] {
            let (t1, t2) = (e1.left_inner_tensor(x, y)?, e2.left_inner_tensor(x, y)?);
            for i in 0..m1.dims[x] {
                for j in 0..m1.dims[y] {
                    p1.set_column(c, &t1.value(i, j));
                    p2.set_column(c, &t2.value(i, j));
                    c += 1;
                }
            }
        }
        let om = if p1 == p2 {
            CMat::identity(p1.nrows(), p1.nrows())
        } else {
            &p2 * pinv(&p1, 1e-12)
        };
        let res = fnorm(&(&om * &p1 - &p2)) / (1.0 + fnorm(&p2));
        if res > tol {
            return Err(Error::Residual {
                context: format!("Ω solve at arrow {g}"),
                residual: res,
            });
        }
        rep.residual("ISO-SOLVE", &[g], res);
        fibre_residuals.push(res);
        let bij = om.is_square() && rank(&om, tol) == om.nrows();
        rep.require("ISO-BIJ", &[g], bij);
        fibre_maps.push(om);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x0e6a);
    for g in 0..n {
        let om = &fibre_maps[g];
        let mut samples: Vec<CVec> = (0..a1.dims[g]).map(|i| unit_vec(i, a1.dims[g])).collect();
        for _ in 0..3 {
            samples.push(rand_cvec(&mut rng, a1.dims[g]));
        }
        for (k, b) in samples.iter().enumerate() {
            let n1 = fibre_norm(a1, g, b);
            let ob = om * b;
            let n2 = fibre_norm(a2, omega[g], &ob);
            rep.residual("ISO-NORM", &[g, k], (n1 - n2).abs() / (1.0 + n1));
            let lhs = om_apply(&fibre_maps, a1.base.inv[g], &a1.star(g, b));
            let rhs = a2.star(omega[g], &ob);
            rep.residual("ISO-STAR", &[g, k], rel_dist(&lhs, &rhs));
        }
    }
    for (g, h) in a1.base.composable_pairs() {
        let gh = a1.base.try_comp(g, h).expect("composable");
        let (wg, wh) = (omega[g], omega[h]);
        let Ok(t2) = a2.mult_tensor(wg, wh) else {
            rep.require("ISO-MULT", &[g, h], false);
            continue;
        };
        let t1 = a1.mult_tensor(g, h).expect("composable");
        for i in 0..a1.dims[g] {
            let oi = fibre_maps[g].column(i).into_owned();
            for j in 0..a1.dims[h] {
                let lhs = &fibre_maps[gh] * t1.value(i, j);
                let rhs = t2.apply(&oi, &fibre_maps[h].column(j).into_owned());
                rep.residual("ISO-MULT", &[g, h, i, j], rel_dist(&lhs, &rhs));
            }
        }
    }
    Ok(BundleIsomorphism {
        base_map: omega,
        fibre_maps,
        fibre_residuals,
        report: rep,
    })
}

fn om_apply(maps: &[CMat], g: usize, b: &CVec) -> CVec {
    &maps[g] * b
}

/// Checks the transport, flip and composition identities of the construction on
/// basis elements and `trials` random draws.
pub fn operator_properties_check(
    imp: &ImprimitivityFellBundle,
    trials: usize,
    tol: f64,
) -> ValidationReport {
    let mut rep = ValidationReport::new("construction operators", tol);
    for l in [
        "Ψ1", "Ψ2", "Ψ3", "Ψ4", "Ψ5", "PSI-DEF", "FLIP", "FLIP-PSI", "U1", "U2", "U3", "U4",
        "U-PHI", "U-ASSOC", "PHI", "REP",
    ] {
        rep.declare(l);
    }
    let m = imp.demi();
    let mut kit = match Kit::new(m, tol) {
        Ok(k) => k,
        Err(e) => {
            rep.structural_error(e.to_string());
            return rep;
        }
    };
    if let Err(e) = operator_checks(&mut kit, imp, trials, &mut rep) {
        rep.structural_error(e.to_string());
    }
    rep
}

fn random_k(
    kit: &mut Kit,
    rng: &mut ChaCha8Rng,
    x: usize,
    y: usize,
) -> Result<(Rc<KFibre>, KElem)> {
    let f = kit.fibre(x, y)?;
    let c = rand_cvec(rng, f.dim());
    let e = f.element(&c);
    Ok((f, e))
}

fn operator_checks(
    kit: &mut Kit,
    imp: &ImprimitivityFellBundle,
    trials: usize,
    rep: &mut ValidationReport,
) -> Result<()> {
    let m = imp.demi();
    let fb = &m.bundle;
    let g = &fb.base;
    let np = m.n_points();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5);
    let same = |x: usize, y: usize| m.action.sigma[x] == m.action.sigma[y];

    for xp in 0..np {
        for y in 0..np {
            if !same(xp, y) {
                continue;
            }
            let src = kit.fibre(xp, y)?;
            for h in g.arrows_with_src(m.action.sigma[xp]) {
                let hi = g.inv[h];
                let x = m.action.act(xp, hi)?;
                let yh = m.action.act(y, hi)?;
                let dst = kit.fibre(x, yh)?;
                // defining property on basis elements: S(k)◁b' = T(k◁b')
                for (kb, t) in src.basis.iter().enumerate() {
                    let xi = KElem {
                        at: (xp, y),
                        op: t.clone(),
                    };
                    let s = kit.psi_op(h, &xi, false)?;
                    rep.residual(
                        "Ψ2",
                        &[xp, y, h, kb],
                        (src.norm(&xi.op) - dst.norm(&s.op)).abs() / (1.0 + src.norm(&xi.op)),
                    );
                    for kk in 0..m.dims[yh] {
                        let ek = unit_vec(kk, m.dims[yh]);
                        for l in 0..fb.dims[h] {
                            let el = unit_vec(l, fb.dims[h]);
                            let lhs = m.act(x, h, &(&s.op * &ek), &el)?;
                            let rhs = &xi.op * m.act(yh, h, &ek, &el)?;
                            rep.residual("PSI-DEF", &[xp, y, h, kb, kk, l], rel_dist(&lhs, &rhs));
                        }
                    }
                    if g.is_unit_arrow(h) {
                        rep.residual("Ψ5", &[xp, y, kb], rel_dist_mat(&s.op, &xi.op));
                    }
                    let back = kit.psi_op(hi, &s, false)?;
                    rep.residual("Ψ4", &[xp, y, h, kb], rel_dist_mat(&back.op, &xi.op));
                    let fl = kit.flip(&s)?;
                    let other = kit.psi_op(h, &kit.flip(&xi)?, false)?;
                    rep.residual("FLIP-PSI", &[xp, y, h, kb], rel_dist_mat(&fl.op, &other.op));
                }
                for t in 0..trials {
                    let (_, a) = random_k(kit, &mut rng, xp, y)?;
                    let (_, b) = random_k(kit, &mut rng, xp, y)?;
                    let s = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let comb = KElem {
                        at: (xp, y),
                        op: &a.op * s + &b.op,
                    };
                    let lhs = kit.psi_op(h, &comb, false)?.op;
                    let rhs = kit.psi_op(h, &a, false)?.op * s + kit.psi_op(h, &b, false)?.op;
                    rep.residual("Ψ1", &[xp, y, h, t], rel_dist_mat(&lhs, &rhs));
                    let pa = kit.psi_op(h, &a, false)?;
                    for h2 in g.arrows_with_src(m.action.sigma[x]) {
                        let two = kit.psi_op(h2, &pa, false)?;
                        let hh = g.try_comp(h2, h).expect("composable");
                        let one = kit.psi_op(hh, &a, false)?;
                        rep.residual("Ψ3", &[xp, y, h, h2, t], rel_dist_mat(&two.op, &one.op));
                    }
                }
            }
        }
    }

    for x in 0..np {
        for y in 0..np {
            if !same(x, y) {
                continue;
            }
            let f = kit.fibre(x, y)?;
            for (kb, t) in f.basis.iter().enumerate() {
                let xi = KElem {
                    at: (x, y),
                    op: t.clone(),
                };
                let fl = kit.flip(&xi)?;
                let ff = kit.flip(&fl)?;
                rep.residual("FLIP", &[x, y, kb], rel_dist_mat(&ff.op, &xi.op));
                let fy = kit.fibre(y, x)?;
                rep.residual(
                    "FLIP",
                    &[x, y, kb],
                    (fy.norm(&fl.op) - f.norm(&xi.op)).abs() / (1.0 + f.norm(&xi.op)),
                );
                let u = u_compose(&xi, &fl)?;
                let fxx = kit.fibre(x, x)?;
                let nx = f.norm(&xi.op);
                rep.residual(
                    "U2",
                    &[x, y, kb],
                    (fxx.norm(&u.op) - nx * nx).abs() / (1.0 + nx * nx),
                );
                // U in terms of Φ on rank-one right factors
                for z in 0..np {
                    if !same(y, z) {
                        continue;
                    }
                    let fyz = kit.fibre(y, z)?;
                    let fxz = kit.fibre(x, z)?;
                    for k in 0..m.dims[y] {
                        for l in 0..m.dims[z] {
                            let (ek, el) = (unit_vec(k, m.dims[y]), unit_vec(l, m.dims[z]));
                            let r1 = KElem {
                                at: (y, z),
                                op: fyz.rank_one(&ek, &el),
                            };
                            let lhs = u_compose(&xi, &r1)?;
                            let phi = phi_apply(m, &xi, &ek)?;
                            let rhs = fxz.rank_one(&phi, &el);
                            rep.residual(
                                "U-PHI",
                                &[x, y, z, kb, k, l],
                                rel_dist_mat(&lhs.op, &rhs),
                            );
                        }
                    }
                }
                // Φ on rank-one maps and contractivity
                for i in 0..m.dims[x] {
                    for j in 0..m.dims[y] {
                        let (ei, ej) = (unit_vec(i, m.dims[x]), unit_vec(j, m.dims[y]));
                        let r1 = KElem {
                            at: (x, y),
                            op: f.rank_one(&ei, &ej),
                        };
                        for k in 0..m.dims[y] {
                            let ek = unit_vec(k, m.dims[y]);
                            let lhs = phi_apply(m, &r1, &ek)?;
                            let unit = g.unit_embed[m.action.sigma[y]];
                            let rhs = m.act(x, unit, &ei, &m.ip(y, y, &ej, &ek)?)?;
                            rep.residual("PHI", &[x, y, i, j, k], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
            for t in 0..trials {
                let (_, xi) = random_k(kit, &mut rng, x, y)?;
                let k = rand_cvec(&mut rng, m.dims[y]);
                let out = phi_apply(m, &xi, &k)?;
                let bound = f.norm(&xi.op) * m.norm(y, &k);
                rep.residual(
                    "PHI",
                    &[x, y, usize::MAX - t],
                    (m.norm(x, &out) - bound).max(0.0) / (1.0 + bound),
                );
            }
        }
    }

    for x in 0..np {
        for y in 0..np {
            if !same(x, y) {
                continue;
            }
            for z in 0..np {
                if !same(y, z) {
                    continue;
                }
                let fxy = kit.fibre(x, y)?;
                let fyz = kit.fibre(y, z)?;
                let fxz = kit.fibre(x, z)?;
                for t in 0..trials {
                    let (_, xi) = random_k(kit, &mut rng, x, y)?;
                    let (_, xi2) = random_k(kit, &mut rng, x, y)?;
                    let (_, eta) = random_k(kit, &mut rng, y, z)?;
                    let s = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    let lhs = u_compose(
                        &KElem {
                            at: (x, y),
                            op: &xi.op * s + &xi2.op,
                        },
                        &eta,
                    )?;
                    let rhs = u_compose(&xi, &eta)?.op * s + u_compose(&xi2, &eta)?.op;
                    rep.residual("U1", &[x, y, z, t], rel_dist_mat(&lhs.op, &rhs));
                    let u = u_compose(&xi, &eta)?;
                    let bound = fxy.norm(&xi.op) * fyz.norm(&eta.op);
                    rep.residual(
                        "U2",
                        &[x, y, z, t],
                        (fxz.norm(&u.op) - bound).max(0.0) / (1.0 + bound),
                    );
                    let lhs = kit.flip(&u)?;
                    let rhs = u_compose(&kit.flip(&eta)?, &kit.flip(&xi)?)?;
                    rep.residual("U4", &[x, y, z, t], rel_dist_mat(&lhs.op, &rhs.op));
                    for w in 0..np {
                        if !same(z, w) {
                            continue;
                        }
                        let (_, mu) = random_k(kit, &mut rng, z, w)?;
                        let l = u_compose(&u_compose(&xi, &eta)?, &mu)?;
                        let r = u_compose(&xi, &u_compose(&eta, &mu)?)?;
                        rep.residual("U-ASSOC", &[x, y, z, w, t], rel_dist_mat(&l.op, &r.op));
                    }
                    for h in g.arrows_with_src(m.action.sigma[x]) {
                        let lhs = kit.psi_op(h, &u, false)?;
                        let rhs =
                            u_compose(&kit.psi_op(h, &xi, false)?, &kit.psi_op(h, &eta, false)?)?;
                        rep.residual("U3", &[x, y, z, h, t], rel_dist_mat(&lhs.op, &rhs.op));
                    }
                }
            }
        }
    }

    let gq = &imp.groupoid;
    let a = imp.bundle();
    let na = gq.base.n_arrows();
    for g1 in 0..na {
        let rep1 = gq.rep[g1];
        for x in 0..np {
            for y in 0..np {
                if gq.class_of(x, y) != Some(g1) || (x, y) == rep1 {
                    continue;
                }
                let there = kit.transport(rep1, (x, y))?;
                let back = kit.transport((x, y), rep1)?;
                let id = &*back * &*there;
                rep.residual(
                    "REP",
                    &[g1, x, y],
                    rel_dist_mat(&id, &CMat::identity(id.nrows(), id.ncols())),
                );
            }
        }
    }
    for (g1, g2) in gq.base.composable_pairs() {
        let alt = |g: usize| -> (usize, usize) {
            let mut last = gq.rep[g];
            for x in 0..np {
                for y in 0..np {
                    if gq.class_of(x, y) == Some(g) {
                        last = (x, y);
                    }
                }
            }
            last
        };
        let (a1, b1) = alt(g1);
        let (a2, b2) = alt(g2);
        let t1 = kit.transport(gq.rep[g1], (a1, b1))?;
        let t2 = kit.transport(gq.rep[g2], (a2, b2))?;
        let h = m
            .action
            .find_translation(b1, a2)
            .expect("composable classes align");
        let p = kit.psi_matrix(a2, b2, h)?;
        let z = m.action.act(b2, g.inv[h])?;
        let g12 = gq.base.try_comp(g1, g2).expect("composable");
        let r = kit.transport((a1, z), gq.rep[g12])?;
        let s1 = kit.fibre(a1, b1)?.blocks();
        let s2 = kit.fibre(b1, z)?.blocks();
        let tm = a.mult_tensor(g1, g2).expect("composable");
        for k1 in 0..a.dims[g1] {
            for k2 in 0..a.dims[g2] {
                let c1 = t1.column(k1).into_owned();
                let c2 = &*p * t2.column(k2);
                let via = &*r * block_mul(&s1, &s2, &c1, &c2);
                rep.residual("REP", &[g1, g2, k1, k2], rel_dist(&via, &tm.value(k1, k2)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demiequiv::{induced_demi, random_demi, self_demi, DemiProfile};
    use crate::fellbundle::validate_fell_bundle;
    use crate::groupoid::{FiniteGroupoid, PrincipalAction};
    use crate::hilbmod::compacts_norm;

    fn pair_fixture() -> DemiEquivalence {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::point());
        let action =
            PrincipalAction::from_tables(&fb.base, vec![0, 0], vec![Some(0), Some(1)]).unwrap();
        let c = BlockAlgebra::scalars();
        let m1 = HilbertModule::standard(&c, &[1]).unwrap();
        let m2 = HilbertModule::standard(&c, &[2]).unwrap();
        let ract = vec![Some(m1.action.clone()), Some(m2.action.clone())];
        let upper = vec![((0, 0), m1.inner.clone()), ((1, 1), m2.inner.clone())];
        DemiEquivalence::from_upper(fb, action, vec![1, 2], ract, upper).unwrap()
    }

    #[test]
    fn k_fibre_dimensions() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let m = self_demi(&fb);
        assert_eq!(k_fibre(&m, 0, 0, 1e-9).unwrap().dim(), 1);
        let comps = vec![(0, 2)];
        let mm = induced_demi(&fb, &comps).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(k_fibre(&mm, x, y, 1e-9).unwrap().dim(), 4);
            }
        }
    }

    #[test]
    fn pair_fixture_dimensions() {
        let m = pair_fixture();
        assert!(validate_demi(&m, 1e-9).passed());
        assert_eq!(k_fibre(&m, 0, 1, 1e-9).unwrap().dim(), 2);
        let imp = build_imprimitivity_bundle(&m, 1e-9).unwrap();
        let mut dims = imp.bundle().dims.clone();
        dims.sort();
        assert_eq!(dims, vec![1, 2, 2, 4]);
        assert_eq!(dims.iter().sum::<usize>(), 9);
        assert!(validate_fell_bundle(imp.bundle(), 1e-9).passed());
        assert!(validate_equivalence(&imp.equivalence, 1e-9).passed());
    }

    #[test]
    fn psi_on_line_bundle_is_unimodular() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let m = self_demi(&fb);
        let xi = KElem {
            at: (1, 1),
            op: CMat::identity(1, 1) * C64::new(0.6, 0.8),
        };
        let out = psi_transport(&m, 1, &xi, 1e-9).unwrap();
        assert_eq!(out.at, (0, 0));
        assert!((out.op[(0, 0)].norm() - 1.0).abs() < 1e-12);
        let unit = psi_transport(&m, 0, &xi, 1e-9).unwrap();
        assert!(rel_dist_mat(&unit.op, &xi.op) < 1e-12);
    }

    #[test]
    fn flip_and_u_on_rank_ones() {
        let m = random_demi(3, &DemiProfile::default()).unwrap();
        let f = k_fibre(&m, 0, 0, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = m.dims[0];
        let (a, b, c, e) = (
            rand_cvec(&mut rng, d),
            rand_cvec(&mut rng, d),
            rand_cvec(&mut rng, d),
            rand_cvec(&mut rng, d),
        );
        let xi = KElem {
            at: (0, 0),
            op: f.rank_one(&a, &b),
        };
        let fl = flip(&m, &xi, 1e-9).unwrap();
        assert!(rel_dist_mat(&fl.op, &f.rank_one(&b, &a)) < 1e-9);
        let eta = KElem {
            at: (0, 0),
            op: f.rank_one(&c, &e),
        };
        let u = u_compose(&xi, &eta).unwrap();
        let unit = m.bundle.base.unit_embed[m.action.sigma[0]];
        let want = f.rank_one(
            &m.act(0, unit, &a, &m.ip(0, 0, &b, &c).unwrap()).unwrap(),
            &e,
        );
        assert!(rel_dist_mat(&u.op, &want) < 1e-9);
        let zero = KElem {
            at: (0, 0),
            op: CMat::zeros(d, d),
        };
        assert_eq!(phi_apply(&m, &zero, &a).unwrap(), CVec::zeros(d));
    }

    #[test]
    fn frame_norm_matches_adjoint_route() {
        let m = random_demi(5, &DemiProfile::default()).unwrap();
        let f = k_fibre(&m, 0, 0, 1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let c = rand_cvec(&mut rng, f.dim());
            let op = f.op(&c);
            let n1 = f.norm_coords(&c);
            let n2 = compacts_norm(&f.source, &f.target, &op, 1e-9).unwrap();
            assert!((n1 - n2).abs() < 1e-8 * (1.0 + n1));
        }
    }

    #[test]
    fn constructed_bundles_validate() {
        for seed in 0..6 {
            let m = random_demi(seed, &DemiProfile::default()).unwrap();
            let imp = build_imprimitivity_bundle(&m, 1e-9).unwrap();
            let r = validate_fell_bundle(imp.bundle(), 1e-9);
            assert!(r.passed(), "seed {seed}: {r}");
            let r = validate_equivalence(&imp.equivalence, 1e-9);
            assert!(r.passed(), "seed {seed}: {r}");
            let r = operator_properties_check(&imp, 2, 1e-9);
            assert!(r.passed(), "seed {seed}: {r}");
            let iso = uniqueness_iso(&imp.equivalence, &imp.equivalence, 1e-9).unwrap();
            assert!(iso.report.passed());
            assert!(iso.is_identity(1e-9));
        }
    }

    #[test]
    fn corrupted_left_action_fails_la2() {
        let m = random_demi(2, &DemiProfile::default()).unwrap();
        let imp = build_imprimitivity_bundle(&m, 1e-9).unwrap();
        let mut e = imp.equivalence.clone();
        let t = e.left_action.iter_mut().flatten().next().unwrap();
        t.data[0] += C64::new(0.5, 0.0);
        let r = validate_equivalence(&e, 1e-9);
        assert!(!r.passed());
        assert!(!r.status("LA2").unwrap().passed);
    }
}
