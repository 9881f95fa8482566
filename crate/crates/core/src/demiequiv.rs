//! Demi-equivalences: Fell-bundle-valued Hilbert bundles over a principal groupoid
//! space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cstar::{gram_positivity_defect, positivity_defect, trace, AlgebraElement};
use crate::error::{Error, Result};
use crate::fellbundle::{fibre_norm, random_fell_bundle, BundleProfile, FellBundle};
use crate::groupoid::{validate_action, FiniteGroupoid, PrincipalAction};
use crate::hilbmod::HilbertModule;
use crate::linalg::{
    herm_eig, inverse, rand_cvec, rand_wellcond, rank, rel_dist, Bilinear, CMat, CVec, C64, ONE,
};
use crate::report::ValidationReport;

/// A right `𝓑`-demi-equivalence over a principal action `(X, σ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemiEquivalence {
    pub bundle: FellBundle,
    pub action: PrincipalAction,
    /// `dim M(x)` per point.
    pub dims: Vec<usize>,
    /// `M(x) × B(h) → M(x·h)`, indexed `x·n_arrows + h`.
    pub ract: Vec<Option<Bilinear>>,
    /// `M(x₁) × M(x₂) → B(⟨x₁, x₂⟩)`, conjugate-linear in the first slot, indexed
    /// `x₁·n_points + x₂`.
    pub rip: Vec<Option<Bilinear>>,
}

impl DemiEquivalence {
    /// Assembles a demi-equivalence from both orientations of the inner product.
    pub fn new(
        bundle: FellBundle,
        action: PrincipalAction,
        dims: Vec<usize>,
        ract: Vec<Option<Bilinear>>,
        rip: Vec<Option<Bilinear>>,
    ) -> Result<Self> {
        let np = action.n_points;
        if action.n_arrows != bundle.n_arrows() {
            return Err(Error::structural(
                "action and bundle live over different groupoids",
            ));
        }
        if dims.len() != np || ract.len() != np * action.n_arrows || rip.len() != np * np {
            return Err(Error::structural(
                "demi-equivalence tables do not match the action",
            ));
        }
        Ok(DemiEquivalence {
            bundle,
            action,
            dims,
            ract,
            rip,
        })
    }

    /// Assembles a demi-equivalence from the inner products with `x₁ ≤ x₂`; the other
    /// orientation is `⟨n, m⟩ = ⟨m, n⟩*`.
    pub fn from_upper(
        bundle: FellBundle,
        action: PrincipalAction,
        dims: Vec<usize>,
        ract: Vec<Option<Bilinear>>,
        upper: Vec<((usize, usize), Bilinear)>,
    ) -> Result<Self> {
        let np = action.n_points;
        let mut rip: Vec<Option<Bilinear>> = vec![None; np * np];
        for ((x1, x2), t) in upper {
            if x1 > x2 || x2 >= np {
                return Err(Error::structural(format!(
                    "inner product ({x1}, {x2}) is not an upper pair"
                )));
            }
            if rip[x1 * np + x2].is_some() {
                return Err(Error::structural(format!(
                    "inner product ({x1}, {x2}) given twice"
                )));
            }
            if x1 != x2 {
                let h = action.find_translation(x1, x2).ok_or_else(|| {
                    Error::structural(format!("points {x1} and {x2} lie in different orbits"))
                })?;
                if t.dout != bundle.dims[h] {
                    return Err(Error::structural(format!(
                        "inner product ({x1}, {x2}) has the wrong shape"
                    )));
                }
                let flipped = Bilinear::from_basis_values(
                    t.dr,
                    t.dl,
                    bundle.dims[bundle.base.inv[h]],
                    |j, i| bundle.star(h, &t.value(i, j)),
                );
                rip[x2 * np + x1] = Some(flipped);
            }
            rip[x1 * np + x2] = Some(t);
        }
        DemiEquivalence::new(bundle, action, dims, ract, rip)
    }

    pub fn n_points(&self) -> usize {
        self.action.n_points
    }

    pub fn n_arrows(&self) -> usize {
        self.action.n_arrows
    }

    pub fn base(&self) -> &FiniteGroupoid {
        &self.bundle.base
    }

    /// `⟨x₁, x₂⟩_H`: the unique `h` with `x₁·h = x₂`.
    pub fn translation(&self, x1: usize, x2: usize) -> Result<usize> {
        self.action.find_translation(x1, x2).ok_or_else(|| {
            Error::structural(format!("points {x1} and {x2} lie in different orbits"))
        })
    }

    pub fn ract_tensor(&self, x: usize, h: usize) -> Result<&Bilinear> {
        self.ract
            .get(x * self.n_arrows() + h)
            .and_then(|t| t.as_ref())
            .ok_or_else(|| {
                Error::structural(format!("no right action for point {x} and arrow {h}"))
            })
    }

    pub fn rip_tensor(&self, x1: usize, x2: usize) -> Result<&Bilinear> {
        self.rip
            .get(x1 * self.n_points() + x2)
            .and_then(|t| t.as_ref())
            .ok_or_else(|| Error::structural(format!("no inner product for points ({x1}, {x2})")))
    }

    /// `m◁b ∈ M(x·h)`.
    pub fn act(&self, x: usize, h: usize, m: &CVec, b: &CVec) -> Result<CVec> {
        Ok(self.ract_tensor(x, h)?.apply(m, b))
    }

    /// `⟨m, n⟩ ∈ B(⟨x₁, x₂⟩)`.
    pub fn ip(&self, x1: usize, x2: usize, m: &CVec, n: &CVec) -> Result<CVec> {
        Ok(self.rip_tensor(x1, x2)?.apply_conj(m, n))
    }

    /// `‖m‖ = ‖⟨m, m⟩‖^{1/2}`.
    pub fn norm(&self, x: usize, m: &CVec) -> f64 {
        let u = self.action.sigma[x];
        let ip = self.rip[x * self.n_points() + x]
            .as_ref()
            .expect("diagonal inner product")
            .apply_conj(m, m);
        self.bundle.unit_fibres[u].norm_coords(&ip).max(0.0).sqrt()
    }

    /// `M(x)` as a right Hilbert module over `B(σ(x))`.
    pub fn module_at(&self, x: usize) -> Result<HilbertModule> {
        let u = self.action.sigma[x];
        let unit = self.bundle.base.unit_embed[u];
        HilbertModule::new(
            self.bundle.unit_fibres[u].clone(),
            self.dims[x],
            self.ract_tensor(x, unit)?.clone(),
            self.rip_tensor(x, x)?.clone(),
        )
    }

    /// Relabels points: old point `p` becomes `perm[p]`, fibres travelling along.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let np = self.n_points();
        let na = self.n_arrows();
        let action = self.action.permuted(perm);
        let mut dims = vec![0; np];
        let mut ract = vec![None; np * na];
        let mut rip = vec![None; np * np];
        for p in 0..np {
            dims[perm[p]] = self.dims[p];
            for h in 0..na {
                ract[perm[p] * na + h] = self.ract[p * na + h].clone();
            }
            for q in 0..np {
                rip[perm[p] * np + perm[q]] = self.rip[p * np + q].clone();
            }
        }
        DemiEquivalence {
            bundle: self.bundle.clone(),
            action,
            dims,
            ract,
            rip,
        }
    }

    /// Re-expresses each fibre `M(x)` in the basis given by the columns of `q[x]`.
    pub fn with_basis_change(&self, q: &[CMat]) -> Result<Self> {
        let np = self.n_points();
        let na = self.n_arrows();
        let mut qinv = Vec::with_capacity(np);
        for x in 0..np {
            if q[x].shape() != (self.dims[x], self.dims[x]) {
                return Err(Error::structural(format!(
                    "basis change at point {x} has the wrong shape"
                )));
            }
            qinv.push(inverse(&q[x]).ok_or_else(|| {
                Error::structural(format!("basis change at point {x} is singular"))
            })?);
        }
        let mut ract = vec![None; np * na];
        for x in 0..np {
            for h in 0..na {
                if let (Some(t), Some(y)) = (&self.ract[x * na + h], self.action.try_act(x, h)) {
                    let d = self.bundle.dims[h];
                    ract[x * na + h] =
                        Some(t.change_basis(&q[x], &CMat::identity(d, d), &qinv[y], false));
                }
            }
        }
        let mut rip = vec![None; np * np];
        for x1 in 0..np {
            for x2 in 0..np {
                if let Some(t) = &self.rip[x1 * np + x2] {
                    let d = t.dout;
                    rip[x1 * np + x2] =
                        Some(t.change_basis(&q[x1], &q[x2], &CMat::identity(d, d), true));
                }
            }
        }
        DemiEquivalence::new(
            self.bundle.clone(),
            self.action.clone(),
            self.dims.clone(),
            ract,
            rip,
        )
    }
}

/// The demi-equivalence `M(i, h) = ℂ^{n_i} ⊗ B(h)` over `X = ⊔_i u_i·H`, with
/// `(v⊗b)◁β = v⊗bβ` and `⟨v⊗b, w⊗c⟩ = ⟨v, w⟩·b*c`. Points are listed by arrow, then by
/// component; coordinates of `M(i, h)` are `a·dim B(h) + p`.
pub fn induced_demi(fb: &FellBundle, components: &[(usize, usize)]) -> Result<DemiEquivalence> {
    let g = &fb.base;
    let na = g.n_arrows();
    if components.iter().any(|&(u, n)| u >= g.n_units || n == 0) {
        return Err(Error::structural(
            "component unit out of range or zero multiplicity",
        ));
    }
    let mut points: Vec<(usize, usize)> = Vec::new();
    for h in 0..na {
        for (i, &(u, _)) in components.iter().enumerate() {
            if g.rng[h] == u {
                points.push((i, h));
            }
        }
    }
    let np = points.len();
    let index = |i: usize, h: usize| {
        points
            .iter()
            .position(|&p| p == (i, h))
            .expect("point listed")
    };
    let sigma: Vec<usize> = points.iter().map(|&(_, h)| g.src[h]).collect();
    let mut act = vec![None; np * na];
    for (x, &(i, h)) in points.iter().enumerate() {
        for k in 0..na {
            if let Some(hk) = g.try_comp(h, k) {
                act[x * na + k] = Some(index(i, hk));
            }
        }
    }
    let action = PrincipalAction::from_tables(g, sigma, act)?;
    let dims: Vec<usize> = points
        .iter()
        .map(|&(i, h)| components[i].1 * fb.dims[h])
        .collect();
    let mut ract = vec![None; np * na];
    for (x, &(i, h)) in points.iter().enumerate() {
        let n = components[i].1;
        let dh = fb.dims[h];
        for k in 0..na {
            if let Some(hk) = g.try_comp(h, k) {
                let t = fb.mult_tensor(h, k)?;
                let dk = fb.dims[k];
                let dhk = fb.dims[hk];
                let mut out = Bilinear::zeros(n * dh, dk, n * dhk);
                for a in 0..n {
                    for p in 0..dh {
                        for q in 0..dk {
                            for r in 0..dhk {
                                let idx = out.idx(a * dh + p, q, a * dhk + r);
                                out.data[idx] = t.get(p, q, r);
                            }
                        }
                    }
                }
                ract[x * na + k] = Some(out);
            }
        }
    }
    let mut rip = vec![None; np * np];
    for (x1, &(i1, h1)) in points.iter().enumerate() {
        for (x2, &(i2, h2)) in points.iter().enumerate() {
            if i1 != i2 {
                continue;
            }
            let n = components[i1].1;
            let h1i = g.inv[h1];
            let k = g.try_comp(h1i, h2).expect("same range");
            let t = fb.mult_tensor(h1i, h2)?;
            let (d1, d2, dk) = (fb.dims[h1], fb.dims[h2], fb.dims[k]);
            let mut out = Bilinear::zeros(n * d1, n * d2, dk);
            for p in 0..d1 {
                let mut ep = CVec::zeros(d1);
                ep[p] = ONE;
                let ps = fb.star(h1, &ep);
                for q in 0..d2 {
                    let mut eq = CVec::zeros(d2);
                    eq[q] = ONE;
                    let v = t.apply(&ps, &eq);
                    for a in 0..n {
                        out.set_value(a * d1 + p, a * d2 + q, &v);
                    }
                }
            }
            rip[x1 * np + x2] = Some(out);
        }
    }
    DemiEquivalence::new(fb.clone(), action, dims, ract, rip)
}

/// `𝓑` as a demi-equivalence over itself: `X = H`, `ract = mult`, `⟨b₁, b₂⟩ = b₁*b₂`.
pub fn self_demi(fb: &FellBundle) -> DemiEquivalence {
    let comps: Vec<(usize, usize)> = (0..fb.base.n_units).map(|u| (u, 1)).collect();
    induced_demi(fb, &comps).expect("self demi-equivalence is well formed")
}

/// Size parameters for [`random_demi`].
#[derive(Clone, Debug, PartialEq)]
pub struct DemiProfile {
    pub bundle: BundleProfile,
    pub max_multiplicity: usize,
    pub max_components: usize,
}

impl Default for DemiProfile {
    fn default() -> Self {
        DemiProfile {
            bundle: BundleProfile {
                max_arrows: 4,
                max_fibre_dim: 2,
                ..Default::default()
            },
            max_multiplicity: 2,
            max_components: 2,
        }
    }
}

/// A random valid demi-equivalence: an induced one over a random bundle, one orbit per
/// connected component plus optional extras, in random fibre bases.
pub fn random_demi(seed: u64, profile: &DemiProfile) -> Result<DemiEquivalence> {
    let fb = random_fell_bundle(seed, &profile.bundle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let g = &fb.base;
    let comp = g.unit_components();
    let mut roots = comp.clone();
    roots.sort_unstable();
    roots.dedup();
    let mut components = Vec::new();
    for &r in &roots {
        let units: Vec<usize> = (0..g.n_units).filter(|&u| comp[u] == r).collect();
        let u = units[rng.random_range(0..units.len())];
        components.push((u, rng.random_range(1..=profile.max_multiplicity)));
    }
    while components.len() < profile.max_components && rng.random_bool(0.5) {
        let u = rng.random_range(0..g.n_units);
        components.push((u, rng.random_range(1..=profile.max_multiplicity)));
    }
    let m = induced_demi(&fb, &components)?;
    let q: Vec<CMat> = m
        .dims
        .iter()
        .map(|&d| rand_wellcond(&mut rng, d, 0.5, 2.0))
        .collect();
    m.with_basis_change(&q)
}

fn basis(i: usize, n: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = ONE;
    v
}

/// Checks the demi-equivalence axioms on basis tuples.
pub fn validate_demi(m: &DemiEquivalence, tol: f64) -> ValidationReport {
    let mut rep = ValidationReport::new("demi-equivalence", tol);
    let fb = &m.bundle;
    let g = &fb.base;
    let ra = validate_action(g, &m.action);
    for s in &ra.structural {
        rep.structural_error(format!("action: {s}"));
    }
    for l in ra.failed_labels() {
        rep.structural_error(format!("action fails {l}"));
    }
    if rep.has_structural_errors() {
        return rep;
    }
    for l in ["DE1", "DE2", "DE3", "DE4", "DE5", "DE6", "DE7", "DE8"] {
        rep.declare(l);
    }
    let np = m.n_points();
    let na = m.n_arrows();
    let n = g.n_arrows();
    for x in 0..np {
        for h in 0..na {
            let ok = match (m.action.try_act(x, h), &m.ract[x * na + h]) {
                (Some(y), Some(t)) => (t.dl, t.dr, t.dout) == (m.dims[x], fb.dims[h], m.dims[y]),
                (None, None) => true,
                _ => false,
            };
            rep.require("DE1", &[x, h], ok);
        }
    }
    for x1 in 0..np {
        for x2 in 0..np {
            let ok = match (m.action.find_translation(x1, x2), &m.rip[x1 * np + x2]) {
                (Some(h), Some(t)) => (t.dl, t.dr, t.dout) == (m.dims[x1], m.dims[x2], fb.dims[h]),
                (None, None) => true,
                _ => false,
            };
            rep.require("DE2", &[x1, x2], ok);
        }
    }
    if !rep.passed() {
        return rep;
    }
    rep.note("DE3", "continuity is automatic for finite discrete spaces; sesquilinearity holds by the tensor form");

    for x1 in 0..np {
        for x2 in 0..np {
            let Some(k) = m.action.find_translation(x1, x2) else {
                continue;
            };
            let t12 = m.rip[x1 * np + x2].as_ref().expect("checked");
            for h in g.arrows_with_rng(m.action.sigma[x2]) {
                let y = m.action.try_act(x2, h).expect("anchor matches");
                let t1y = m.rip[x1 * np + y].as_ref().expect("same orbit");
                let ta = m.ract[x2 * na + h].as_ref().expect("checked");
                let tm = fb.mult[k * n + h].as_ref().expect("composable");
                for i in 0..m.dims[x1] {
                    for j in 0..m.dims[x2] {
                        let ip = t12.value(i, j);
                        for b in 0..fb.dims[h] {
                            let lhs = t1y.apply_conj(&basis(i, m.dims[x1]), &ta.value(j, b));
                            let rhs = tm.apply(&ip, &basis(b, fb.dims[h]));
                            rep.residual("DE4", &[x1, x2, h, i, j, b], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
            let t21 = m.rip[x2 * np + x1]
                .as_ref()
                .expect("symmetric orbit relation");
            for i in 0..m.dims[x1] {
                for j in 0..m.dims[x2] {
                    let lhs = t21.value(j, i);
                    let rhs = fb.star(k, &t12.value(i, j));
                    rep.residual("DE5", &[x1, x2, i, j], rel_dist(&lhs, &rhs));
                }
            }
        }
    }

    for x in 0..np {
        let u = m.action.sigma[x];
        let alg = &fb.unit_fibres[u];
        let t = m.rip[x * np + x].as_ref().expect("diagonal");
        let d = m.dims[x];
        let gram: Vec<Vec<AlgebraElement>> = (0..d)
            .map(|i| (0..d).map(|j| alg.element(&t.value(i, j))).collect())
            .collect();
        rep.residual("DE6", &[x], gram_positivity_defect(alg, &gram));
        let f = CMat::from_fn(d, d, |p, q| trace(&gram[p][q]));
        let (vals, _) = herm_eig(&f);
        let scale = 1.0 + vals.last().map_or(0.0, |v| v.abs());
        let lmin = vals.first().cloned().unwrap_or(1.0);
        rep.outcome("DE6", &[x], (-lmin / scale).max(0.0), lmin > tol * scale);
        let span = CMat::from_fn(alg.dim(), d * d, |a, c| t.get(c / d, c % d, a));
        let r = rank(&span, tol);
        rep.outcome(
            "DE8",
            &[x],
            (alg.dim() - r.min(alg.dim())) as f64,
            r == alg.dim(),
        );
    }
    rep.note("DE7", "the norm on M(x) is defined as ‖⟨m,m⟩‖^{1/2}");
    rep
}

/// Checks the consequences of the demi-equivalence axioms, algebraic identities on
/// basis tuples and norm inequalities on `trials` random draws.
pub fn derived_properties_check(m: &DemiEquivalence, trials: usize, tol: f64) -> ValidationReport {
    let mut rep = ValidationReport::new("demi-equivalence derived properties", tol);
    for l in [
        "DE9", "DE10", "DE11", "DE12", "DE13", "DE14", "DE15", "DE16", "MSAT",
    ] {
        rep.declare(l);
    }
    let fb = &m.bundle;
    let g = &fb.base;
    let np = m.n_points();
    let na = m.n_arrows();
    let n = g.n_arrows();
    let mut rng = ChaCha8Rng::seed_from_u64(0xde);

    for x in 0..np {
        match m.module_at(x) {
            Ok(module) => {
                let r = module.validate(tol, x as u64);
                rep.outcome("DE9", &[x], r.max_residual(), r.passed());
            }
            Err(_) => rep.require("DE9", &[x], false),
        }
    }

    for x1 in 0..np {
        for x2 in 0..np {
            let Some(k) = m.action.find_translation(x1, x2) else {
                continue;
            };
            let ok = g.rng[k] == m.action.sigma[x1] && g.src[k] == m.action.sigma[x2];
            rep.require("DE11", &[x1, x2], ok && m.action.try_act(x1, k) == Some(x2));
            let t12 = m.rip[x1 * np + x2].as_ref().expect("same orbit");
            for h in g.arrows_with_rng(m.action.sigma[x1]) {
                let y = m.action.try_act(x1, h).expect("anchor matches");
                let hi = g.inv[h];
                let ty2 = m.rip[y * np + x2].as_ref().expect("same orbit");
                let ta = m.ract[x1 * na + h].as_ref().expect("action defined");
                let tm = fb.mult[hi * n + k].as_ref().expect("composable");
                for i in 0..m.dims[x1] {
                    for b in 0..fb.dims[h] {
                        let mb = ta.value(i, b);
                        let bs = fb.star(h, &basis(b, fb.dims[h]));
                        for j in 0..m.dims[x2] {
                            let lhs = ty2.apply_conj(&mb, &basis(j, m.dims[x2]));
                            let rhs = tm.apply(&bs, &t12.value(i, j));
                            rep.residual("DE10", &[x1, x2, h, i, b, j], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
            for t in 0..trials {
                let mv = rand_cvec(&mut rng, m.dims[x1]);
                let nv = rand_cvec(&mut rng, m.dims[x2]);
                let mn = t12.apply_conj(&mv, &nv);
                let nm = m.rip[x2 * np + x1]
                    .as_ref()
                    .expect("same orbit")
                    .apply_conj(&nv, &mv);
                let prod = fb.mult[k * n + g.inv[k]]
                    .as_ref()
                    .expect("composable")
                    .apply(&mn, &nm);
                let mm = m.rip[x1 * np + x1]
                    .as_ref()
                    .expect("diagonal")
                    .apply_conj(&mv, &mv);
                let nn = m.norm(x2, &nv);
                let diff = mm * C64::new(nn * nn, 0.0) - prod;
                let alg = &fb.unit_fibres[m.action.sigma[x1]];
                rep.residual("DE12", &[x1, x2, t], positivity_defect(&alg.element(&diff)));
            }
        }
    }

    for x in 0..np {
        for h in g.arrows_with_rng(m.action.sigma[x]) {
            let y = m.action.try_act(x, h).expect("anchor matches");
            let ta = m.ract[x * na + h].as_ref().expect("action defined");
            let span = CMat::from_fn(m.dims[y], m.dims[x] * fb.dims[h], |p, c| {
                ta.get(c / fb.dims[h], c % fb.dims[h], p)
            });
            let r = rank(&span, tol);
            rep.outcome(
                "MSAT",
                &[x, h],
                (m.dims[y] - r.min(m.dims[y])) as f64,
                r == m.dims[y],
            );
            for k in g.arrows_with_rng(g.src[h]) {
                let hk = g.try_comp(h, k).expect("composable");
                let tb = m.ract[y * na + k].as_ref().expect("action defined");
                let tab = m.ract[x * na + hk].as_ref().expect("action defined");
                let tm = fb.mult[h * n + k].as_ref().expect("composable");
                for i in 0..m.dims[x] {
                    for b in 0..fb.dims[h] {
                        let mb = ta.value(i, b);
                        for c in 0..fb.dims[k] {
                            let lhs = tb.apply(&mb, &basis(c, fb.dims[k]));
                            let rhs = tab.apply(&basis(i, m.dims[x]), &tm.value(b, c));
                            rep.residual("DE14", &[x, h, k, i, b, c], rel_dist(&lhs, &rhs));
                        }
                    }
                }
            }
            for t in 0..trials {
                let (m1, m2) = (
                    rand_cvec(&mut rng, m.dims[x]),
                    rand_cvec(&mut rng, m.dims[x]),
                );
                let (b1, b2) = (
                    rand_cvec(&mut rng, fb.dims[h]),
                    rand_cvec(&mut rng, fb.dims[h]),
                );
                let s = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let lhs = ta.apply(&(&m1 * s + &m2), &b1);
                let rhs = ta.apply(&m1, &b1) * s + ta.apply(&m2, &b1);
                rep.residual("DE13", &[x, h, t], rel_dist(&lhs, &rhs));
                let lhs = ta.apply(&m1, &(&b1 * s + &b2));
                let rhs = ta.apply(&m1, &b1) * s + ta.apply(&m1, &b2);
                rep.residual("DE13", &[x, h, t], rel_dist(&lhs, &rhs));
                let mb = ta.apply(&m1, &b1);
                let bound = m.norm(x, &m1) * fibre_norm(fb, h, &b1);
                let excess = (m.norm(y, &mb) - bound).max(0.0) / (1.0 + bound);
                rep.residual("DE15", &[x, h, t], excess);
            }
        }
    }
    rep.note("DE16", "continuity is automatic for finite discrete spaces");
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupoid::FiniteGroupoid;

    #[test]
    fn self_demi_over_z2_is_valid() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let m = self_demi(&fb);
        assert_eq!(m.action, PrincipalAction::translation(&fb.base));
        let r = validate_demi(&m, 1e-9);
        assert!(r.passed(), "{r}");
        let d = derived_properties_check(&m, 20, 1e-9);
        assert!(d.passed(), "{d}");
    }

    #[test]
    fn negated_inner_product_fails_de6() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let mut m = self_demi(&fb);
        for t in m.rip.iter_mut().flatten() {
            t.scale(C64::new(-1.0, 0.0));
        }
        let r = validate_demi(&m, 1e-9);
        let s = r.status("DE6").unwrap();
        assert!(!s.passed);
        assert!(!s.witnesses.is_empty());
    }

    #[test]
    fn matrix_amplification_is_valid() {
        let fb = random_fell_bundle(4, &BundleProfile::default()).unwrap();
        let comps: Vec<(usize, usize)> = (0..fb.base.n_units).map(|u| (u, 2)).collect();
        let m = induced_demi(&fb, &comps).unwrap();
        assert!(validate_demi(&m, 1e-9).passed());
        assert!(derived_properties_check(&m, 30, 1e-9).passed());
    }

    #[test]
    fn corrupted_action_fails_de14() {
        let fb = FellBundle::line_bundle(&FiniteGroupoid::cyclic(2));
        let mut m = self_demi(&fb);
        let na = m.n_arrows();
        m.ract[na + 1].as_mut().unwrap().data[0] = C64::new(2.0, 0.0);
        let r = derived_properties_check(&m, 5, 1e-9);
        let s = r.status("DE14").unwrap();
        assert!(!s.passed);
        assert!(!s.witnesses.is_empty());
    }

    #[test]
    fn upper_orientation_round_trip() {
        let m = random_demi(7, &DemiProfile::default()).unwrap();
        let np = m.n_points();
        let upper: Vec<((usize, usize), Bilinear)> = (0..np)
            .flat_map(|a| (a..np).map(move |b| (a, b)))
            .filter_map(|(a, b)| m.rip[a * np + b].clone().map(|t| ((a, b), t)))
            .collect();
        let back = DemiEquivalence::from_upper(
            m.bundle.clone(),
            m.action.clone(),
            m.dims.clone(),
            m.ract.clone(),
            upper,
        )
        .unwrap();
        for (a, b) in back.rip.iter().zip(&m.rip) {
            match (a, b) {
                (Some(a), Some(b)) => {
                    let d = a
                        .data
                        .iter()
                        .zip(&b.data)
                        .map(|(x, y)| (x - y).norm())
                        .fold(0.0, f64::max);
                    assert!(d < 1e-12);
                }
                (None, None) => {}
                _ => panic!("orientation mismatch"),
            }
        }
    }

    #[test]
    fn random_demis_validate() {
        for seed in 0..15 {
            let m = random_demi(seed, &DemiProfile::default()).unwrap();
            let r = validate_demi(&m, 1e-9);
            assert!(r.passed(), "seed {seed}: {r}");
            let d = derived_properties_check(&m, 10, 1e-9);
            assert!(d.passed(), "seed {seed}: {d}");
        }
    }
}
