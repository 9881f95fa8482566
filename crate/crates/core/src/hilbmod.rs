//! Finite-dimensional right Hilbert modules over block algebras and their compact
//! operators.

use rand::Rng;

use crate::cstar::{operator_norm, positivity_defect, AlgebraElement, BlockAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{
    fnorm, herm_eig, inverse, lstsq, nullspace_scaled, rand_cvec, rand_wellcond, rank, rel_dist,
    spectral_radius, vnorm, Bilinear, CMat, CVec, C64, ONE,
};
use crate::report::ValidationReport;

/// A right Hilbert module `X` over a [`BlockAlgebra`] `B`, given by structure tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct HilbertModule {
    pub algebra: BlockAlgebra,
    pub dim: usize,
    /// `X × B → X`.
    pub action: Bilinear,
    /// `X × X → B`, conjugate-linear in the first slot.
    pub inner: Bilinear,
}

impl HilbertModule {
    pub fn new(
        algebra: BlockAlgebra,
        dim: usize,
        action: Bilinear,
        inner: Bilinear,
    ) -> Result<Self> {
        let d = algebra.dim();
        if (action.dl, action.dr, action.dout) != (dim, d, dim) {
            return Err(Error::structural(
                "module action tensor has the wrong shape",
            ));
        }
        if (inner.dl, inner.dr, inner.dout) != (dim, dim, d) {
            return Err(Error::structural(
                "module inner-product tensor has the wrong shape",
            ));
        }
        Ok(HilbertModule {
            algebra,
            dim,
            action,
            inner,
        })
    }

    /// `⊕_j M_{m_j × n_j}(ℂ)` with right multiplication and `⟨x, y⟩ = ⊕_j x_j* y_j`.
    /// Coordinates are the blocks in order, each row-major.
    pub fn standard(algebra: &BlockAlgebra, mults: &[usize]) -> Result<Self> {
        if mults.len() != algebra.blocks.len() {
            return Err(Error::structural("one multiplicity per block is required"));
        }
        let mut offs = Vec::new();
        let mut dim = 0;
        for (j, &n) in algebra.blocks.iter().enumerate() {
            offs.push(dim);
            dim += mults[j] * n;
        }
        let locate = |i: usize| -> (usize, usize, usize) {
            let j = offs.iter().rposition(|&o| o <= i).expect("index in range");
            let n = algebra.blocks[j];
            ((j), (i - offs[j]) / n, (i - offs[j]) % n)
        };
        let da = algebra.dim();
        let mut action = Bilinear::zeros(dim, da, dim);
        for i in 0..dim {
            let (j, r, c) = locate(i);
            let n = algebra.blocks[j];
            for e in 0..n {
                let p = algebra.index(j, c, e);
                let out = offs[j] + r * n + e;
                let idx = action.idx(i, p, out);
                action.data[idx] = ONE;
            }
        }
        let mut inner = Bilinear::zeros(dim, dim, da);
        for i in 0..dim {
            let (j, r, c) = locate(i);
            for k in 0..dim {
                let (j2, r2, c2) = locate(k);
                if j2 == j && r2 == r {
                    let idx = inner.idx(i, k, algebra.index(j, c, c2));
                    inner.data[idx] = ONE;
                }
            }
        }
        HilbertModule::new(algebra.clone(), dim, action, inner)
    }

    /// A random full module: a standard module with random multiplicities in
    /// `1..=max_mult`, expressed in a random well-conditioned basis.
    pub fn random<R: Rng>(rng: &mut R, algebra: &BlockAlgebra, max_mult: usize) -> Self {
        let mults: Vec<usize> = algebra
            .blocks
            .iter()
            .map(|_| rng.random_range(1..=max_mult))
            .collect();
        let m = HilbertModule::standard(algebra, &mults).expect("valid multiplicities");
        let p = rand_wellcond(rng, m.dim, 0.5, 2.0);
        m.change_basis(&p)
    }

    /// Re-expresses the module in the basis given by the columns of `p`.
    pub fn change_basis(&self, p: &CMat) -> Self {
        let pinv = inverse(p).expect("basis change must be invertible");
        let ida = CMat::identity(self.algebra.dim(), self.algebra.dim());
        let action = self.action.change_basis(p, &ida, &pinv, false);
        let inner = self.inner.change_basis(p, p, &ida, true);
        HilbertModule {
            algebra: self.algebra.clone(),
            dim: self.dim,
            action,
            inner,
        }
    }

    pub fn act(&self, m: &CVec, b: &CVec) -> CVec {
        self.action.apply(m, b)
    }

    /// `⟨m, n⟩` in algebra coordinates.
    pub fn ip(&self, m: &CVec, n: &CVec) -> CVec {
        self.inner.apply_conj(m, n)
    }

    pub fn ip_elem(&self, m: &CVec, n: &CVec) -> AlgebraElement {
        self.algebra.element(&self.ip(m, n))
    }

    /// `‖m‖ = ‖⟨m, m⟩‖^{1/2}`.
    pub fn norm(&self, m: &CVec) -> f64 {
        operator_norm(&self.ip_elem(m, m)).max(0.0).sqrt()
    }

    /// Matrix of `m ↦ m·b`.
    pub fn right_matrix(&self, b: &CVec) -> CMat {
        self.action.right_operator(b)
    }

    /// Orthonormal bases of the corner spaces `X·E₁₁⁽ʲ⁾`.
    pub fn frame(&self, tol: f64) -> Frame {
        let mut vectors = Vec::new();
        let mut corners = Vec::new();
        for j in 0..self.algebra.blocks.len() {
            let e = self.algebra.corner_coords(j);
            let corner = self.algebra.index(j, 0, 0);
            corners.push(corner);
            let r = self.right_matrix(&e);
            let cols: Vec<CVec> = (0..self.dim).map(|p| r.column(p).into_owned()).collect();
            let g = CMat::from_fn(self.dim, self.dim, |p, q| {
                self.ip(&cols[p], &cols[q])[corner]
            });
            let (vals, vecs) = herm_eig(&g);
            let lmax = vals.iter().cloned().fold(0.0, f64::max);
            let mut vs = Vec::new();
            for a in (0..vals.len()).rev() {
                if vals[a] <= tol * lmax.max(1.0) || lmax <= 0.0 {
                    continue;
                }
                let s = C64::new(1.0 / vals[a].sqrt(), 0.0);
                let mut v = CVec::zeros(self.dim);
                for p in 0..self.dim {
                    v += &cols[p] * (vecs[(p, a)] * s);
                }
                vs.push(v);
            }
            vectors.push(vs);
        }
        Frame { corners, vectors }
    }

    /// Checks the Hilbert-module axioms on basis tuples and random draws.
    pub fn validate(&self, tol: f64, seed: u64) -> ValidationReport {
        use rand::SeedableRng;
        let mut rep = ValidationReport::new("hilbert module", tol);
        let d = self.dim;
        let da = self.algebra.dim();
        let basis = |i: usize, n: usize| {
            let mut v = CVec::zeros(n);
            v[i] = ONE;
            v
        };
        for m in 0..d {
            for n in 0..d {
                let mn = self.ip(&basis(m, d), &basis(n, d));
                let nm = self.ip(&basis(n, d), &basis(m, d));
                rep.residual(
                    "HM-ADJ",
                    &[m, n],
                    rel_dist(&self.algebra.star_coords(&mn), &nm),
                );
                for b in 0..da {
                    let lhs = self.ip(&basis(m, d), &self.act(&basis(n, d), &basis(b, da)));
                    let rhs = self.algebra.mul_coords(&mn, &basis(b, da));
                    rep.residual("HM-LIN", &[m, n, b], rel_dist(&lhs, &rhs));
                }
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for t in 0..(d + 8) {
            let m = if t < d {
                basis(t, d)
            } else {
                rand_cvec(&mut rng, d)
            };
            rep.residual("HM-POS", &[t], positivity_defect(&self.ip_elem(&m, &m)));
        }
        let f = CMat::from_fn(d, d, |p, q| {
            let e = self.ip_elem(&basis(p, d), &basis(q, d));
            crate::cstar::trace(&e)
        });
        let (vals, _) = herm_eig(&f);
        let scale = 1.0 + vals.last().cloned().unwrap_or(0.0).abs();
        let lmin = vals.first().cloned().unwrap_or(1.0);
        rep.outcome("HM-DEF", &[], (-lmin / scale).max(0.0), lmin > tol * scale);
        let span = CMat::from_fn(da, d * d, |a, c| {
            self.ip(&basis(c / d, d), &basis(c % d, d))[a]
        });
        rep.require("HM-FULL", &[], rank(&span, tol) == da);
        rep
    }
}

/// Orthonormal bases `v^j_a` of `X·E₁₁⁽ʲ⁾` with respect to `⟨v, w⟩_j`, the
/// `E₁₁⁽ʲ⁾`-coefficient of `⟨v, w⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Coordinate index of `E₁₁⁽ʲ⁾` in the algebra.
    pub corners: Vec<usize>,
    pub vectors: Vec<Vec<CVec>>,
}

impl Frame {
    /// `k_j = dim X·E₁₁⁽ʲ⁾`.
    pub fn dims(&self) -> Vec<usize> {
        self.vectors.iter().map(|v| v.len()).collect()
    }
}

/// Basis of the compact operators `Y → X` built from two frames: the rank-one
/// maps `|v^j_a(X)⟩⟨v^j_b(Y)|`, ordered by block, then row, then column.
pub fn frame_basis(x: &HilbertModule, fx: &Frame, y: &HilbertModule, fy: &Frame) -> Vec<CMat> {
    let mut out = Vec::new();
    for j in 0..fx.vectors.len() {
        for va in &fx.vectors[j] {
            for vb in &fy.vectors[j] {
                out.push(rank_one_unchecked(x, y, va, vb));
            }
        }
    }
    out
}

/// Coordinates `⟨v^j_a(X), T v^j_b(Y)⟩_j` of a compact operator in the frame basis.
pub fn frame_coords(x: &HilbertModule, fx: &Frame, fy: &Frame, t: &CMat) -> CVec {
    let mut out = Vec::new();
    for j in 0..fx.vectors.len() {
        let c = fx.corners[j];
        for va in &fx.vectors[j] {
            for vb in &fy.vectors[j] {
                out.push(x.ip(va, &(t * vb))[c]);
            }
        }
    }
    CVec::from_vec(out)
}

/// The space of `B`-linear maps `Y → X`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuleMapSpace {
    pub source_dim: usize,
    pub target_dim: usize,
    pub basis: Vec<CMat>,
    /// Dimension of the span of all rank-one operators.
    pub rank_one_dim: usize,
}

impl ModuleMapSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Coordinates of `t` in the basis, with the relative residual of the fit.
    pub fn coordinates(&self, t: &CMat) -> (CVec, f64) {
        let n = self.source_dim * self.target_dim;
        let a = CMat::from_fn(n, self.basis.len(), |r, c| self.basis[c][r]);
        let b = CMat::from_fn(n, 1, |r, _| t[r]);
        let (x, res) = lstsq(&a, &b, 1e-12);
        (x.column(0).into_owned(), res)
    }
}

fn rank_one_unchecked(x: &HilbertModule, y: &HilbertModule, xv: &CVec, yv: &CVec) -> CMat {
    let mut m = CMat::zeros(x.dim, y.dim);
    let left = y.inner.left_operator(yv, true);
    let act = x.action.left_operator(xv, false);
    let prod = act * left;
    m.copy_from(&prod);
    m
}

/// The operator `z ↦ x·⟨y, z⟩` from `Y` to `X`.
pub fn rank_one(x: &HilbertModule, y: &HilbertModule, xv: &CVec, yv: &CVec) -> Result<CMat> {
    if x.algebra != y.algebra {
        return Err(Error::structural(
            "rank-one operator between modules over different algebras",
        ));
    }
    if xv.len() != x.dim || yv.len() != y.dim {
        return Err(Error::structural("module element has the wrong dimension"));
    }
    Ok(rank_one_unchecked(x, y, xv, yv))
}

/// All `B`-linear maps `Y → X`, as the nullspace of `{T·R_b − R_b·T}`.
pub fn compacts_space(y: &HilbertModule, x: &HilbertModule, tol: f64) -> Result<ModuleMapSpace> {
    if x.algebra != y.algebra {
        return Err(Error::structural(
            "module map space between modules over different algebras",
        ));
    }
    let (dx, dy) = (x.dim, y.dim);
    let da = x.algebra.dim();
    let n = dx * dy;
    let mut c = CMat::zeros(n * da, n);
    let mut scale: f64 = 0.0;
    for l in 0..da {
        let mut b = CVec::zeros(da);
        b[l] = ONE;
        let ry = y.right_matrix(&b);
        let rx = x.right_matrix(&b);
        scale = scale.max(fnorm(&ry) + fnorm(&rx));
        let block = ry.transpose().kronecker(&CMat::identity(dx, dx))
            - CMat::identity(dy, dy).kronecker(&rx);
        c.view_mut((l * n, 0), (n, n)).copy_from(&block);
    }
    let ns = nullspace_scaled(&c, tol, scale);
    let basis: Vec<CMat> = (0..ns.ncols())
        .map(|k| CMat::from_fn(dx, dy, |r, col| ns[(r + col * dx, k)]))
        .collect();
    let mut span = CMat::zeros(n, dx * dy);
    for i in 0..dx {
        for j in 0..dy {
            let mut u = CVec::zeros(dx);
            u[i] = ONE;
            let mut v = CVec::zeros(dy);
            v[j] = ONE;
            let t = rank_one_unchecked(x, y, &u, &v);
            for r in 0..n {
                span[(r, i * dy + j)] = t[r];
            }
        }
    }
    let rank_one_dim = rank(&span, tol);
    Ok(ModuleMapSpace {
        source_dim: dy,
        target_dim: dx,
        basis,
        rank_one_dim,
    })
}

/// The adjoint `T*: X → Y` of a module map `T: Y → X`, solved from
/// `⟨T n, m⟩ = ⟨n, T* m⟩` on basis vectors.
pub fn adjoint_map(y: &HilbertModule, x: &HilbertModule, t: &CMat, tol: f64) -> Result<CMat> {
    let (dx, dy) = (x.dim, y.dim);
    let da = x.algebra.dim();
    if t.shape() != (dx, dy) {
        return Err(Error::structural(
            "operator shape does not match the modules",
        ));
    }
    let mut g = CMat::zeros(dy * da, dy);
    for i in 0..dy {
        for p in 0..dy {
            for a in 0..da {
                g[(i * da + a, p)] = y.inner.get(i, p, a);
            }
        }
    }
    let mut rhs = CMat::zeros(dy * da, dx);
    for i in 0..dy {
        let ti = t.column(i).into_owned();
        for k in 0..dx {
            let mut ek = CVec::zeros(dx);
            ek[k] = ONE;
            let v = x.ip(&ti, &ek);
            for a in 0..da {
                rhs[(i * da + a, k)] = v[a];
            }
        }
    }
    let (s, res) = lstsq(&g, &rhs, 1e-13);
    if res > tol.max(1e-12) * 10.0 {
        return Err(Error::Residual {
            context: "adjoint_map".into(),
            residual: res,
        });
    }
    Ok(s)
}

/// Operator norm of `T: Y → X` from `‖T‖² = ‖T*T‖`, where the norm of the positive
/// operator `T*T` on `Y` is its spectral radius.
pub fn compacts_norm(y: &HilbertModule, x: &HilbertModule, t: &CMat, tol: f64) -> Result<f64> {
    if fnorm(t) == 0.0 {
        return Ok(0.0);
    }
    let ts = adjoint_map(y, x, t, tol)?;
    Ok(spectral_radius(&(ts * t)).max(0.0).sqrt())
}

/// Returns `(‖Σ |x_i⟩⟨x_i|‖, ‖Σ ⟨x_i, x_i⟩‖)`, which agree for every family.
pub fn norm_of_compacts_check(x: &HilbertModule, xs: &[CVec], tol: f64) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut op = CMat::zeros(x.dim, x.dim);
    let mut sum = CVec::zeros(x.algebra.dim());
    for v in xs {
        op += rank_one(x, x, v, v)?;
        sum += x.ip(v, v);
    }
    let lhs = compacts_norm(x, x, &op, tol)?;
    let rhs = x.algebra.norm_coords(&sum);
    Ok((lhs, rhs))
}

/// Module norm `‖m‖` of each column of `m`.
pub fn column_norms(x: &HilbertModule, m: &CMat) -> Vec<f64> {
    (0..m.ncols())
        .map(|c| x.norm(&m.column(c).into_owned()))
        .collect()
}

/// Euclidean length helper for module elements.
pub fn coord_norm(v: &CVec) -> f64 {
    vnorm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rand_cmat, rel_dist_mat, spectral_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(i: usize, n: usize) -> CVec {
        let mut v = CVec::zeros(n);
        v[i] = ONE;
        v
    }

    #[test]
    fn rank_one_examples() {
        let c = BlockAlgebra::scalars();
        let x = HilbertModule::standard(&c, &[2]).unwrap();
        let t = rank_one(&x, &x, &e(0, 2), &e(1, 2)).unwrap();
        let mut e12 = CMat::zeros(2, 2);
        e12[(0, 1)] = ONE;
        assert_eq!(t, e12);
        let z = rank_one(&x, &x, &CVec::zeros(2), &e(1, 2)).unwrap();
        assert_eq!(fnorm(&z), 0.0);
    }

    #[test]
    fn rank_one_acts_as_defined() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alg = BlockAlgebra::new(vec![2, 1]).unwrap();
        let x = HilbertModule::random(&mut rng, &alg, 2);
        let y = HilbertModule::random(&mut rng, &alg, 2);
        let (xv, yv) = (rand_cvec(&mut rng, x.dim), rand_cvec(&mut rng, y.dim));
        let t = rank_one(&x, &y, &xv, &yv).unwrap();
        for _ in 0..20 {
            let z = rand_cvec(&mut rng, y.dim);
            assert!(rel_dist(&(&t * &z), &x.act(&xv, &y.ip(&yv, &z))) < 1e-9);
        }
    }

    #[test]
    fn compacts_space_dimensions() {
        let c = BlockAlgebra::scalars();
        let y = HilbertModule::standard(&c, &[2]).unwrap();
        let x = HilbertModule::standard(&c, &[3]).unwrap();
        assert_eq!(compacts_space(&y, &x, 1e-9).unwrap().dim(), 6);
        let m2 = BlockAlgebra::matrices(2);
        let s = HilbertModule::standard(&m2, &[1]).unwrap();
        let k = compacts_space(&s, &s, 1e-9).unwrap();
        assert_eq!(k.dim(), 1);
        assert_eq!(k.rank_one_dim, 1);
    }

    #[test]
    fn compacts_space_closed_under_composition_and_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let alg = BlockAlgebra::new(vec![1, 2]).unwrap();
        let x = HilbertModule::random(&mut rng, &alg, 2);
        let k = compacts_space(&x, &x, 1e-9).unwrap();
        assert_eq!(k.dim(), k.rank_one_dim);
        for a in &k.basis {
            let (_, r) = k.coordinates(&adjoint_map(&x, &x, a, 1e-9).unwrap());
            assert!(r < 1e-9);
            for b in &k.basis {
                let (_, r) = k.coordinates(&(a * b));
                assert!(r < 1e-9);
            }
        }
    }

    #[test]
    fn scalar_norm_and_adjoint_match_matrix_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = BlockAlgebra::scalars();
        let y = HilbertModule::standard(&c, &[3]).unwrap();
        let x = HilbertModule::standard(&c, &[2]).unwrap();
        let t = rand_cmat(&mut rng, 2, 3);
        let n = compacts_norm(&y, &x, &t, 1e-9).unwrap();
        assert!((n - spectral_norm(&t)).abs() < 1e-9);
        let ts = adjoint_map(&y, &x, &t, 1e-9).unwrap();
        assert!(rel_dist_mat(&ts, &t.adjoint()) < 1e-12);
        assert_eq!(
            compacts_norm(&y, &x, &CMat::zeros(2, 3), 1e-9).unwrap(),
            0.0
        );
    }

    #[test]
    fn adjoint_of_rank_one_is_flipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let alg = BlockAlgebra::new(vec![2]).unwrap();
        let x = HilbertModule::random(&mut rng, &alg, 2);
        let y = HilbertModule::random(&mut rng, &alg, 3);
        let (xv, yv) = (rand_cvec(&mut rng, x.dim), rand_cvec(&mut rng, y.dim));
        let t = rank_one(&x, &y, &xv, &yv).unwrap();
        let ts = adjoint_map(&y, &x, &t, 1e-9).unwrap();
        assert!(rel_dist_mat(&ts, &rank_one(&y, &x, &yv, &xv).unwrap()) < 1e-9);
        let tss = adjoint_map(&x, &y, &ts, 1e-9).unwrap();
        assert!(rel_dist_mat(&tss, &t) < 1e-9);
    }

    #[test]
    fn norm_of_compacts_small_cases() {
        let c = BlockAlgebra::scalars();
        let x = HilbertModule::standard(&c, &[1]).unwrap();
        let (a, b) = norm_of_compacts_check(&x, &[e(0, 1)], 1e-9).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert_eq!(norm_of_compacts_check(&x, &[], 1e-9).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn random_modules_validate_and_frames_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let alg = BlockAlgebra::new(vec![1, 2, 1]).unwrap();
        for s in 0..5 {
            let x = HilbertModule::random(&mut rng, &alg, 2);
            let r = x.validate(1e-9, s);
            assert!(r.passed(), "{r}");
            let f = x.frame(1e-9);
            let k = compacts_space(&x, &x, 1e-9).unwrap();
            assert_eq!(f.dims().iter().map(|k| k * k).sum::<usize>(), k.dim());
            for (j, vs) in f.vectors.iter().enumerate() {
                for (a, va) in vs.iter().enumerate() {
                    for (b, vb) in vs.iter().enumerate() {
                        let want = if a == b { 1.0 } else { 0.0 };
                        let ip = x.ip(va, vb);
                        assert!((ip[f.corners[j]] - C64::new(want, 0.0)).norm() < 1e-9);
                        // v·E₁₁ = v
                        let back = x.act(va, &alg.corner_coords(j));
                        assert!(rel_dist(&back, va) < 1e-9);
                    }
                }
            }
            let t = k.basis[0].clone();
            let coords = frame_coords(&x, &f, &f, &t);
            let basis = frame_basis(&x, &f, &x, &f);
            let mut back = CMat::zeros(x.dim, x.dim);
            for (c, b) in coords.iter().zip(&basis) {
                back += b * *c;
            }
            assert!(rel_dist_mat(&back, &t) < 1e-9);
        }
    }
}
