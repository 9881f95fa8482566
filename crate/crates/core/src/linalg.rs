//! Dense complex linear algebra helpers and structure tensors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Euclidean norm of a complex vector.
pub fn vnorm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius norm of a complex matrix.
pub fn fnorm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Relative distance `‖a−b‖ / (1+‖a‖+‖b‖)`.
pub fn rel_dist(a: &CVec, b: &CVec) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    vnorm(&(a - b)) / (1.0 + vnorm(a) + vnorm(b))
}

/// Relative distance between matrices.
pub fn rel_dist_mat(a: &CMat, b: &CMat) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    fnorm(&(a - b)) / (1.0 + fnorm(a) + fnorm(b))
}

fn to_faer(a: &CMat) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        faer::c64::new(z.re, z.im)
    })
}

fn from_faer(a: faer::MatRef<'_, faer::c64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| {
        let z = a[(i, j)];
        C64::new(z.re, z.im)
    })
}

fn svd_failed(shape: (usize, usize)) -> ! {
    panic!("SVD of a {}×{} matrix did not converge", shape.0, shape.1)
}

/// Thin SVD `a = U·diag(s)·Vᴴ` with `min(m, n)` singular values in descending order.
pub fn svd(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (CMat::zeros(m, 0), Vec::new(), CMat::zeros(n, 0));
    }
    let d = to_faer(a)
        .thin_svd()
        .unwrap_or_else(|_| svd_failed(a.shape()));
    let s = (0..m.min(n)).map(|i| d.S()[i].re).collect();
    (from_faer(d.U()), s, from_faer(d.V()))
}

/// Singular values of `a` in descending order.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    to_faer(a)
        .singular_values()
        .unwrap_or_else(|_| svd_failed(a.shape()))
}

/// Singular values in descending order, padded with zeros to length `n`, and the
/// matching right singular vectors as columns of a square `n×n` matrix.
pub fn svd_full(a: &CMat) -> (Vec<f64>, CMat) {
    let (m, n) = a.shape();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    if m == 0 {
        return (vec![0.0; n], CMat::identity(n, n));
    }
    let d = to_faer(a).svd().unwrap_or_else(|_| svd_failed(a.shape()));
    let mut s: Vec<f64> = (0..m.min(n)).map(|i| d.S()[i].re).collect();
    s.resize(n, 0.0);
    (s, from_faer(d.V()))
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    singular_values(a).into_iter().fold(0.0, f64::max)
}

/// Numerical rank with singular values thresholded at `tol·σ_max`.
pub fn rank(a: &CMat, tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let s = singular_values(a);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax <= f64::MIN_POSITIVE {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

/// Orthonormal basis of the nullspace of `a`, singular values thresholded at `tol·σ_max`.
pub fn nullspace(a: &CMat, tol: f64) -> CMat {
    nullspace_scaled(a, tol, 0.0)
}

/// Like [`nullspace`], with the threshold `tol·max(σ_max, scale)` so that a matrix of
/// pure roundoff relative to `scale` counts as zero.
pub fn nullspace_scaled(a: &CMat, tol: f64, scale: f64) -> CMat {
    let n = a.ncols();
    if a.nrows() == 0 || fnorm(a) == 0.0 {
        return CMat::identity(n, n);
    }
    let (s, v) = svd_full(a);
    let smax = s.first().cloned().unwrap_or(0.0);
    let r = s.iter().filter(|&&x| x > tol * smax.max(scale)).count();
    v.columns(r, n - r).into_owned()
}

/// Least-squares solution of `a·x = b` via the thresholded pseudo-inverse, with the
/// relative residual `‖a·x−b‖ / (1+‖b‖)`.
pub fn lstsq(a: &CMat, b: &CMat, rcond: f64) -> (CMat, f64) {
    let pinv = pinv(a, rcond);
    let x = &pinv * b;
    let res = fnorm(&(a * &x - b)) / (1.0 + fnorm(b));
    (x, res)
}

/// Thresholded Moore–Penrose pseudo-inverse.
pub fn pinv(a: &CMat, rcond: f64) -> CMat {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return CMat::zeros(n, m);
    }
    let (u, s, v) = svd(a);
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let mut out = CMat::zeros(n, m);
    for (l, &sl) in s.iter().enumerate() {
        if sl <= rcond * smax || sl <= f64::MIN_POSITIVE {
            continue;
        }
        out += v.column(l) * (u.column(l).adjoint() * C64::new(1.0 / sl, 0.0));
    }
    out
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn herm_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vecs)
}

/// Smallest eigenvalue of the Hermitian part of `a`.
pub fn min_eig(a: &CMat) -> f64 {
    herm_eig(a).0.first().cloned().unwrap_or(0.0)
}

/// Spectral radius of an arbitrary square matrix.
pub fn spectral_radius(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    let (_, t) = a.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max)
}

/// Positive square root of the Hermitian part of `a`, negative eigenvalues clamped.
pub fn psd_sqrt(a: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(a);
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = C64::new(v.max(0.0).sqrt(), 0.0);
    }
    &vecs * d * vecs.adjoint()
}

/// Vector with entries uniform in the unit square of the complex plane, centred at 0.
pub fn rand_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn rand_cmat<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Random unitary from the QR factor of a random matrix.
pub fn rand_unitary<R: Rng>(rng: &mut R, n: usize) -> CMat {
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    loop {
        let m = rand_cmat(rng, n, n);
        if spectral_norm(&m) > 1e-3 && rank(&m, 1e-8) == n {
            return m.qr().q();
        }
    }
}

/// Random invertible matrix with singular values in `[lo, hi]`.
pub fn rand_wellcond<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> CMat {
    let u = rand_unitary(rng, n);
    let v = rand_unitary(rng, n);
    let d = CMat::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(rng.random_range(lo..=hi), 0.0)
        } else {
            ZERO
        }
    });
    u * d * v
}

/// Matrix inverse that reports singular input as `None`.
pub fn inverse(a: &CMat) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(CMat::zeros(0, 0));
    }
    a.clone().try_inverse()
}

/// A bilinear map `ℂ^dl × ℂ^dr → ℂ^dout` stored as a dense tensor, row-major over
/// (left-in, right-in, out).
#[derive(Clone, Debug, PartialEq)]
pub struct Bilinear {
    pub dl: usize,
    pub dr: usize,
    pub dout: usize,
    pub data: Vec<C64>,
}

impl Bilinear {
    pub fn zeros(dl: usize, dr: usize, dout: usize) -> Self {
        Bilinear {
            dl,
            dr,
            dout,
            data: vec![ZERO; dl * dr * dout],
        }
    }

    /// Builds the tensor from its values on pairs of basis vectors.
    pub fn from_basis_values(
        dl: usize,
        dr: usize,
        dout: usize,
        mut f: impl FnMut(usize, usize) -> CVec,
    ) -> Self {
        let mut t = Bilinear::zeros(dl, dr, dout);
        for i in 0..dl {
            for j in 0..dr {
                let v = f(i, j);
                debug_assert_eq!(v.len(), dout);
                t.set_value(i, j, &v);
            }
        }
        t
    }

    /// Wraps flat data, checking its length.
    pub fn from_data(dl: usize, dr: usize, dout: usize, data: Vec<C64>) -> Option<Self> {
        (data.len() == dl * dr * dout).then_some(Bilinear { dl, dr, dout, data })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dr + j) * self.dout + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> C64 {
        self.data[self.idx(i, j, k)]
    }

    /// Value on the pair of basis vectors `(e_i, e_j)`.
    pub fn value(&self, i: usize, j: usize) -> CVec {
        let s = self.idx(i, j, 0);
        CVec::from_column_slice(&self.data[s..s + self.dout])
    }

    pub fn set_value(&mut self, i: usize, j: usize, v: &CVec) {
        let s = self.idx(i, j, 0);
        self.data[s..s + self.dout].copy_from_slice(v.as_slice());
    }

    /// Bilinear evaluation `T(a, b)`.
    pub fn apply(&self, a: &CVec, b: &CVec) -> CVec {
        self.eval(a, b, false)
    }

    /// Sesquilinear evaluation, conjugate-linear in `a`.
    pub fn apply_conj(&self, a: &CVec, b: &CVec) -> CVec {
        self.eval(a, b, true)
    }

    fn eval(&self, a: &CVec, b: &CVec, conj_left: bool) -> CVec {
        assert_eq!(a.len(), self.dl, "left operand dimension");
        assert_eq!(b.len(), self.dr, "right operand dimension");
        let mut out = CVec::zeros(self.dout);
        for i in 0..self.dl {
            let ai = if conj_left { a[i].conj() } else { a[i] };
            if ai == ZERO {
                continue;
            }
            for j in 0..self.dr {
                let w = ai * b[j];
                if w == ZERO {
                    continue;
                }
                let s = self.idx(i, j, 0);
                for k in 0..self.dout {
                    out[k] += w * self.data[s + k];
                }
            }
        }
        out
    }

    /// Matrix of `v ↦ T(a, v)`.
    pub fn left_operator(&self, a: &CVec, conj_left: bool) -> CMat {
        let mut m = CMat::zeros(self.dout, self.dr);
        for i in 0..self.dl {
            let ai = if conj_left { a[i].conj() } else { a[i] };
            if ai == ZERO {
                continue;
            }
            for j in 0..self.dr {
                let s = self.idx(i, j, 0);
                for k in 0..self.dout {
                    m[(k, j)] += ai * self.data[s + k];
                }
            }
        }
        m
    }

    /// Matrix of `u ↦ T(u, b)` (linear in `u`).
    pub fn right_operator(&self, b: &CVec) -> CMat {
        let mut m = CMat::zeros(self.dout, self.dl);
        for i in 0..self.dl {
            for j in 0..self.dr {
                let bj = b[j];
                if bj == ZERO {
                    continue;
                }
                let s = self.idx(i, j, 0);
                for k in 0..self.dout {
                    m[(k, i)] += bj * self.data[s + k];
                }
            }
        }
        m
    }

    /// Re-expresses the tensor in new bases: `T'(u, v) = q·T(pl·u, pr·v)`, with the
    /// left slot treated conjugate-linearly when `conj_left` is set.
    pub fn change_basis(&self, pl: &CMat, pr: &CMat, q: &CMat, conj_left: bool) -> Bilinear {
        let dl = pl.ncols();
        let dr = pr.ncols();
        let dout = q.nrows();
        Bilinear::from_basis_values(dl, dr, dout, |i, j| {
            let u = pl.column(i).into_owned();
            let v = pr.column(j).into_owned();
            q * self.eval(&u, &v, conj_left)
        })
    }

    pub fn scale(&mut self, s: C64) {
        for z in self.data.iter_mut() {
            *z *= s;
        }
    }
}
