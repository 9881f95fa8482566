//! Finite-dimensional C*-algebras as direct sums of full matrix algebras.

use crate::error::{Error, Result};
use crate::linalg::{
    herm_eig, min_eig, psd_sqrt, spectral_norm, Bilinear, CMat, CVec, C64, ONE, ZERO,
};

/// `⊕_j M_{n_j}(ℂ)` with canonical basis the matrix units of each block in order,
/// each block row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockAlgebra {
    pub blocks: Vec<usize>,
}

impl BlockAlgebra {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() || blocks.contains(&0) {
            return Err(Error::structural(
                "block sizes must be a nonempty list of positive integers",
            ));
        }
        Ok(BlockAlgebra { blocks })
    }

    /// `ℂ`.
    pub fn scalars() -> Self {
        BlockAlgebra { blocks: vec![1] }
    }

    /// `M_n(ℂ)`.
    pub fn matrices(n: usize) -> Self {
        BlockAlgebra { blocks: vec![n] }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|n| n * n).sum()
    }

    /// Coordinate offset of each block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.blocks.len());
        let mut s = 0;
        for n in &self.blocks {
            off.push(s);
            s += n * n;
        }
        off
    }

    /// Coordinate index of the matrix unit `E_{ab}` in block `j`.
    pub fn index(&self, j: usize, a: usize, b: usize) -> usize {
        self.offsets()[j] + a * self.blocks[j] + b
    }

    /// Inverse of [`BlockAlgebra::index`].
    pub fn locate(&self, mut i: usize) -> (usize, usize, usize) {
        for (j, &n) in self.blocks.iter().enumerate() {
            if i < n * n {
                return (j, i / n, i % n);
            }
            i -= n * n;
        }
        panic!("coordinate index out of range")
    }

    pub fn element(&self, coords: &CVec) -> AlgebraElement {
        assert_eq!(coords.len(), self.dim(), "coordinate vector length");
        let mut blocks = Vec::with_capacity(self.blocks.len());
        let mut s = 0;
        for &n in &self.blocks {
            blocks.push(CMat::from_fn(n, n, |a, b| coords[s + a * n + b]));
            s += n * n;
        }
        AlgebraElement {
            parent: self.clone(),
            blocks,
        }
    }

    pub fn unit(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.clone(),
            blocks: self.blocks.iter().map(|&n| CMat::identity(n, n)).collect(),
        }
    }

    pub fn zero(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.clone(),
            blocks: self.blocks.iter().map(|&n| CMat::zeros(n, n)).collect(),
        }
    }

    /// Coordinates of the unit.
    pub fn unit_coords(&self) -> CVec {
        self.unit().coords()
    }

    /// Coordinates of the matrix unit `E_{11}` of block `j`.
    pub fn corner_coords(&self, j: usize) -> CVec {
        let mut v = CVec::zeros(self.dim());
        v[self.index(j, 0, 0)] = ONE;
        v
    }

    pub fn mul_coords(&self, a: &CVec, b: &CVec) -> CVec {
        self.element(a).mul(&self.element(b)).coords()
    }

    pub fn star_coords(&self, a: &CVec) -> CVec {
        self.element(a).adjoint().coords()
    }

    pub fn norm_coords(&self, a: &CVec) -> f64 {
        operator_norm(&self.element(a))
    }

    /// Multiplication as a structure tensor in the canonical basis.
    pub fn mult_tensor(&self) -> Bilinear {
        let d = self.dim();
        let mut t = Bilinear::zeros(d, d, d);
        for p in 0..d {
            let (j, a, b) = self.locate(p);
            for c in 0..self.blocks[j] {
                let q = self.index(j, b, c);
                let r = self.index(j, a, c);
                let idx = t.idx(p, q, r);
                t.data[idx] = ONE;
            }
        }
        t
    }

    /// Matrix `J` with `x* = J·conj(x)` in the canonical basis.
    pub fn invol_matrix(&self) -> CMat {
        let d = self.dim();
        let mut m = CMat::zeros(d, d);
        for p in 0..d {
            let (j, a, b) = self.locate(p);
            m[(self.index(j, b, a), p)] = ONE;
        }
        m
    }
}

/// An element of a [`BlockAlgebra`] stored blockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    pub parent: BlockAlgebra,
    pub blocks: Vec<CMat>,
}

impl AlgebraElement {
    pub fn coords(&self) -> CVec {
        let mut v = CVec::zeros(self.parent.dim());
        let mut s = 0;
        for (m, &n) in self.blocks.iter().zip(&self.parent.blocks) {
            for a in 0..n {
                for b in 0..n {
                    v[s + a * n + b] = m[(a, b)];
                }
            }
            s += n * n;
        }
        v
    }

    pub fn mul(&self, other: &AlgebraElement) -> AlgebraElement {
        assert_eq!(self.parent, other.parent, "algebra mismatch");
        AlgebraElement {
            parent: self.parent.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn add(&self, other: &AlgebraElement) -> AlgebraElement {
        assert_eq!(self.parent, other.parent, "algebra mismatch");
        AlgebraElement {
            parent: self.parent.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn scale(&self, s: C64) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            blocks: self.blocks.iter().map(|a| a * s).collect(),
        }
    }

    pub fn adjoint(&self) -> AlgebraElement {
        AlgebraElement {
            parent: self.parent.clone(),
            blocks: self.blocks.iter().map(|a| a.adjoint()).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        operator_norm(self)
    }
}

/// Largest singular value over all blocks.
pub fn operator_norm(a: &AlgebraElement) -> f64 {
    a.blocks.iter().map(spectral_norm).fold(0.0, f64::max)
}

/// True iff `a` is self-adjoint and has no eigenvalue below `−tol·(1+‖a‖)`.
pub fn is_positive(a: &AlgebraElement, tol: f64) -> bool {
    positivity_defect(a) <= tol
}

/// Normalized distance from the positive cone: the larger of the Hermitian defect
/// and the most negative eigenvalue, both divided by `1+‖a‖`.
pub fn positivity_defect(a: &AlgebraElement) -> f64 {
    let scale = 1.0 + operator_norm(a);
    let mut worst: f64 = 0.0;
    for m in &a.blocks {
        let herm = spectral_norm(&(m - m.adjoint()));
        worst = worst.max(herm / scale);
        worst = worst.max(-min_eig(m) / scale);
    }
    worst
}

/// Distance of a `k×k` matrix over `B` from the positive cone of `M_k(B)`, computed
/// on the inflated blocks and normalized by `1+‖G‖`.
pub fn gram_positivity_defect(alg: &BlockAlgebra, g: &[Vec<AlgebraElement>]) -> f64 {
    let k = g.len();
    let mut worst: f64 = 0.0;
    for (j, &n) in alg.blocks.iter().enumerate() {
        let big = CMat::from_fn(k * n, k * n, |r, c| {
            g[r / n][c / n].blocks[j][(r % n, c % n)]
        });
        let scale = 1.0 + spectral_norm(&big);
        worst = worst.max(spectral_norm(&(&big - big.adjoint())) / scale);
        worst = worst.max(-min_eig(&big) / scale);
    }
    worst
}

/// Factors a positive `k×k` matrix `G` over `B` as `G_ij = Σ_l b_il·b_jl*`.
///
/// Each block of `B` is inflated to a `k·n_j` square matrix whose positive square
/// root supplies the factor.
pub fn gram_factorize(
    alg: &BlockAlgebra,
    g: &[Vec<AlgebraElement>],
    tol: f64,
) -> Result<Vec<Vec<AlgebraElement>>> {
    let k = g.len();
    if g.iter().any(|row| row.len() != k) {
        return Err(Error::structural("Gram matrix must be square"));
    }
    let mut out: Vec<Vec<AlgebraElement>> = vec![vec![alg.zero(); k]; k];
    for (j, &n) in alg.blocks.iter().enumerate() {
        let big = CMat::from_fn(k * n, k * n, |r, c| {
            g[r / n][c / n].blocks[j][(r % n, c % n)]
        });
        let scale = 1.0 + spectral_norm(&big);
        if spectral_norm(&(&big - big.adjoint())) > tol * scale {
            return Err(Error::axiom("Gram matrix is not self-adjoint"));
        }
        let (vals, _) = herm_eig(&big);
        if vals.first().is_some_and(|&v| v < -tol * scale) {
            return Err(Error::axiom("Gram matrix is not positive"));
        }
        let root = psd_sqrt(&big);
        for i in 0..k {
            for l in 0..k {
                out[i][l].blocks[j] = root.view((i * n, l * n), (n, n)).into_owned();
            }
        }
    }
    for i in 0..k {
        for jx in 0..k {
            let mut acc = alg.zero();
            for l in 0..k {
                acc = acc.add(&out[i][l].mul(&out[jx][l].adjoint()));
            }
            let diff = acc.add(&g[i][jx].scale(C64::new(-1.0, 0.0)));
            let r = operator_norm(&diff) / (1.0 + operator_norm(&g[i][jx]));
            if r > tol {
                return Err(Error::Residual {
                    context: "gram_factorize".into(),
                    residual: r,
                });
            }
        }
    }
    Ok(out)
}

/// `ℂ`-valued trace form `tr(a)` summed over blocks.
pub fn trace(a: &AlgebraElement) -> C64 {
    a.blocks.iter().map(|m| m.trace()).fold(ZERO, |s, t| s + t)
}
