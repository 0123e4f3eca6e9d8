//! Small SPD factorizations and Kronecker-product inverse application.
//!
//! Vectors and matrices indexed by lattice positions use the row-major
//! convention shared by the whole crate: for `X_1 x ... x X_d` dimension `d`
//! varies fastest, so the lattice covariance is `S_1 ⊗ ... ⊗ S_d`.
//! Multi-column right-hand sides are stored row-major as well, which makes
//! the column index behave like one more (fastest) trailing dimension.

use crate::error::{Error, Result};

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("expected {} entries, got {}", n * n, data.len())));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for a in 0..n {
            for b in 0..n {
                m.data[a * n + b] = f(a, b);
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }

    pub fn set(&mut self, a: usize, b: usize, v: f64) {
        self.data[a * self.n + b] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self * x` for a row-major `n x ncols` block.
    pub fn mul(&self, x: &[f64], ncols: usize) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * ncols];
        for a in 0..n {
            for b in 0..n {
                let s = self.data[a * n + b];
                for c in 0..ncols {
                    out[a * ncols + c] += s * x[b * ncols + c];
                }
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor `S = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    /// Row-major lower triangle; the strict upper triangle is zero.
    l: Vec<f64>,
    /// The factored matrix, kept for refinement.
    a: Vec<f64>,
}

impl Cholesky {
    pub fn new(m: &SquareMatrix) -> Result<Self> {
        let n = m.size();
        let mut l = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..=a {
                let mut s = m.get(a, b);
                for k in 0..b {
                    s -= l[a * n + k] * l[b * n + k];
                }
                if a == b {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { size: n, pivot: a });
                    }
                    l[a * n + a] = s.sqrt();
                } else {
                    l[a * n + b] = s / l[b * n + b];
                }
            }
        }
        Ok(Cholesky { n, l, a: m.as_slice().to_vec() })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn factor(&self, a: usize, b: usize) -> f64 {
        self.l[a * self.n + b]
    }

    /// `2 * sum log L_kk`.
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.n).map(|k| self.l[k * self.n + k].ln()).sum::<f64>()
    }

    /// Overwrites `v` with `L^{-1} v`.
    pub fn forward_in_place(&self, v: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let mut s = v[k];
            for p in 0..k {
                s -= self.l[k * n + p] * v[p];
            }
            v[k] = s / self.l[k * n + k];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_rows_in_place(&mut x, 1);
        x
    }

    /// Solves `S X = B` in place, where `B` holds `n` contiguous rows of
    /// length `width`. The triangular solve is followed by a few steps of
    /// iterative refinement with residuals in double-double, which keeps the
    /// result accurate for ill-conditioned `S`.
    fn solve_rows_in_place(&self, block: &mut [f64], width: usize) {
        let n = self.n;
        let rhs = block.to_vec();
        self.triangular_rows_in_place(block, width);
        let mut res = vec![0.0; n * width];
        let mut acc = vec![(0.0, 0.0); width];
        for _ in 0..MAX_REFINEMENTS {
            for r in 0..n {
                acc.iter_mut().zip(&rhs[r * width..(r + 1) * width]).for_each(|(a, b)| *a = (*b, 0.0));
                for p in 0..n {
                    let s = -self.a[r * n + p];
                    for (a, x) in acc.iter_mut().zip(&block[p * width..(p + 1) * width]) {
                        extended::add_prod(a, s, *x);
                    }
                }
                res[r * width..(r + 1) * width].iter_mut().zip(&acc).for_each(|(v, a)| *v = a.0 + a.1);
            }
            self.triangular_rows_in_place(&mut res, width);
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for (x, dx) in block.iter_mut().zip(&res) {
                *x += dx;
                change = change.max(dx.abs());
                size = size.max(x.abs());
            }
            if !(change > 1e-17 * size) {
                break;
            }
        }
    }

    fn triangular_rows_in_place(&self, block: &mut [f64], width: usize) {
        let n = self.n;
        for k in 0..n {
            let (head, tail) = block.split_at_mut(k * width);
            let row_k = &mut tail[..width];
            for p in 0..k {
                let coef = self.l[k * n + p];
                if coef != 0.0 {
                    let row_p = &head[p * width..(p + 1) * width];
                    row_k.iter_mut().zip(row_p).for_each(|(x, y)| *x -= coef * y);
                }
            }
            let inv = 1.0 / self.l[k * n + k];
            row_k.iter_mut().for_each(|x| *x *= inv);
        }
        for k in (0..n).rev() {
            let (head, tail) = block.split_at_mut((k + 1) * width);
            let row_k = &mut head[k * width..];
            for p in k + 1..n {
                let coef = self.l[p * n + k];
                if coef != 0.0 {
                    let row_p = &tail[(p - k - 1) * width..(p - k) * width];
                    row_k.iter_mut().zip(row_p).for_each(|(x, y)| *x -= coef * y);
                }
            }
            let inv = 1.0 / self.l[k * n + k];
            row_k.iter_mut().for_each(|x| *x *= inv);
        }
    }
}

const MAX_REFINEMENTS: usize = 4;

/// Double-double helpers for residuals and products that must not lose
/// low-order bits.
pub(crate) mod extended {
    #[inline]
    pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    #[inline]
    pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    /// `(hi, lo) * c`.
    #[inline]
    pub fn mul(hi: f64, lo: f64, c: f64) -> (f64, f64) {
        let (p, e) = two_prod(hi, c);
        let lo = e + lo * c;
        let s = p + lo;
        (s, lo - (s - p))
    }

    /// Accumulates `a * b` into `(hi, lo)`.
    #[inline]
    pub fn add_prod(acc: &mut (f64, f64), a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        let (s, t) = two_sum(acc.0, p);
        let lo = acc.1 + e + t;
        let hi = s + lo;
        *acc = (hi, lo - (hi - s));
    }
}

/// Factorization of one component matrix `S_{i,j}`.
#[derive(Debug, Clone)]
pub struct ComponentFactorization {
    pub dimension: usize,
    pub level: usize,
    chol: Cholesky,
    logdet: f64,
}

impl ComponentFactorization {
    pub fn new(dimension: usize, level: usize, matrix: &SquareMatrix) -> Result<Self> {
        let chol = Cholesky::new(matrix)?;
        let logdet = chol.logdet();
        Ok(ComponentFactorization {
            dimension,
            level,
            chol,
            logdet,
        })
    }

    /// `S_{i,0}`: the empty matrix, with determinant 1 by convention.
    pub fn level_zero(dimension: usize) -> Self {
        ComponentFactorization {
            dimension,
            level: 0,
            chol: Cholesky { n: 0, l: Vec::new(), a: Vec::new() },
            logdet: 0.0,
        }
    }

    /// `m_i(j)`.
    pub fn size(&self) -> usize {
        self.chol.size()
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }
}

/// `log det S_{i,j}` (0 at level 0).
pub fn component_logdet(factor: &ComponentFactorization) -> f64 {
    factor.logdet()
}

/// Applies `(S_1^{-1} ⊗ ... ⊗ S_d^{-1})` in place to the row-major
/// `(prod m_i) x ncols` block `b`, one mode at a time.
pub fn kron_solve_in_place(factors: &[&Cholesky], b: &mut [f64], ncols: usize) -> Result<()> {
    let rows: usize = factors.iter().map(|f| f.size()).product();
    if b.len() != rows * ncols {
        return Err(Error::Shape(format!(
            "right-hand side has {} entries, expected {rows} rows x {ncols} columns",
            b.len()
        )));
    }
    if rows == 0 {
        return Ok(());
    }
    let mut left = 1usize;
    let mut right = rows * ncols;
    for f in factors {
        let mid = f.size();
        right /= mid;
        if mid > 1 {
            for block in b.chunks_exact_mut(mid * right) {
                f.solve_rows_in_place(block, right);
            }
        } else {
            let inv = 1.0 / (f.factor(0, 0) * f.factor(0, 0));
            b.iter_mut().for_each(|x| *x *= inv);
        }
        left *= mid;
    }
    debug_assert_eq!(left, rows);
    Ok(())
}

/// Returns `(⊗ S_i^{-1}) B` without forming the Kronecker product.
pub fn kron_solve(factors: &[&ComponentFactorization], b: &[f64], ncols: usize) -> Result<Vec<f64>> {
    let chols: Vec<&Cholesky> = factors.iter().map(|f| f.cholesky()).collect();
    let mut out = b.to_vec();
    kron_solve_in_place(&chols, &mut out, ncols)?;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(n: usize, rng: &mut impl Rng) -> SquareMatrix {
        let a: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        SquareMatrix::from_fn(n, |i, j| {
            let mut s: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
            if i == j {
                s += n as f64 * 0.5;
            }
            s
        })
    }

    fn kron(a: &SquareMatrix, b: &SquareMatrix) -> SquareMatrix {
        let (p, q) = (a.size(), b.size());
        SquareMatrix::from_fn(p * q, |r, c| a.get(r / q, c / q) * b.get(r % q, c % q))
    }

    /// Gaussian elimination with partial pivoting; returns (solution, log|det|).
    fn dense_solve(m: &SquareMatrix, b: &[f64], ncols: usize) -> (Vec<f64>, f64) {
        let n = m.size();
        let mut a = m.as_slice().to_vec();
        let mut x = b.to_vec();
        let mut logdet = 0.0;
        for col in 0..n {
            let piv = (col..n).max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs())).unwrap();
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                for c in 0..ncols {
                    x.swap(col * ncols + c, piv * ncols + c);
                }
            }
            let p = a[col * n + col];
            logdet += p.abs().ln();
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                for c in 0..ncols {
                    x[r * ncols + c] -= f * x[col * ncols + c];
                }
            }
        }
        for r in (0..n).rev() {
            for c in 0..ncols {
                let mut s = x[r * ncols + c];
                for k in r + 1..n {
                    s -= a[r * n + k] * x[k * ncols + c];
                }
                x[r * ncols + c] = s / a[r * n + r];
            }
        }
        (x, logdet)
    }

    fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn single_factor_is_plain_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_spd(4, &mut rng);
        let f = ComponentFactorization::new(1, 1, &s).unwrap();
        let b: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        let x = kron_solve(&[&f], &b, 1).unwrap();
        assert!(max_rel_diff(&s.mul(&x, 1), &b) < 1e-12);
    }

    #[test]
    fn identity_factors() {
        let id = ComponentFactorization::new(1, 1, &SquareMatrix::from_fn(1, |_, _| 1.0)).unwrap();
        let b = vec![3.0, -1.5];
        assert_eq!(kron_solve(&[&id, &id, &id], &b, 2).unwrap(), b);
    }

    #[test]
    fn matches_dense_kronecker_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s1 = random_spd(2, &mut rng);
        let s2 = random_spd(3, &mut rng);
        let f1 = ComponentFactorization::new(1, 1, &s1).unwrap();
        let f2 = ComponentFactorization::new(2, 1, &s2).unwrap();
        for ncols in [1, 3] {
            let b: Vec<f64> = (0..6 * ncols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = kron_solve(&[&f1, &f2], &b, ncols).unwrap();
            let (dense, _) = dense_solve(&kron(&s1, &s2), &b, ncols);
            assert!(max_rel_diff(&fast, &dense) < 1e-12);
        }
    }

    #[test]
    fn mixed_product_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mats: Vec<SquareMatrix> = [3, 1, 4, 2].iter().map(|&n| random_spd(n, &mut rng)).collect();
        let facs: Vec<ComponentFactorization> =
            mats.iter().map(|m| ComponentFactorization::new(1, 1, m).unwrap()).collect();
        let full = mats[1..].iter().fold(mats[0].clone(), |acc, m| kron(&acc, m));
        let b: Vec<f64> = (0..24 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sb = full.mul(&b, 2);
        let refs: Vec<&ComponentFactorization> = facs.iter().collect();
        let back = kron_solve(&refs, &sb, 2).unwrap();
        assert!(max_rel_diff(&back, &b) < 1e-9);
    }

    #[test]
    fn shape_error() {
        let f = ComponentFactorization::new(1, 1, &SquareMatrix::from_fn(2, |a, b| if a == b { 1.0 } else { 0.1 })).unwrap();
        assert!(matches!(kron_solve(&[&f, &f], &[1.0; 3], 1), Err(Error::Shape(_))));
    }

    #[test]
    fn logdets() {
        let one = ComponentFactorization::new(1, 1, &SquareMatrix::from_fn(1, |_, _| 2.5)).unwrap();
        assert!((component_logdet(&one) - 2.5f64.ln()).abs() < 1e-15);
        assert_eq!(component_logdet(&ComponentFactorization::level_zero(1)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_spd(4, &mut rng);
        let f = ComponentFactorization::new(1, 1, &s).unwrap();
        let (_, lu) = dense_solve(&s, &[0.0; 4], 1);
        assert!((f.logdet() - lu).abs() < 1e-10 * lu.abs().max(1.0));
        let diag: f64 = (0..4).map(|k| f.cholesky().factor(k, k).ln()).sum::<f64>() * 2.0;
        assert_eq!(f.logdet(), diag);
    }

    #[test]
    fn kronecker_logdet_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_spd(3, &mut rng);
        let b = random_spd(2, &mut rng);
        let la = Cholesky::new(&a).unwrap().logdet();
        let lb = Cholesky::new(&b).unwrap().logdet();
        let lab = Cholesky::new(&kron(&a, &b)).unwrap().logdet();
        assert!((lab - (2.0 * la + 3.0 * lb)).abs() < 1e-10 * lab.abs().max(1.0));
    }

    #[test]
    fn solve_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spd(6, &mut rng);
        let c = Cholesky::new(&s).unwrap();
        let b: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let x = c.solve_vec(&b);
        assert!(max_rel_diff(&s.mul(&x, 1), &b) < 1e-10);
    }
}
