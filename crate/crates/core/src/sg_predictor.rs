//! Fast kriging on sparse grid designs.
//!
//! `Σ⁻¹ A` is assembled as a signed combination of lattice-wise Kronecker
//! solves over the multi-indices in `P(η)`: each term gathers the rows of `A`
//! belonging to one lattice, applies `⊗ S_{i,j_i}⁻¹`, scales by the Smolyak
//! coefficient, and scatters the result back with addition. Terms are always
//! reduced in the sorted order of `P(η)`, so results are bit-reproducible
//! regardless of the order in which terms are produced.

use crate::designs::{index_set_j, index_set_p, smolyak_coefficient, MultiIndex, SparseGridDesign};
use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, SeparableKernel};
use crate::kron_linalg::{kron_solve_in_place, Cholesky, ComponentFactorization};

/// Factorizations of every unit-variance component matrix `R_{i,j}`,
/// `j = 0..=η-d+1`, shared by all solves, variances and log-determinants.
#[derive(Debug, Clone)]
pub struct ComponentFactors {
    table: Vec<Vec<ComponentFactorization>>,
}

impl ComponentFactors {
    pub fn new(design: &SparseGridDesign, kernel: &SeparableKernel) -> Result<Self> {
        if kernel.dim() != design.dim() {
            return Err(Error::Shape(format!(
                "kernel has {} dimensions, design has {}",
                kernel.dim(),
                design.dim()
            )));
        }
        let max_level = design.max_level();
        let table = design
            .schedules()
            .iter()
            .enumerate()
            .map(|(i, sch)| {
                let corr = kernel.component(i);
                let mut levels = vec![ComponentFactorization::level_zero(i + 1)];
                for l in 1..=max_level {
                    let m = kernel_matrix(corr, sch.points(l))?;
                    levels.push(ComponentFactorization::new(i + 1, l, &m)?);
                }
                Ok(levels)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComponentFactors { table })
    }

    /// Factorization of `R_{i,level}` (dimension `i` is zero-based).
    pub fn get(&self, i: usize, level: usize) -> &ComponentFactorization {
        &self.table[i][level]
    }

    pub fn dim(&self) -> usize {
        self.table.len()
    }
}

/// Kriging weights `w = Σ⁻¹(y - μ)`, indexed by global design point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Predictive variance, clamped at zero; `raw` keeps the unclamped value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveVariance {
    pub value: f64,
    pub raw: f64,
}

/// One-dimensional squared prediction errors `ε_{i,j}(x₀)` for
/// `j = 0..=η-d+1`, on the correlation scale.
#[derive(Debug, Clone)]
pub struct VarianceProfile {
    eps: Vec<Vec<f64>>,
}

impl VarianceProfile {
    pub fn epsilon(&self, i: usize, level: usize) -> f64 {
        self.eps[i][level]
    }

    /// `Δ_{i,j} = ε_{i,j-1} - ε_{i,j}`.
    pub fn delta(&self, i: usize, level: usize) -> f64 {
        self.eps[i][level - 1] - self.eps[i][level]
    }
}

/// Precomputed solver for one design and one covariance.
#[derive(Debug, Clone)]
pub struct SparseGridSolver<'a> {
    design: &'a SparseGridDesign,
    kernel: SeparableKernel,
    factors: ComponentFactors,
    /// `(lattice index into design.lattices(), a(j))` for `j ∈ P(η)`, sorted by `j`.
    terms: Vec<(usize, i64)>,
    /// `J(η)` as level vectors.
    index_set: Vec<MultiIndex>,
}

impl<'a> SparseGridSolver<'a> {
    pub fn new(design: &'a SparseGridDesign, kernel: &SeparableKernel) -> Result<Self> {
        let factors = ComponentFactors::new(design, kernel)?;
        let (d, eta) = (design.dim(), design.eta());
        let terms = index_set_p(eta, d)?
            .iter()
            .map(|j| {
                let lat = design
                    .lattices()
                    .binary_search_by(|l| l.index.cmp(j))
                    .expect("P(eta) is a subset of J(eta)");
                (lat, smolyak_coefficient(j, eta, d))
            })
            .collect();
        Ok(SparseGridSolver {
            design,
            kernel: kernel.clone(),
            factors,
            terms,
            index_set: index_set_j(eta, d)?,
        })
    }

    pub fn design(&self) -> &SparseGridDesign {
        self.design
    }

    pub fn kernel(&self) -> &SeparableKernel {
        &self.kernel
    }

    pub fn factors(&self) -> &ComponentFactors {
        &self.factors
    }

    /// Number of combination terms, `#P(η)`.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    fn check_rows(&self, len: usize, ncols: usize) -> Result<()> {
        let n = self.design.len();
        if ncols == 0 || len != n * ncols {
            return Err(Error::Shape(format!(
                "expected {n} rows x {ncols} columns, got {len} entries"
            )));
        }
        Ok(())
    }

    /// Term `k` of the combination: `a(j) (⊗ R_{i,j_i}⁻¹) A_j`, on the lattice of `j`.
    pub fn term(&self, k: usize, a: &[f64], ncols: usize) -> Result<Vec<f64>> {
        self.check_rows(a.len(), ncols)?;
        let (lat_idx, coef) = self.terms[k];
        let lat = &self.design.lattices()[lat_idx];
        let mut buf = Vec::with_capacity(lat.len() * ncols);
        for &g in &lat.global {
            buf.extend_from_slice(&a[g * ncols..(g + 1) * ncols]);
        }
        let chols: Vec<&Cholesky> = lat
            .index
            .levels()
            .iter()
            .enumerate()
            .map(|(i, &l)| self.factors.get(i, l).cholesky())
            .collect();
        kron_solve_in_place(&chols, &mut buf, ncols)?;
        let c = coef as f64;
        buf.iter_mut().for_each(|x| *x *= c);
        Ok(buf)
    }

    /// Sums lattice terms into an `N x ncols` result, always in term order
    /// and scaled by `1/σ²`.
    pub fn accumulate(&self, terms: impl IntoIterator<Item = (usize, Vec<f64>)>, ncols: usize) -> Vec<f64> {
        let mut terms: Vec<(usize, Vec<f64>)> = terms.into_iter().collect();
        terms.sort_by_key(|(k, _)| *k);
        let mut out = vec![0.0; self.design.len() * ncols];
        for (k, buf) in &terms {
            self.scatter_add(*k, buf, &mut out, ncols);
        }
        let inv = 1.0 / self.kernel.sigma2();
        out.iter_mut().for_each(|x| *x *= inv);
        out
    }

    fn scatter_add(&self, k: usize, buf: &[f64], out: &mut [f64], ncols: usize) {
        let lat = &self.design.lattices()[self.terms[k].0];
        for (pos, &g) in lat.global.iter().enumerate() {
            let dst = &mut out[g * ncols..(g + 1) * ncols];
            dst.iter_mut().zip(&buf[pos * ncols..(pos + 1) * ncols]).for_each(|(o, v)| *o += v);
        }
    }

    /// `Σ⁻¹ A` for a row-major `N x ncols` matrix `A`.
    pub fn q_solve(&self, a: &[f64], ncols: usize) -> Result<Vec<f64>> {
        self.check_rows(a.len(), ncols)?;
        let mut out = vec![0.0; self.design.len() * ncols];
        for k in 0..self.terms.len() {
            let buf = self.term(k, a, ncols)?;
            self.scatter_add(k, &buf, &mut out, ncols);
        }
        let inv = 1.0 / self.kernel.sigma2();
        out.iter_mut().for_each(|x| *x *= inv);
        Ok(out)
    }

    /// `w = Σ⁻¹(y - μ)`.
    pub fn compute_weights(&self, y: &[f64], mu: &[f64]) -> Result<WeightVector> {
        if y.len() != mu.len() {
            return Err(Error::Shape(format!("y has {} entries, mu has {}", y.len(), mu.len())));
        }
        let r: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
        Ok(WeightVector(self.q_solve(&r, 1)?))
    }

    /// Correlations `R_i(x₀_i, ·)` against every slot of each coordinate pool.
    fn pool_correlations(&self, x0: &[f64]) -> Vec<Vec<f64>> {
        let max_level = self.design.max_level();
        self.design
            .schedules()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let k = self.kernel.component(i);
                s.points(max_level).iter().map(|&c| k.correlation(x0[i], c)).collect()
            })
            .collect()
    }

    /// `σ(x₀) = [C(x₀, x_k)]_k`.
    pub fn cross_covariance(&self, x0: &[f64]) -> Vec<f64> {
        let pools = self.pool_correlations(x0);
        let s2 = self.kernel.sigma2();
        (0..self.design.len())
            .map(|k| {
                s2 * self
                    .design
                    .point_slots(k)
                    .iter()
                    .zip(&pools)
                    .map(|(&s, p)| p[s as usize])
                    .product::<f64>()
            })
            .collect()
    }

    /// `ŷ(x₀) = μ(x₀) + σ(x₀)ᵀ w`.
    pub fn predict_mean(&self, w: &WeightVector, mu0: f64, x0: &[f64]) -> f64 {
        mu0 + self
            .cross_covariance(x0)
            .iter()
            .zip(w.as_slice())
            .map(|(c, w)| c * w)
            .sum::<f64>()
    }

    pub fn variance_profile(&self, x0: &[f64]) -> VarianceProfile {
        let max_level = self.design.max_level();
        let eps = self
            .design
            .schedules()
            .iter()
            .enumerate()
            .map(|(i, sch)| {
                let k = self.kernel.component(i);
                let prior = k.correlation(x0[i], x0[i]);
                let mut row = vec![prior];
                for l in 1..=max_level {
                    let mut s: Vec<f64> = sch.points(l).iter().map(|&c| k.correlation(x0[i], c)).collect();
                    self.factors.get(i, l).cholesky().forward_in_place(&mut s);
                    row.push(prior - s.iter().map(|v| v * v).sum::<f64>());
                }
                row
            })
            .collect();
        VarianceProfile { eps }
    }

    /// `C(x₀,x₀) - Σ_{j∈J(η)} Π_i Δ_{i,j_i}(x₀)`.
    pub fn predict_variance(&self, x0: &[f64]) -> PredictiveVariance {
        let profile = self.variance_profile(x0);
        let explained: f64 = self
            .index_set
            .iter()
            .map(|j| {
                j.levels()
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| profile.delta(i, l))
                    .product::<f64>()
            })
            .sum();
        let prior: f64 = (0..self.design.dim())
            .map(|i| self.kernel.component(i).correlation(x0[i], x0[i]))
            .product();
        let raw = self.kernel.sigma2() * (prior - explained);
        PredictiveVariance {
            value: raw.max(0.0),
            raw,
        }
    }
}

pub fn compute_weights(
    design: &SparseGridDesign,
    kernel: &SeparableKernel,
    y: &[f64],
    mu: &[f64],
) -> Result<WeightVector> {
    SparseGridSolver::new(design, kernel)?.compute_weights(y, mu)
}

pub fn q_solve(design: &SparseGridDesign, kernel: &SeparableKernel, a: &[f64], ncols: usize) -> Result<Vec<f64>> {
    SparseGridSolver::new(design, kernel)?.q_solve(a, ncols)
}

pub fn predict_mean(
    design: &SparseGridDesign,
    kernel: &SeparableKernel,
    w: &WeightVector,
    mu_fn: impl Fn(&[f64]) -> f64,
    x0: &[f64],
) -> Result<f64> {
    Ok(SparseGridSolver::new(design, kernel)?.predict_mean(w, mu_fn(x0), x0))
}

pub fn predict_variance(design: &SparseGridDesign, kernel: &SeparableKernel, x0: &[f64]) -> Result<PredictiveVariance> {
    Ok(SparseGridSolver::new(design, kernel)?.predict_variance(x0))
}
