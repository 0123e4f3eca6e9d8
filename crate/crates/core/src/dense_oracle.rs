//! Reference Gaussian process that forms the full `N x N` covariance and
//! factorizes it directly. Used as the ground truth for the fast sparse grid
//! path and as the traditional-method arm of benchmarks. Works for any
//! point set.

use faer::prelude::*;
use faer::linalg::solvers::Llt;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};

use crate::error::{Error, Result};
use crate::kernels::{KernelShape, SeparableKernel};
use crate::likelihood::{finish_sigma2, gls_solve, maximize_profile, profiled_value, MleResult, ProfilePoint, SearchOptions};
use crate::kron_linalg::{extended, SquareMatrix};

/// Largest `N` the oracle factorizes unless told otherwise.
pub const DEFAULT_GUARD: usize = 5000;

fn check_guard(n: usize, guard: usize) -> Result<()> {
    if n > guard {
        return Err(Error::TooLarge { n, guard });
    }
    Ok(())
}

/// `Σ_{ab} = C(x_a, x_b)`.
pub fn covariance_matrix(points: &[Vec<f64>], kernel: &SeparableKernel) -> Mat<f64> {
    let n = points.len();
    let mut m = Mat::<f64>::zeros(n, n);
    for a in 0..n {
        for b in 0..a {
            let v = kernel.cov(&points[a], &points[b]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
        m[(a, a)] = kernel.cov(&points[a], &points[a]);
    }
    m
}

/// `Σ` with each entry as an unevaluated sum `hi + lo` of the exact product
/// of the component correlations and `σ²`.
fn covariance_matrix_extended(points: &[Vec<f64>], kernel: &SeparableKernel) -> (Mat<f64>, Vec<f64>) {
    let n = points.len();
    let mut hi = Mat::<f64>::zeros(n, n);
    let mut lo = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let mut v = (kernel.sigma2(), 0.0);
            for (i, k) in kernel.components().iter().enumerate() {
                v = extended::mul(v.0, v.1, k.correlation(points[a][i], points[b][i]));
            }
            hi[(a, b)] = v.0;
            hi[(b, a)] = v.0;
            lo[a * n + b] = v.1;
            lo[b * n + a] = v.1;
        }
    }
    (hi, lo)
}

fn factorize(sigma: &Mat<f64>) -> Result<Llt<f64>> {
    sigma.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite {
        size: sigma.nrows(),
        pivot: 0,
    })
}

const MAX_REFINEMENTS: usize = 10;

/// Dense factorized covariance on an arbitrary design.
///
/// The reference mode keeps `Σ` to double-double accuracy and refines every
/// solve and the log-determinant against it, so results are accurate even
/// when `Σ` is badly conditioned. The traditional mode is a plain Cholesky
/// factorization and solve.
pub struct DenseCovariance {
    kernel: SeparableKernel,
    points: Vec<Vec<f64>>,
    sigma: Mat<f64>,
    sigma_lo: Option<Vec<f64>>,
    llt: Llt<f64>,
    cholesky_logdet: f64,
    refined_logdet: std::cell::OnceCell<f64>,
}

impl DenseCovariance {
    /// Reference mode with extended-precision refinement.
    pub fn new(points: &[Vec<f64>], kernel: &SeparableKernel, guard: usize) -> Result<Self> {
        Self::build(points, kernel, guard, true)
    }

    /// Plain Cholesky, no refinement.
    pub fn traditional(points: &[Vec<f64>], kernel: &SeparableKernel, guard: usize) -> Result<Self> {
        Self::build(points, kernel, guard, false)
    }

    fn build(points: &[Vec<f64>], kernel: &SeparableKernel, guard: usize, refine: bool) -> Result<Self> {
        check_guard(points.len(), guard)?;
        if points.is_empty() {
            return Err(Error::InvalidDesign("empty design".into()));
        }
        if points.iter().any(|p| p.len() != kernel.dim()) {
            return Err(Error::Shape(format!("points must have {} coordinates", kernel.dim())));
        }
        let (sigma, sigma_lo) = if refine {
            let (hi, lo) = covariance_matrix_extended(points, kernel);
            (hi, Some(lo))
        } else {
            (covariance_matrix(points, kernel), None)
        };
        let llt = factorize(&sigma)?;
        let l = llt.L();
        let cholesky_logdet = 2.0 * (0..l.nrows()).map(|k| l[(k, k)].ln()).sum::<f64>();
        Ok(DenseCovariance {
            kernel: kernel.clone(),
            points: points.to_vec(),
            sigma,
            sigma_lo,
            llt,
            cholesky_logdet,
            refined_logdet: std::cell::OnceCell::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn kernel(&self) -> &SeparableKernel {
        &self.kernel
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.sigma
    }

    /// `log |Σ|`. In reference mode this corrects the Cholesky value by
    /// `log det(I + L⁻¹ E L⁻ᵀ)` with `E = Σ - L Lᵀ` evaluated in double-double.
    pub fn logdet(&self) -> f64 {
        let Some(lo) = &self.sigma_lo else {
            return self.cholesky_logdet;
        };
        *self.refined_logdet.get_or_init(|| {
            let n = self.len();
            let l = self.llt.L();
            let mut e = Mat::<f64>::zeros(n, n);
            for a in 0..n {
                for b in 0..=a {
                    let mut acc = (-self.sigma[(a, b)], -lo[a * n + b]);
                    for k in 0..=b {
                        extended::add_prod(&mut acc, l[(a, k)], l[(b, k)]);
                    }
                    // E = Σ - L Lᵀ
                    e[(a, b)] = -(acc.0 + acc.1);
                    e[(b, a)] = e[(a, b)];
                }
            }
            solve_lower_triangular_in_place(l, e.as_mut(), Par::Seq);
            let mut m = e.transpose().to_owned();
            solve_lower_triangular_in_place(l, m.as_mut(), Par::Seq);
            let corr = Mat::<f64>::from_fn(n, n, |a, b| {
                0.5 * (m[(a, b)] + m[(b, a)]) + if a == b { 1.0 } else { 0.0 }
            });
            match corr.llt(Side::Lower) {
                Ok(c) => {
                    let cl = c.L();
                    self.cholesky_logdet + 2.0 * (0..n).map(|k| cl[(k, k)].ln()).sum::<f64>()
                }
                Err(_) => self.cholesky_logdet,
            }
        })
    }

    /// `Σ⁻¹ B` for a row-major `N x ncols` block.
    pub fn solve(&self, b: &[f64], ncols: usize) -> Result<Vec<f64>> {
        let n = self.len();
        if ncols == 0 || b.len() != n * ncols {
            return Err(Error::Shape(format!("expected {n} x {ncols} right-hand side, got {} entries", b.len())));
        }
        let rhs = Mat::<f64>::from_fn(n, ncols, |r, c| b[r * ncols + c]);
        let mut x = self.llt.solve(&rhs);
        if let Some(lo) = &self.sigma_lo {
            for c in 0..ncols {
                for _ in 0..MAX_REFINEMENTS {
                    // r = b - Σ x in double-double, rounded
                    let mut acc: Vec<(f64, f64)> = (0..n).map(|r| (b[r * ncols + c], 0.0)).collect();
                    for j in 0..n {
                        let xj = -x[(j, c)];
                        let col = self.sigma.col(j);
                        for (i, a) in acc.iter_mut().enumerate() {
                            extended::add_prod(a, col[i], xj);
                            a.1 += lo[i * n + j] * xj;
                        }
                    }
                    let res = Mat::<f64>::from_fn(n, 1, |r, _| acc[r].0 + acc[r].1);
                    let dx = self.llt.solve(&res);
                    let mut change = 0.0f64;
                    let mut size = 0.0f64;
                    for r in 0..n {
                        x[(r, c)] += dx[(r, 0)];
                        change = change.max(dx[(r, 0)].abs());
                        size = size.max(x[(r, c)].abs());
                    }
                    if change <= 1e-17 * size {
                        break;
                    }
                }
            }
        }
        let mut out = vec![0.0; n * ncols];
        for r in 0..n {
            for c in 0..ncols {
                out[r * ncols + c] = x[(r, c)];
            }
        }
        Ok(out)
    }

    pub fn cross_covariance(&self, x0: &[f64]) -> Vec<f64> {
        self.points.iter().map(|p| self.kernel.cov(x0, p)).collect()
    }

    /// `C(x₀,x₀) - σᵀ Σ⁻¹ σ`, unclamped.
    pub fn variance(&self, x0: &[f64]) -> f64 {
        let s = self.cross_covariance(x0);
        let q = self.solve(&s, 1).expect("shape matches");
        self.kernel.cov(x0, x0) - s.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Fitted kriging model with known mean values.
pub struct DenseGpModel {
    cov: DenseCovariance,
    y: Vec<f64>,
    mu: Vec<f64>,
    w: Vec<f64>,
}

/// Factorizes `Σ` on `points` and computes `w = Σ⁻¹(y - μ)`.
pub fn dense_fit(
    points: &[Vec<f64>],
    kernel: &SeparableKernel,
    mu: &[f64],
    y: &[f64],
    guard: usize,
) -> Result<DenseGpModel> {
    if y.len() != points.len() || mu.len() != points.len() {
        return Err(Error::Shape(format!(
            "{} points but {} observations and {} mean values",
            points.len(),
            y.len(),
            mu.len()
        )));
    }
    let cov = DenseCovariance::new(points, kernel, guard)?;
    let r: Vec<f64> = y.iter().zip(mu).map(|(a, b)| a - b).collect();
    let w = cov.solve(&r, 1)?;
    Ok(DenseGpModel {
        cov,
        y: y.to_vec(),
        mu: mu.to_vec(),
        w,
    })
}

impl DenseGpModel {
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn covariance(&self) -> &DenseCovariance {
        &self.cov
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn mean_values(&self) -> &[f64] {
        &self.mu
    }

    pub fn predict_mean(&self, x0: &[f64], mu0: f64) -> f64 {
        mu0 + self
            .cov
            .cross_covariance(x0)
            .iter()
            .zip(&self.w)
            .map(|(a, b)| a * b)
            .sum::<f64>()
    }

    /// Kriging mean and (unclamped) variance at `x0`, given `μ(x0)`.
    pub fn predict(&self, x0: &[f64], mu0: f64) -> (f64, f64) {
        (self.predict_mean(x0, mu0), self.cov.variance(x0))
    }
}

pub fn dense_predict(model: &DenseGpModel, x0: &[f64], mu0: f64) -> (f64, f64) {
    model.predict(x0, mu0)
}

/// Closed-form `β̂`, `σ̂²` and the profile likelihood at `phi`, by dense algebra.
#[allow(clippy::too_many_arguments)]
pub fn dense_profile_point(
    points: &[Vec<f64>],
    f: &[f64],
    p: usize,
    y: &[f64],
    shape: impl Into<KernelShape>,
    phi: f64,
    guard: usize,
) -> Result<ProfilePoint> {
    let n = points.len();
    if p == 0 || f.len() != n * p || y.len() != n {
        return Err(Error::Shape("basis/observation sizes do not match the design".into()));
    }
    let kernel = shape.into().correlation_kernel(points[0].len(), phi)?;
    let cov = DenseCovariance::new(points, &kernel, guard)?;
    let rinv_f = cov.solve(f, p)?;
    let rinv_y = cov.solve(y, 1)?;
    let mut ftf = SquareMatrix::zeros(p);
    let mut fty = vec![0.0; p];
    for row in 0..n {
        for a in 0..p {
            fty[a] += f[row * p + a] * rinv_y[row];
            for b in 0..p {
                ftf.set(a, b, ftf.get(a, b) + f[row * p + a] * rinv_f[row * p + b]);
            }
        }
    }
    let sym = SquareMatrix::from_fn(p, |a, b| 0.5 * (ftf.get(a, b) + ftf.get(b, a)));
    let beta = gls_solve(&sym, &fty)?;
    let r: Vec<f64> = (0..n)
        .map(|row| y[row] - (0..p).map(|a| f[row * p + a] * beta[a]).sum::<f64>())
        .collect();
    let rinv_r = cov.solve(&r, 1)?;
    let sigma2 = finish_sigma2(r.iter().zip(&rinv_r).map(|(a, b)| a * b).sum(), n, y)?;
    let logdet = cov.logdet();
    Ok(ProfilePoint {
        phi,
        loglik: profiled_value(n, sigma2, logdet),
        beta_hat: beta,
        sigma2_hat: sigma2,
        logdet,
    })
}

/// Full log-likelihood `L(β, σ², φ)` (constant omitted).
#[allow(clippy::too_many_arguments)]
pub fn dense_loglik(
    points: &[Vec<f64>],
    f: &[f64],
    p: usize,
    y: &[f64],
    beta: &[f64],
    sigma2: f64,
    shape: impl Into<KernelShape>,
    phi: f64,
    guard: usize,
) -> Result<f64> {
    let n = points.len();
    let kernel = shape.into().correlation_kernel(points[0].len(), phi)?;
    let cov = DenseCovariance::new(points, &kernel, guard)?;
    let r: Vec<f64> = (0..n)
        .map(|row| y[row] - (0..p).map(|a| f[row * p + a] * beta[a]).sum::<f64>())
        .collect();
    let q = cov.solve(&r, 1)?;
    let quad: f64 = r.iter().zip(&q).map(|(a, b)| a * b).sum();
    Ok(-0.5 * (n as f64 * sigma2.ln() + cov.logdet() + quad / sigma2))
}

/// Maximum likelihood by dense algebra, with the same optimizer as the fast path.
#[allow(clippy::too_many_arguments)]
pub fn dense_mle(
    points: &[Vec<f64>],
    f: &[f64],
    p: usize,
    y: &[f64],
    shape: impl Into<KernelShape>,
    bracket: (f64, f64),
    options: SearchOptions,
    guard: usize,
) -> Result<MleResult> {
    check_guard(points.len(), guard)?;
    let shape = shape.into();
    maximize_profile(points.len(), bracket, options, |phi| {
        dense_profile_point(points, f, p, y, shape, phi, guard)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{MeanBasis, Smoothness};

    fn kernel() -> SeparableKernel {
        SeparableKernel::isotropic(2, Smoothness::ThreeHalves, 0.4, 1.3).unwrap()
    }

    #[test]
    fn single_point() {
        let k = kernel();
        let m = dense_fit(&[vec![0.2, 0.3]], &k, &[0.5], &[2.0], DEFAULT_GUARD).unwrap();
        assert!((m.weights()[0] - 1.5 / 1.3).abs() < 1e-15);
    }

    #[test]
    fn interpolates_with_zero_variance() {
        let pts = vec![vec![0.1, 0.1], vec![0.5, 0.9], vec![0.8, 0.3], vec![0.3, 0.6]];
        let y = vec![1.0, -0.5, 2.0, 0.25];
        let m = dense_fit(&pts, &kernel(), &[0.1; 4], &y, DEFAULT_GUARD).unwrap();
        for (p, &yv) in pts.iter().zip(&y) {
            let (mean, var) = m.predict(p, 0.1);
            assert!((mean - yv).abs() < 1e-10);
            assert!(var.abs() < 1e-10);
        }
    }

    #[test]
    fn far_field_recovers_prior() {
        let k = SeparableKernel::isotropic(1, Smoothness::Half, 0.01, 2.0).unwrap();
        let m = dense_fit(&[vec![0.0], vec![0.1]], &k, &[0.0, 0.0], &[1.0, -1.0], DEFAULT_GUARD).unwrap();
        let (mean, var) = m.predict(&[0.9], 0.7);
        assert!((mean - 0.7).abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_closed_form() {
        let k = SeparableKernel::isotropic(1, Smoothness::FiveHalves, 0.5, 1.0).unwrap();
        let (x1, x2, x0) = (0.2, 0.6, 0.35);
        let (y1, y2) = (0.7, -0.4);
        let m = dense_fit(&[vec![x1], vec![x2]], &k, &[0.0, 0.0], &[y1, y2], DEFAULT_GUARD).unwrap();
        let rho = k.cov(&[x1], &[x2]);
        let (s1, s2) = (k.cov(&[x0], &[x1]), k.cov(&[x0], &[x2]));
        let det = 1.0 - rho * rho;
        // [1 rho; rho 1]^{-1} = [1 -rho; -rho 1] / det
        let w1 = (y1 - rho * y2) / det;
        let w2 = (y2 - rho * y1) / det;
        let mean = s1 * w1 + s2 * w2;
        let var = 1.0 - (s1 * s1 - 2.0 * rho * s1 * s2 + s2 * s2) / det;
        let (gm, gv) = m.predict(&[x0], 0.0);
        assert!((gm - mean).abs() < 1e-12);
        assert!((gv - var).abs() < 1e-12);
    }

    #[test]
    fn guard_and_spd_errors() {
        let pts = vec![vec![0.1, 0.2]; 3];
        assert!(matches!(
            dense_fit(&pts, &kernel(), &[0.0; 3], &[0.0; 3], 2),
            Err(Error::TooLarge { n: 3, guard: 2 })
        ));
        assert!(matches!(
            dense_fit(&pts, &kernel(), &[0.0; 3], &[0.0; 3], 10),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn residual_of_solve() {
        let pts: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64 / 19.0, ((k * 7) % 20) as f64 / 19.0]).collect();
        let cov = DenseCovariance::new(&pts, &kernel(), DEFAULT_GUARD).unwrap();
        let b: Vec<f64> = (0..20).map(|k| (k as f64).cos()).collect();
        let x = cov.solve(&b, 1).unwrap();
        let sigma = covariance_matrix(&pts, &kernel());
        let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let res: f64 = (0..20)
            .map(|r| {
                let v: f64 = (0..20).map(|c| sigma[(r, c)] * x[c]).sum::<f64>() - b[r];
                v * v
            })
            .sum::<f64>()
            .sqrt();
        assert!(res <= 1e-8 * norm_b);
    }

    #[test]
    fn profiled_estimates_dominate_perturbations() {
        let pts: Vec<Vec<f64>> = (0..15).map(|k| vec![(k as f64 * 0.618).fract(), (k as f64 * 0.382).fract()]).collect();
        let y: Vec<f64> = pts.iter().map(|x| (4.0 * x[0]).sin() + x[1] * x[1]).collect();
        let f = MeanBasis::Constant.design_matrix(&pts);
        let phi = 0.3;
        let pp = dense_profile_point(&pts, &f, 1, &y, Smoothness::FiveHalves, phi, DEFAULT_GUARD).unwrap();
        let at = |b: f64, s: f64| dense_loglik(&pts, &f, 1, &y, &[b], s, Smoothness::FiveHalves, phi, DEFAULT_GUARD).unwrap();
        let best = at(pp.beta_hat[0], pp.sigma2_hat);
        assert!((best - pp.loglik).abs() < 1e-10 * best.abs().max(1.0));
        for (db, ds) in [(0.1, 1.0), (-0.2, 1.0), (0.0, 1.3), (0.0, 0.7), (0.05, 0.9)] {
            assert!(at(pp.beta_hat[0] + db, pp.sigma2_hat * ds) <= best);
        }
    }
}
