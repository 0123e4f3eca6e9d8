//! Profile likelihood for the model `y ~ GP(Fβ, σ² R_φ)` on sparse grid
//! designs: closed-form `β̂_φ` and `σ̂²_φ` through fast `R_φ⁻¹` solves, the
//! log-determinant from component determinants, and golden-section search
//! over `log φ`. The additive constant `-(N/2) log 2π` is omitted throughout.

use serde::{Deserialize, Serialize};

use crate::designs::{index_set_j, SparseGridDesign};
use crate::error::{Error, Result};
use crate::kernels::KernelShape;
use crate::kron_linalg::{Cholesky, SquareMatrix};
use crate::sg_predictor::{ComponentFactors, SparseGridSolver};

/// `log |R|` for the design's full correlation matrix, from the component
/// log-determinants:
/// `Σ_{j∈J(η)} Σ_i (log|R_{i,j_i}| - log|R_{i,j_i-1}|) Π_{k≠i} (#X_{k,j_k} - #X_{k,j_k-1})`.
pub fn sg_logdet(design: &SparseGridDesign, factors: &ComponentFactors) -> Result<f64> {
    let d = design.dim();
    let schedules = design.schedules();
    let mut total = 0.0;
    let mut inc = vec![0usize; d];
    for j in index_set_j(design.eta(), d)? {
        for (i, &l) in j.levels().iter().enumerate() {
            inc[i] = schedules[i].increment_size(l);
        }
        for (i, &l) in j.levels().iter().enumerate() {
            let others: usize = (0..d).filter(|&k| k != i).map(|k| inc[k]).product();
            if others == 0 {
                continue;
            }
            let diff = factors.get(i, l).logdet() - factors.get(i, l - 1).logdet();
            total += diff * others as f64;
        }
    }
    Ok(total)
}

/// Solves the small `p x p` system `(Fᵀ R⁻¹ F) β = Fᵀ R⁻¹ y`.
pub(crate) fn gls_solve(ft_rinv_f: &SquareMatrix, ft_rinv_y: &[f64]) -> Result<Vec<f64>> {
    let p = ft_rinv_f.size();
    let chol = Cholesky::new(ft_rinv_f).map_err(|_| Error::SingularBasis)?;
    let max_diag = (0..p).map(|k| ft_rinv_f.get(k, k)).fold(0.0f64, f64::max);
    let min_pivot = (0..p).map(|k| chol.factor(k, k).powi(2)).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * max_diag {
        return Err(Error::SingularBasis);
    }
    Ok(chol.solve_vec(ft_rinv_y))
}

/// `FᵀB` for row-major `N x p` `F` and `N x m` `B`, as row-major `p x m`.
pub(crate) fn transpose_mul(f: &[f64], p: usize, b: &[f64], m: usize) -> Vec<f64> {
    let n = f.len() / p;
    let mut out = vec![0.0; p * m];
    for row in 0..n {
        for a in 0..p {
            let fa = f[row * p + a];
            for c in 0..m {
                out[a * m + c] += fa * b[row * m + c];
            }
        }
    }
    out
}

fn check_basis(n: usize, f: &[f64], p: usize, y: &[f64]) -> Result<()> {
    if p == 0 || f.len() != n * p || y.len() != n {
        return Err(Error::Shape(format!(
            "basis has {} entries for p = {p}, y has {}, design has {n} points",
            f.len(),
            y.len()
        )));
    }
    if p > n {
        return Err(Error::SingularBasis);
    }
    Ok(())
}

/// Generalized least squares coefficients `β̂ = (Fᵀ R⁻¹ F)⁻¹ Fᵀ R⁻¹ y`.
/// `solver` must be built on the correlation kernel (`σ² = 1`).
pub fn beta_hat(solver: &SparseGridSolver<'_>, f: &[f64], p: usize, y: &[f64]) -> Result<Vec<f64>> {
    check_basis(solver.design().len(), f, p, y)?;
    let q = solver.q_solve(f, p)?;
    // Qᵀ F and Qᵀ y; symmetrize away round-off
    let qtf = transpose_mul(&q, p, f, p);
    let qty = transpose_mul(&q, p, y, 1);
    let m = SquareMatrix::from_fn(p, |a, b| 0.5 * (qtf[a * p + b] + qtf[b * p + a]));
    gls_solve(&m, &qty)
}

fn residual(f: &[f64], p: usize, y: &[f64], beta: &[f64]) -> Vec<f64> {
    y.iter()
        .enumerate()
        .map(|(row, &yv)| yv - (0..p).map(|a| f[row * p + a] * beta[a]).sum::<f64>())
        .collect()
}

pub(crate) fn finish_sigma2(quad: f64, n: usize, y: &[f64]) -> Result<f64> {
    let s = quad / n as f64;
    let scale: f64 = y.iter().map(|v| v * v).sum();
    if s < -1e-12 * scale || !s.is_finite() {
        return Err(Error::NumericalFailure(format!("negative variance estimate {s}")));
    }
    Ok(s.max(0.0))
}

/// `σ̂² = N⁻¹ (y - Fβ)ᵀ R⁻¹ (y - Fβ)`.
pub fn sigma2_hat(solver: &SparseGridSolver<'_>, f: &[f64], p: usize, y: &[f64], beta: &[f64]) -> Result<f64> {
    let n = solver.design().len();
    check_basis(n, f, p, y)?;
    let r = residual(f, p, y, beta);
    let q = solver.q_solve(&r, 1)?;
    finish_sigma2(q.iter().zip(&r).map(|(a, b)| a * b).sum(), n, y)
}

/// `L(β̂, σ̂², φ) = -½ (N log σ̂² + log|R_φ| + N)`; `+∞` when `σ̂² = 0`.
pub fn profiled_value(n: usize, sigma2: f64, logdet: f64) -> f64 {
    if sigma2 == 0.0 {
        return f64::INFINITY;
    }
    -0.5 * (n as f64 * sigma2.ln() + logdet + n as f64)
}

/// Concentrated estimates at one value of `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub phi: f64,
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    /// `log |R_φ|`.
    pub logdet: f64,
    pub loglik: f64,
}

/// Evaluates the profile likelihood at `phi` with a shared-lengthscale
/// Matérn correlation.
pub fn profile_point(
    design: &SparseGridDesign,
    f: &[f64],
    p: usize,
    y: &[f64],
    shape: impl Into<KernelShape>,
    phi: f64,
) -> Result<ProfilePoint> {
    let kernel = shape.into().correlation_kernel(design.dim(), phi)?;
    let solver = SparseGridSolver::new(design, &kernel)?;
    let beta = beta_hat(&solver, f, p, y)?;
    let sigma2 = sigma2_hat(&solver, f, p, y, &beta)?;
    let logdet = sg_logdet(design, solver.factors())?;
    Ok(ProfilePoint {
        phi,
        loglik: profiled_value(design.len(), sigma2, logdet),
        beta_hat: beta,
        sigma2_hat: sigma2,
        logdet,
    })
}

pub fn profile_loglik(
    design: &SparseGridDesign,
    f: &[f64],
    p: usize,
    y: &[f64],
    shape: impl Into<KernelShape>,
    phi: f64,
) -> Result<f64> {
    Ok(profile_point(design, f, p, y, shape, phi)?.loglik)
}

/// Golden-section settings on `log φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Final bracket width in `log φ`.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            tol: 1e-3,
            max_evals: 100,
        }
    }
}

pub const DEFAULT_BRACKET: (f64, f64) = (1e-2, 1e2);

/// Maximum likelihood fit with its optimizer trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub phi_hat: f64,
    pub loglik: f64,
    pub logdet: f64,
    pub n: usize,
    pub n_evals: usize,
    pub bracket_edge: bool,
    /// `(φ, loglik)` per probe, in evaluation order; failed probes are `-∞`.
    pub trace: Vec<(f64, f64)>,
}

fn rank(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Golden-section maximization of a profile likelihood over `log φ` in
/// `[lo, hi]`. `eval` is called once per probe; probes that error count as
/// `-∞`. Shared by the fast and dense paths so both see identical probe
/// sequences when their likelihood values agree.
pub fn maximize_profile(
    n: usize,
    bracket: (f64, f64),
    options: SearchOptions,
    mut eval: impl FnMut(f64) -> Result<ProfilePoint>,
) -> Result<MleResult> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::FitFailure(format!("invalid bracket [{lo}, {hi}]")));
    }
    let mut trace = Vec::new();
    let mut best: Option<ProfilePoint> = None;
    let mut last_err = None;
    let mut probe = |phi: f64, trace: &mut Vec<(f64, f64)>| -> f64 {
        match eval(phi) {
            Ok(pt) => {
                let v = rank(pt.loglik);
                trace.push((phi, pt.loglik));
                if v > f64::NEG_INFINITY && best.as_ref().is_none_or(|b| v > rank(b.loglik)) {
                    best = Some(pt);
                }
                v
            }
            Err(e) => {
                trace.push((phi, f64::NEG_INFINITY));
                last_err = Some(e);
                f64::NEG_INFINITY
            }
        }
    };

    let (mut a, mut b) = (lo.ln(), hi.ln());
    let (a0, b0) = (a, b);
    if lo == hi {
        probe(lo, &mut trace);
    } else {
        let inv_golden = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - inv_golden * (b - a);
        let mut d = a + inv_golden * (b - a);
        let mut fc = probe(c.exp(), &mut trace);
        let mut fd = probe(d.exp(), &mut trace);
        while b - a > options.tol && trace.len() < options.max_evals {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_golden * (b - a);
                fc = probe(c.exp(), &mut trace);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_golden * (b - a);
                fd = probe(d.exp(), &mut trace);
            }
        }
    }
    let best = match best {
        Some(b) => b,
        None => {
            return Err(Error::FitFailure(match last_err {
                Some(e) => format!("no finite likelihood in bracket; last error: {e}"),
                None => "no finite likelihood in bracket".into(),
            }))
        }
    };
    let bracket_edge = lo != hi && (a == a0 || b == b0);
    Ok(MleResult {
        beta_hat: best.beta_hat,
        sigma2_hat: best.sigma2_hat,
        phi_hat: best.phi,
        loglik: best.loglik,
        logdet: best.logdet,
        n,
        n_evals: trace.len(),
        bracket_edge,
        trace,
    })
}

/// Maximum likelihood estimate of `(β, σ², φ)` on a sparse grid design.
pub fn fit_mle(
    design: &SparseGridDesign,
    f: &[f64],
    p: usize,
    y: &[f64],
    shape: impl Into<KernelShape>,
    bracket: (f64, f64),
    options: SearchOptions,
) -> Result<MleResult> {
    check_basis(design.len(), f, p, y)?;
    let shape = shape.into();
    maximize_profile(design.len(), bracket, options, |phi| {
        profile_point(design, f, p, y, shape, phi)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{build_sparse_grid, BuiltinSchedule};
    use crate::kernels::{MeanBasis, SeparableKernel, Smoothness};

    fn design(d: usize, eta: usize) -> SparseGridDesign {
        build_sparse_grid(BuiltinSchedule::InteriorFirst.schedules(d, eta), eta).unwrap()
    }

    #[test]
    fn logdet_one_dimension_and_single_point() {
        let g = design(1, 5);
        let k = SeparableKernel::isotropic(1, Smoothness::ThreeHalves, 0.5, 1.0).unwrap();
        let s = SparseGridSolver::new(&g, &k).unwrap();
        let direct = s.factors().get(0, 5).logdet();
        assert!((sg_logdet(&g, s.factors()).unwrap() - direct).abs() < 1e-12);

        let g = design(3, 3);
        let k = SeparableKernel::isotropic(3, Smoothness::ThreeHalves, 0.5, 1.0).unwrap();
        let s = SparseGridSolver::new(&g, &k).unwrap();
        assert_eq!(sg_logdet(&g, s.factors()).unwrap(), 0.0);
    }

    #[test]
    fn constant_and_exact_linear_models() {
        let g = design(2, 5);
        let pts = g.points();
        let k = SeparableKernel::isotropic(2, Smoothness::FiveHalves, 0.7, 1.0).unwrap();
        let s = SparseGridSolver::new(&g, &k).unwrap();
        let f = MeanBasis::Constant.design_matrix(&pts);
        let y = vec![3.25; g.len()];
        let b = beta_hat(&s, &f, 1, &y).unwrap();
        assert!((b[0] - 3.25).abs() < 1e-10);

        let f = MeanBasis::Linear.design_matrix(&pts);
        let truth = [1.0, -2.0, 0.5];
        let y: Vec<f64> = pts.iter().map(|x| MeanBasis::Linear.mean(x, &truth)).collect();
        let b = beta_hat(&s, &f, 3, &y).unwrap();
        for (got, want) in b.iter().zip(truth) {
            assert!((got - want).abs() < 1e-9);
        }
        let s2 = sigma2_hat(&s, &f, 3, &y, &truth).unwrap();
        assert_eq!(s2, 0.0);
    }

    #[test]
    fn sigma2_is_quadratic_in_residual() {
        let g = design(2, 5);
        let pts = g.points();
        let k = SeparableKernel::isotropic(2, Smoothness::FiveHalves, 0.7, 1.0).unwrap();
        let s = SparseGridSolver::new(&g, &k).unwrap();
        let f = MeanBasis::Constant.design_matrix(&pts);
        let y: Vec<f64> = pts.iter().map(|x| (3.0 * x[0]).sin() + x[1]).collect();
        let beta = [0.4];
        let base = sigma2_hat(&s, &f, 1, &y, &beta).unwrap();
        let t = 3.0;
        let scaled: Vec<f64> = y.iter().map(|v| beta[0] + t * (v - beta[0])).collect();
        let s2 = sigma2_hat(&s, &f, 1, &scaled, &beta).unwrap();
        assert!((s2 - t * t * base).abs() < 1e-10 * s2);
    }

    #[test]
    fn singular_basis_detected() {
        let g = design(2, 4);
        let pts = g.points();
        let k = SeparableKernel::isotropic(2, Smoothness::FiveHalves, 0.7, 1.0).unwrap();
        let s = SparseGridSolver::new(&g, &k).unwrap();
        // two identical constant columns
        let f: Vec<f64> = vec![1.0; 2 * pts.len()];
        assert!(matches!(beta_hat(&s, &f, 2, &vec![1.0; pts.len()]), Err(Error::SingularBasis)));
    }

    #[test]
    fn sigma2_plug_in_is_optimal() {
        let n = 40;
        let logdet = -12.5;
        let s2 = 0.8;
        let at = |sig: f64, quad: f64| -0.5 * (n as f64 * sig.ln() + logdet + quad / sig);
        let quad = n as f64 * s2;
        assert!((at(s2, quad) - profiled_value(n, s2, logdet)).abs() < 1e-12);
        assert!(at(2.0 * s2, quad) < at(s2, quad));
    }

    #[test]
    fn golden_section_finds_quadratic_peak() {
        let res = maximize_profile(1, (0.01, 100.0), SearchOptions::default(), |phi| {
            let t = phi.ln() - 0.3;
            Ok(ProfilePoint {
                phi,
                beta_hat: vec![],
                sigma2_hat: 1.0,
                logdet: 0.0,
                loglik: -t * t,
            })
        })
        .unwrap();
        assert!((res.phi_hat.ln() - 0.3).abs() < 1e-3);
        assert!(!res.bracket_edge);
        assert!(res.n_evals <= 100 && res.n_evals == res.trace.len());

        let edge = maximize_profile(1, (0.01, 100.0), SearchOptions::default(), |phi| {
            Ok(ProfilePoint {
                phi,
                beta_hat: vec![],
                sigma2_hat: 1.0,
                logdet: 0.0,
                loglik: phi,
            })
        })
        .unwrap();
        assert!(edge.bracket_edge);
        assert!((edge.phi_hat.ln() - 100f64.ln()).abs() < 2e-3);
    }

    #[test]
    fn all_failed_probes_is_fit_failure() {
        let r = maximize_profile(1, (0.1, 10.0), SearchOptions::default(), |_| {
            Err(Error::NumericalFailure("boom".into()))
        });
        assert!(matches!(r, Err(Error::FitFailure(_))));
    }

    #[test]
    fn collapsed_bracket() {
        let g = design(2, 5);
        let pts = g.points();
        let f = MeanBasis::Constant.design_matrix(&pts);
        let y: Vec<f64> = pts.iter().map(|x| x[0] * x[1]).collect();
        let r = fit_mle(&g, &f, 1, &y, Smoothness::FiveHalves, (0.5, 0.5), SearchOptions::default()).unwrap();
        assert_eq!(r.phi_hat, 0.5);
        assert_eq!(r.n_evals, 1);
        let direct = profile_point(&g, &f, 1, &y, Smoothness::FiveHalves, 0.5).unwrap();
        assert_eq!(r.beta_hat, direct.beta_hat);
        assert_eq!(r.sigma2_hat, direct.sigma2_hat);
        assert!(!r.bracket_edge);
    }
}
