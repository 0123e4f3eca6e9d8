//! Monte Carlo prediction error, deterministic-function error and timing
//! studies comparing sparse grids against lattice and Latin hypercube designs.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use faer::{Mat, Side};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::Config;
use super::functions::TestFunction;
use super::report::ExperimentReport;
use crate::dense_oracle::{covariance_matrix, dense_fit, dense_mle, DenseCovariance, DEFAULT_GUARD};
use crate::designs::{build_lattice, build_lhs, build_sparse_grid, uniform_point, BuiltinSchedule, SparseGridDesign};
use crate::error::{Error, Result};
use crate::kernels::{KernelShape, MeanBasis, SeparableKernel, Smoothness};
use crate::likelihood::{fit_mle, MleResult, SearchOptions, DEFAULT_BRACKET};
use crate::sg_predictor::SparseGridSolver;

const PROBE_STREAM: u64 = 0;
const DATA_STREAM: u64 = 1;
const LHS_STREAM: u64 = 1 << 32;
const REPLICATE_STREAM: u64 = 1 << 33;

/// Largest relative weight gap tolerated between the timing arms.
pub const TIMING_AGREEMENT: f64 = 1e-8;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform probes on `[0,1]^d`, shared by every arm of a study.
pub fn draw_probes(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, PROBE_STREAM);
    (0..n).map(|_| uniform_point(&mut rng, d)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    SparseGrid,
    Lattice,
    Lhs,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::SparseGrid, Strategy::Lattice, Strategy::Lhs];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SparseGrid => "sparse_grid",
            Strategy::Lattice => "lattice",
            Strategy::Lhs => "lhs",
        }
    }

    /// Config key holding the sizes for this strategy.
    fn sizes_key(self) -> &'static str {
        match self {
            Strategy::SparseGrid => "etas",
            Strategy::Lattice => "lattice_sizes",
            Strategy::Lhs => "lhs_sizes",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// One design in a study. `size` is the level `η` for sparse grids, the
/// number of points per dimension for lattices and the sample size for
/// Latin hypercubes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub strategy: Strategy,
    pub size: usize,
}

/// Built design of an arm.
pub enum ArmDesign {
    Grid(SparseGridDesign),
    Points(Vec<Vec<f64>>),
}

impl ArmDesign {
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            ArmDesign::Grid(g) => g.points(),
            ArmDesign::Points(p) => p.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArmDesign::Grid(g) => g.len(),
            ArmDesign::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Component design of an `n`-point lattice: `{1/4, 3/4}` for two points,
/// otherwise evenly spaced including both ends.
pub fn lattice_component(n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::InvalidDesign("lattice needs at least one point per dimension".into())),
        1 => Ok(vec![0.5]),
        2 => Ok(vec![0.25, 0.75]),
        _ => Ok((0..n).map(|k| k as f64 / (n - 1) as f64).collect()),
    }
}

pub fn build_arm(arm: Arm, d: usize, schedule: BuiltinSchedule, seed: u64) -> Result<ArmDesign> {
    match arm.strategy {
        Strategy::SparseGrid => Ok(ArmDesign::Grid(build_sparse_grid(schedule.schedules(d, arm.size), arm.size)?)),
        Strategy::Lattice => {
            let comp = lattice_component(arm.size)?;
            Ok(ArmDesign::Points(build_lattice(&vec![comp; d])?))
        }
        Strategy::Lhs => {
            if arm.size == 0 {
                return Err(Error::InvalidDesign("empty Latin hypercube".into()));
            }
            let lhs_seed = stream_rng(seed, LHS_STREAM + arm.size as u64).next_u64();
            Ok(ArmDesign::Points(build_lhs(arm.size, d, lhs_seed)))
        }
    }
}

fn arms_from_config(cfg: &Config) -> Result<Vec<Arm>> {
    let strategies: Vec<Strategy> = if cfg.raw("strategies").is_some() {
        cfg.list("strategies")?
    } else {
        Strategy::ALL
            .into_iter()
            .filter(|s| cfg.raw(s.sizes_key()).is_some())
            .collect()
    };
    let mut arms = Vec::new();
    for s in strategies {
        let sizes: Vec<usize> = cfg.list(s.sizes_key())?;
        if sizes.is_empty() {
            return Err(Error::Config(format!("strategy {s} needs `{}`", s.sizes_key())));
        }
        arms.extend(sizes.into_iter().map(|size| Arm { strategy: s, size }));
    }
    if arms.is_empty() {
        return Err(Error::Config("no design arms configured".into()));
    }
    Ok(arms)
}

fn schedule_from_config(cfg: &Config) -> Result<BuiltinSchedule> {
    match cfg.raw("schedule") {
        None => Ok(BuiltinSchedule::InteriorFirst),
        Some(name) => BuiltinSchedule::from_name(name)
            .ok_or_else(|| Error::Config(format!("unknown schedule `{name}`"))),
    }
}

fn smoothness_from_config(cfg: &Config) -> Result<Smoothness> {
    Smoothness::from_nu(cfg.get_or("nu", 2.5)?)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn report(arm_name: &str, n: usize, d: usize, metric: &str, value: f64, seconds: f64, seed: u64) -> ExperimentReport {
    ExperimentReport {
        strategy: arm_name.to_string(),
        n,
        d,
        metric: metric.to_string(),
        value,
        seconds,
        seed,
    }
}

/// Settings of the Monte Carlo prediction error study. The kernel is known.
#[derive(Debug, Clone, PartialEq)]
pub struct RmspeConfig {
    pub d: usize,
    pub smoothness: Smoothness,
    pub nugget: f64,
    pub phi: f64,
    pub sigma2: f64,
    pub schedule: BuiltinSchedule,
    pub arms: Vec<Arm>,
    pub n_mc: usize,
    pub n_probe: usize,
    pub seed: u64,
    /// Bound on design plus probe count for the joint sampling factorization.
    pub guard: usize,
}

impl RmspeConfig {
    pub const KEYS: [&'static str; 14] = [
        "d", "nu", "nugget", "phi", "sigma2", "schedule", "strategies", "etas", "lattice_sizes", "lhs_sizes", "n_mc",
        "n_probe", "seed", "guard",
    ];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(RmspeConfig {
            d: cfg.require("d")?,
            smoothness: smoothness_from_config(cfg)?,
            nugget: cfg.get_or("nugget", 0.0)?,
            phi: cfg.get_or("phi", 0.75)?,
            sigma2: cfg.get_or("sigma2", 1.0)?,
            schedule: schedule_from_config(cfg)?,
            arms: arms_from_config(cfg)?,
            n_mc: cfg.get_or("n_mc", 200)?,
            n_probe: cfg.get_or("n_probe", 500)?,
            seed: cfg.get_or("seed", 0)?,
            guard: cfg.get_or("guard", DEFAULT_GUARD)?,
        })
    }
}

/// Lower Cholesky factor of the covariance on `points`, with a small
/// diagonal jitter if the plain factorization fails.
fn sampling_factor(points: &[Vec<f64>], kernel: &SeparableKernel) -> Result<Mat<f64>> {
    let sigma = covariance_matrix(points, kernel);
    for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
        let mut m = sigma.clone();
        for k in 0..m.nrows() {
            m[(k, k)] += jitter * kernel.sigma2();
        }
        if let Ok(llt) = m.llt(Side::Lower) {
            return Ok(llt.L().to_owned());
        }
    }
    Err(Error::NotPositiveDefinite {
        size: points.len(),
        pivot: 0,
    })
}

/// Root mean square prediction error of the kriging predictor with the true
/// kernel, averaged over `n_mc` Gaussian process draws and `n_probe` probes.
/// Each draw samples the joint normal on design and probe points exactly.
pub fn rmspe_study(cfg: &RmspeConfig) -> Result<Vec<ExperimentReport>> {
    if cfg.n_mc == 0 {
        return Ok(Vec::new());
    }
    let d = cfg.d;
    let kernel = SeparableKernel::isotropic(d, cfg.smoothness, cfg.phi, cfg.sigma2)?.with_nugget(cfg.nugget)?;
    let probes = draw_probes(cfg.seed, cfg.n_probe, d);
    let mut out = Vec::new();
    for &arm in &cfg.arms {
        let start = Instant::now();
        let design = build_arm(arm, d, cfg.schedule, cfg.seed)?;
        let pts = design.points();
        let n = pts.len();
        let m = n + probes.len();
        if m > cfg.guard {
            return Err(Error::TooLarge { n: m, guard: cfg.guard });
        }
        let joint: Vec<Vec<f64>> = pts.iter().chain(&probes).cloned().collect();
        let l = sampling_factor(&joint, &kernel)?;

        let nc = cfg.n_mc;
        let mut y_design = vec![0.0; n * nc];
        let mut y_probe = vec![0.0; probes.len() * nc];
        let mut z = vec![0.0; m];
        for r in 0..nc {
            let mut rng = stream_rng(cfg.seed, REPLICATE_STREAM + r as u64);
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            for i in 0..m {
                let v: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                if i < n {
                    y_design[i * nc + r] = v;
                } else {
                    y_probe[(i - n) * nc + r] = v;
                }
            }
        }

        let w = match &design {
            ArmDesign::Grid(g) => SparseGridSolver::new(g, &kernel)?.q_solve(&y_design, nc)?,
            ArmDesign::Points(p) => DenseCovariance::new(p, &kernel, cfg.guard)?.solve(&y_design, nc)?,
        };
        let mut sse = 0.0;
        let mut pred = vec![0.0; nc];
        for (q, x0) in probes.iter().enumerate() {
            pred.iter_mut().for_each(|v| *v = 0.0);
            for (k, p) in pts.iter().enumerate() {
                let c = kernel.cov(x0, p);
                pred.iter_mut().zip(&w[k * nc..(k + 1) * nc]).for_each(|(a, b)| *a += c * b);
            }
            sse += pred
                .iter()
                .zip(&y_probe[q * nc..(q + 1) * nc])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>();
        }
        let rmspe = (sse / (nc * probes.len()) as f64).sqrt();
        out.push(report(
            arm.strategy.name(),
            n,
            d,
            "RMSPE",
            rmspe,
            start.elapsed().as_secs_f64(),
            cfg.seed,
        ));
    }
    Ok(out)
}

/// Settings of the deterministic-function study. Every arm is fitted by
/// maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct MapeConfig {
    pub function: TestFunction,
    pub d: usize,
    pub smoothness: Smoothness,
    pub nugget: f64,
    pub basis: MeanBasis,
    pub schedule: BuiltinSchedule,
    pub arms: Vec<Arm>,
    pub n_probe: usize,
    pub seed: u64,
    pub bracket: (f64, f64),
    pub search: SearchOptions,
    pub guard: usize,
}

impl MapeConfig {
    pub const KEYS: [&'static str; 17] = [
        "function", "d", "nu", "nugget", "mean", "schedule", "strategies", "etas", "lattice_sizes", "lhs_sizes", "n_probe",
        "seed", "phi_lo", "phi_hi", "tol", "max_evals", "guard",
    ];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        let function = TestFunction::from_name(&cfg.require::<String>("function")?)?;
        let d = match (cfg.get::<usize>("d")?, function.fixed_dim()) {
            (Some(d), _) => d,
            (None, Some(d)) => d,
            (None, None) => return Err(Error::Config("missing required key `d`".into())),
        };
        let basis = match cfg.raw("mean") {
            None => MeanBasis::Constant,
            Some(name) => MeanBasis::from_name(name).ok_or_else(|| Error::Config(format!("unknown mean `{name}`")))?,
        };
        let defaults = SearchOptions::default();
        Ok(MapeConfig {
            function,
            d,
            smoothness: smoothness_from_config(cfg)?,
            nugget: cfg.get_or("nugget", 0.0)?,
            basis,
            schedule: schedule_from_config(cfg)?,
            arms: arms_from_config(cfg)?,
            n_probe: cfg.get_or("n_probe", 1000)?,
            seed: cfg.get_or("seed", 0)?,
            bracket: (
                cfg.get_or("phi_lo", DEFAULT_BRACKET.0)?,
                cfg.get_or("phi_hi", DEFAULT_BRACKET.1)?,
            ),
            search: SearchOptions {
                tol: cfg.get_or("tol", defaults.tol)?,
                max_evals: cfg.get_or("max_evals", defaults.max_evals)?,
            },
            guard: cfg.get_or("guard", DEFAULT_GUARD)?,
        })
    }
}

/// Fits the arm and returns the absolute errors at `probes` plus the fit.
fn mape_arm(cfg: &MapeConfig, design: &ArmDesign, probes: &[Vec<f64>], truth: &[f64]) -> Result<(Vec<f64>, MleResult)> {
    let pts = design.points();
    let y: Vec<f64> = pts.iter().map(|x| cfg.function.eval(x)).collect();
    let p = cfg.basis.len(cfg.d);
    let f = cfg.basis.design_matrix(&pts);
    let shape = KernelShape::new(cfg.smoothness, cfg.nugget);
    let fit = match design {
        ArmDesign::Grid(g) => fit_mle(g, &f, p, &y, shape, cfg.bracket, cfg.search)?,
        ArmDesign::Points(pts) => dense_mle(pts, &f, p, &y, shape, cfg.bracket, cfg.search, cfg.guard)?,
    };
    // The kriging mean does not depend on σ², so the correlation suffices.
    let kernel = shape.correlation_kernel(cfg.d, fit.phi_hat)?;
    let mu: Vec<f64> = pts.iter().map(|x| cfg.basis.mean(x, &fit.beta_hat)).collect();
    let preds: Vec<f64> = match design {
        ArmDesign::Grid(g) => {
            let solver = SparseGridSolver::new(g, &kernel)?;
            let w = solver.compute_weights(&y, &mu)?;
            probes
                .iter()
                .map(|x| solver.predict_mean(&w, cfg.basis.mean(x, &fit.beta_hat), x))
                .collect()
        }
        ArmDesign::Points(pts) => {
            let model = dense_fit(pts, &kernel, &mu, &y, cfg.guard)?;
            probes
                .iter()
                .map(|x| model.predict_mean(x, cfg.basis.mean(x, &fit.beta_hat)))
                .collect()
        }
    };
    let errs = preds.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect();
    Ok((errs, fit))
}

/// Median absolute prediction error of the maximum likelihood predictor on
/// a deterministic test function. Each arm reports `MAPE`, `phi_hat` and
/// `sigma2_hat` rows; an arm whose design or fit fails reports a single
/// `MAPE` row with value `NaN` and the study continues.
pub fn mape_study(cfg: &MapeConfig) -> Result<Vec<ExperimentReport>> {
    cfg.function.check_dim(cfg.d)?;
    let probes = draw_probes(cfg.seed, cfg.n_probe, cfg.d);
    let truth: Vec<f64> = probes.iter().map(|x| cfg.function.eval(x)).collect();
    let mut out = Vec::new();
    for &arm in &cfg.arms {
        let start = Instant::now();
        let name = arm.strategy.name();
        let outcome = build_arm(arm, cfg.d, cfg.schedule, cfg.seed)
            .and_then(|design| Ok((design.len(), mape_arm(cfg, &design, &probes, &truth)?)))
            .map_err(|e| (e, 0));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok((n, (mut errs, fit))) => {
                out.push(report(name, n, cfg.d, "MAPE", median(&mut errs), secs, cfg.seed));
                out.push(report(name, n, cfg.d, "phi_hat", fit.phi_hat, secs, cfg.seed));
                out.push(report(name, n, cfg.d, "sigma2_hat", fit.sigma2_hat, secs, cfg.seed));
            }
            Err((_, n)) => out.push(report(name, n, cfg.d, "MAPE", f64::NAN, secs, cfg.seed)),
        }
    }
    Ok(out)
}

/// Settings of the weight computation timing comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub d: usize,
    pub eta: usize,
    pub smoothness: Smoothness,
    pub nugget: f64,
    pub phi: f64,
    pub schedule: BuiltinSchedule,
    pub trials: usize,
    pub seed: u64,
    /// The dense arm is skipped above this size.
    pub guard: usize,
}

impl TimingConfig {
    pub const KEYS: [&'static str; 9] = ["d", "eta", "nu", "nugget", "phi", "schedule", "trials", "seed", "guard"];

    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(TimingConfig {
            d: cfg.require("d")?,
            eta: cfg.require("eta")?,
            smoothness: smoothness_from_config(cfg)?,
            nugget: cfg.get_or("nugget", 0.0)?,
            phi: cfg.get_or("phi", 0.75)?,
            schedule: schedule_from_config(cfg)?,
            trials: cfg.get_or("trials", 1)?,
            seed: cfg.get_or("seed", 0)?,
            guard: cfg.get_or("guard", DEFAULT_GUARD)?,
        })
    }
}

/// Result of [`timing_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimingOutcome {
    /// Median seconds of the sparse grid weight computation.
    pub fast: ExperimentReport,
    /// Median seconds of the dense Cholesky weight computation, if run.
    pub dense: Option<ExperimentReport>,
    /// `max |w_fast - w_dense| / max(1, max |w_dense|)`.
    pub weight_gap: Option<f64>,
}

impl TimingOutcome {
    pub fn rows(&self) -> Vec<ExperimentReport> {
        let mut rows = vec![self.fast.clone()];
        if let (Some(dense), Some(gap)) = (&self.dense, self.weight_gap) {
            rows.push(dense.clone());
            let mut r = self.fast.clone();
            r.strategy = "sparse_grid_vs_dense".into();
            r.metric = "weight_gap".into();
            r.value = gap;
            r.seconds = 0.0;
            rows.push(r);
        }
        rows
    }
}

/// Times `w = Σ⁻¹ y` on the same sparse grid and random `y`, once through
/// the component factorizations and once through a dense Cholesky
/// factorization of `Σ`. Times cover building the factorizations and the
/// solve. Both arms must agree to [`TIMING_AGREEMENT`] before anything is
/// reported.
pub fn timing_study(cfg: &TimingConfig) -> Result<TimingOutcome> {
    let trials = cfg.trials.max(1);
    let design = build_sparse_grid(cfg.schedule.schedules(cfg.d, cfg.eta), cfg.eta)?;
    let n = design.len();
    let kernel = KernelShape::new(cfg.smoothness, cfg.nugget).correlation_kernel(cfg.d, cfg.phi)?;
    let mut rng = stream_rng(cfg.seed, DATA_STREAM);
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mu = vec![0.0; n];

    let mut fast_times = Vec::with_capacity(trials);
    let mut w_fast = Vec::new();
    for _ in 0..trials {
        let start = Instant::now();
        let solver = SparseGridSolver::new(&design, &kernel)?;
        w_fast = solver.compute_weights(&y, &mu)?.0;
        fast_times.push(start.elapsed().as_secs_f64());
    }
    let fast_total: f64 = fast_times.iter().sum();
    let fast = report("sparse_grid", n, cfg.d, "weights_seconds", median(&mut fast_times), fast_total, cfg.seed);

    if n > cfg.guard {
        return Ok(TimingOutcome {
            fast,
            dense: None,
            weight_gap: None,
        });
    }
    let points = design.points();
    let mut dense_times = Vec::with_capacity(trials);
    let mut w_dense = Vec::new();
    for _ in 0..trials {
        let start = Instant::now();
        let cov = DenseCovariance::traditional(&points, &kernel, cfg.guard)?;
        w_dense = cov.solve(&y, 1)?;
        dense_times.push(start.elapsed().as_secs_f64());
    }
    let scale = w_dense.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let gap = w_fast
        .iter()
        .zip(&w_dense)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    if !(gap <= TIMING_AGREEMENT) {
        return Err(Error::NumericalFailure(format!(
            "fast and dense weights differ by {gap:e} (relative), above {TIMING_AGREEMENT:e}"
        )));
    }
    let dense_total: f64 = dense_times.iter().sum();
    let dense = report("dense", n, cfg.d, "weights_seconds", median(&mut dense_times), dense_total, cfg.seed);
    Ok(TimingOutcome {
        fast,
        dense: Some(dense),
        weight_gap: Some(gap),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sg(sizes: &[usize]) -> Vec<Arm> {
        sizes
            .iter()
            .map(|&size| Arm {
                strategy: Strategy::SparseGrid,
                size,
            })
            .collect()
    }

    fn rmspe_cfg(d: usize, etas: &[usize], n_mc: usize) -> RmspeConfig {
        RmspeConfig {
            d,
            smoothness: Smoothness::FiveHalves,
            nugget: 0.0,
            phi: 0.75,
            sigma2: 1.0,
            schedule: BuiltinSchedule::InteriorFirst,
            arms: sg(etas),
            n_mc,
            n_probe: 100,
            seed: 11,
            guard: DEFAULT_GUARD,
        }
    }

    #[test]
    fn lattice_components() {
        assert_eq!(lattice_component(2).unwrap(), vec![0.25, 0.75]);
        assert_eq!(lattice_component(3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(lattice_component(4).unwrap(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert!(lattice_component(0).is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn config_arms() {
        let text = "d = 3\netas = 3,4\nlhs_sizes = 10\n";
        let cfg = RmspeConfig::from_config(&Config::parse(text, &RmspeConfig::KEYS).unwrap()).unwrap();
        assert_eq!(cfg.arms.len(), 3);
        assert_eq!(cfg.arms[2], Arm { strategy: Strategy::Lhs, size: 10 });
        assert_eq!(cfg.n_mc, 200);
        let text = "d = 3\nstrategies = lattice\netas = 3\n";
        let c = Config::parse(text, &RmspeConfig::KEYS).unwrap();
        assert!(RmspeConfig::from_config(&c).is_err());
    }

    #[test]
    fn rmspe_no_draws_is_empty() {
        assert!(rmspe_study(&rmspe_cfg(2, &[2, 3], 0)).unwrap().is_empty());
    }

    #[test]
    fn rmspe_decreases_with_level_and_is_deterministic() {
        let cfg = rmspe_cfg(2, &[3, 4, 5, 6], 50);
        let a = rmspe_study(&cfg).unwrap();
        for pair in a.windows(2) {
            assert!(pair[1].value < pair[0].value, "{pair:?}");
        }
        let b = rmspe_study(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value.to_bits(), y.value.to_bits());
            assert_eq!((x.n, &x.metric), (y.n, &y.metric));
        }
    }

    #[test]
    fn rmspe_guard() {
        let mut cfg = rmspe_cfg(2, &[4], 5);
        cfg.guard = 50;
        assert!(matches!(rmspe_study(&cfg), Err(Error::TooLarge { .. })));
    }

    fn mape_cfg(function: TestFunction, d: usize, arms: Vec<Arm>) -> MapeConfig {
        MapeConfig {
            function,
            d,
            smoothness: Smoothness::FiveHalves,
            nugget: 0.0,
            basis: MeanBasis::Constant,
            schedule: BuiltinSchedule::InteriorFirst,
            arms,
            n_probe: 200,
            seed: 3,
            bracket: DEFAULT_BRACKET,
            search: SearchOptions::default(),
            guard: DEFAULT_GUARD,
        }
    }

    #[test]
    fn mape_constant_function() {
        let arms = vec![
            Arm { strategy: Strategy::SparseGrid, size: 4 },
            Arm { strategy: Strategy::Lattice, size: 2 },
            Arm { strategy: Strategy::Lhs, size: 6 },
        ];
        let rows = mape_study(&mape_cfg(TestFunction::Constant(2.5), 2, arms)).unwrap();
        let mape: Vec<_> = rows.iter().filter(|r| r.metric == "MAPE").collect();
        assert_eq!(mape.len(), 3);
        for r in mape {
            assert!(r.n >= 2 && r.value <= 1e-6, "{r:?}");
        }
    }

    #[test]
    fn mape_failed_arm_is_marked() {
        let arms = vec![
            Arm { strategy: Strategy::Lhs, size: 0 },
            Arm { strategy: Strategy::SparseGrid, size: 3 },
        ];
        let rows = mape_study(&mape_cfg(TestFunction::ProductPeak, 2, arms)).unwrap();
        assert!(rows[0].failed());
        assert!(!rows[1].failed());
    }

    #[test]
    fn timing_small() {
        let cfg = TimingConfig {
            d: 3,
            eta: 6,
            smoothness: Smoothness::FiveHalves,
            nugget: 0.0,
            phi: 0.75,
            schedule: BuiltinSchedule::InteriorFirst,
            trials: 1,
            seed: 5,
            guard: DEFAULT_GUARD,
        };
        let t = timing_study(&cfg).unwrap();
        assert!(t.weight_gap.unwrap() <= TIMING_AGREEMENT);
        assert_eq!(t.rows().len(), 3);
        let t = timing_study(&TimingConfig { guard: 1, ..cfg }).unwrap();
        assert!(t.dense.is_none());
        assert_eq!(t.rows().len(), 1);
    }
}
