//! The `design`, `fit`, `predict` and `bench` commands, independent of
//! argument parsing.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::config::Config;
use super::report::write_report_csv;
use super::studies::{mape_study, rmspe_study, timing_study, MapeConfig, RmspeConfig, TimingConfig};
use crate::dense_oracle::{dense_mle, DenseCovariance, DEFAULT_GUARD};
use crate::designs::{
    build_sparse_grid, csv_err, format_schedules, parse_schedules, read_design_table, read_schedules, sample_size,
    write_design_csv, BuiltinSchedule, ComponentSchedule, SparseGridDesign,
};
use crate::error::{Error, Result};
use crate::format_f64;
use crate::kernels::{KernelShape, MeanBasis, SeparableKernel, Smoothness};
use crate::likelihood::{fit_mle, MleResult, SearchOptions, DEFAULT_BRACKET};
use crate::sg_predictor::{SparseGridSolver, WeightVector};

/// Built-in schedule name, or a path to a schedule file.
fn load_schedules(spec: &str, d: usize, eta: usize) -> Result<Vec<ComponentSchedule>> {
    if let Some(b) = BuiltinSchedule::from_name(spec) {
        if eta < d {
            return Err(Error::InvalidLevel { eta, d });
        }
        return Ok(b.schedules(d, eta));
    }
    let schedules = read_schedules(Path::new(spec))?;
    if schedules.len() != d {
        return Err(Error::InvalidSchedule(format!(
            "schedule file describes {} dimensions, expected {d}",
            schedules.len()
        )));
    }
    Ok(schedules)
}

/// Writes the sparse grid for `schedule` at level `eta` as a design CSV.
pub fn design_command(schedule: &str, dim: usize, eta: usize, out: &Path) -> Result<usize> {
    let design = build_sparse_grid(load_schedules(schedule, dim, eta)?, eta)?;
    write_design_csv(&design.points(), BufWriter::new(File::create(out)?))?;
    Ok(design.len())
}

/// `f64` that survives JSON even when infinite or NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsonF64(pub f64);

impl Serialize for JsonF64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&self.0.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for JsonF64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(JsonF64(v)),
            Repr::Text(t) => t.parse().map(JsonF64).map_err(serde::de::Error::custom),
        }
    }
}

/// Everything `predict` needs, as written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    /// `sparse_grid` or `dense`.
    pub method: String,
    pub d: usize,
    pub nu: f64,
    /// Diagonal nugget on each component correlation.
    #[serde(default)]
    pub nugget: f64,
    pub mean: String,
    pub beta_hat: Vec<f64>,
    pub sigma2_hat: f64,
    pub phi_hat: f64,
    pub loglik: JsonF64,
    pub logdet: f64,
    pub n_evals: usize,
    pub bracket_edge: bool,
    pub trace: Vec<(f64, JsonF64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<usize>,
    /// Schedule file text of the component designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedules: Option<String>,
    /// Design points in model order.
    pub points: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// `R⁻¹(y - Fβ̂)` on the correlation scale, in model order.
    pub weights: Vec<f64>,
}

impl FitFile {
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn smoothness(&self) -> Result<Smoothness> {
        Smoothness::from_nu(self.nu)
    }

    pub fn basis(&self) -> Result<MeanBasis> {
        MeanBasis::from_name(&self.mean).ok_or_else(|| Error::Parse(format!("unknown mean basis `{}`", self.mean)))
    }

    pub fn correlation_kernel(&self) -> Result<SeparableKernel> {
        KernelShape::new(self.smoothness()?, self.nugget).correlation_kernel(self.d, self.phi_hat)
    }

    pub fn sparse_grid(&self) -> Result<Option<SparseGridDesign>> {
        match (&self.schedules, self.eta) {
            (Some(text), Some(eta)) => Ok(Some(build_sparse_grid(parse_schedules(text)?, eta)?)),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub design: PathBuf,
    pub obs: PathBuf,
    pub nu: f64,
    pub nugget: f64,
    pub bracket: (f64, f64),
    pub out: PathBuf,
    /// Schedule name or file the design was built from. Without it every
    /// built-in schedule is tried.
    pub schedule: Option<String>,
    pub eta: Option<usize>,
    pub mean: MeanBasis,
    pub search: SearchOptions,
    pub guard: usize,
}

impl FitOptions {
    pub fn new(design: PathBuf, obs: PathBuf, out: PathBuf) -> Self {
        FitOptions {
            design,
            obs,
            nu: 2.5,
            nugget: 0.0,
            bracket: DEFAULT_BRACKET,
            out,
            schedule: None,
            eta: None,
            mean: MeanBasis::Constant,
            search: SearchOptions::default(),
            guard: DEFAULT_GUARD,
        }
    }
}

fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// `perm[row] = design index` if `points` is a reordering of `design`.
fn match_points(design: &SparseGridDesign, points: &[Vec<f64>]) -> Option<Vec<usize>> {
    if design.len() != points.len() {
        return None;
    }
    let index: HashMap<Vec<u64>, usize> = (0..design.len()).map(|k| (point_key(&design.point(k)), k)).collect();
    let mut seen = vec![false; design.len()];
    let mut perm = Vec::with_capacity(points.len());
    for p in points {
        let k = *index.get(&point_key(p))?;
        if std::mem::replace(&mut seen[k], true) {
            return None;
        }
        perm.push(k);
    }
    Some(perm)
}

/// Finds a sparse grid that the design CSV is a reordering of.
fn recognize(points: &[Vec<f64>], schedule: Option<&str>, eta: Option<usize>) -> Result<Option<(SparseGridDesign, Vec<usize>)>> {
    let d = points.first().map_or(0, Vec::len);
    let n = points.len();
    if d == 0 {
        return Ok(None);
    }
    let candidates: Vec<(String, Option<BuiltinSchedule>)> = match schedule {
        Some(s) => vec![(s.to_string(), BuiltinSchedule::from_name(s))],
        None => BuiltinSchedule::ALL.iter().map(|b| (b.name().to_string(), Some(*b))).collect(),
    };
    for (spec, builtin) in candidates {
        let levels: Vec<usize> = match eta {
            Some(e) => vec![e],
            None => {
                // Smallest η whose sample size reaches N.
                let mut found = Vec::new();
                for e in d.. {
                    let size = match builtin {
                        Some(b) => sample_size(&b.schedules(d, e), e)?,
                        None => match load_schedules(&spec, d, e).and_then(|s| sample_size(&s, e)) {
                            Ok(size) => size,
                            Err(_) => break,
                        },
                    };
                    if size == n {
                        found.push(e);
                    }
                    if size >= n {
                        break;
                    }
                }
                found
            }
        };
        for e in levels {
            let design = build_sparse_grid(load_schedules(&spec, d, e)?, e)?;
            if let Some(perm) = match_points(&design, points) {
                return Ok(Some((design, perm)));
            }
        }
    }
    if schedule.is_some() {
        return Err(Error::InvalidDesign("design points do not form the requested sparse grid".into()));
    }
    Ok(None)
}

/// Reads `id,y` observations and orders them like `ids`.
fn read_observations(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || headers.get(0).map(str::trim) != Some("id") {
        return Err(Error::Parse("observation CSV must have header `id,y`".into()));
    }
    let mut by_id = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let id = rec.get(0).unwrap_or("").trim().to_string();
        let v: f64 = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad observation for id `{id}`")))?;
        if by_id.insert(id.clone(), v).is_some() {
            return Err(Error::Parse(format!("observation id `{id}` repeated")));
        }
    }
    if by_id.len() != ids.len() {
        return Err(Error::Shape(format!("{} observations for {} design points", by_id.len(), ids.len())));
    }
    ids.iter()
        .map(|id| by_id.get(id).copied().ok_or_else(|| Error::Parse(format!("no observation for id `{id}`"))))
        .collect()
}

/// Maximum likelihood fit. Sparse grid designs use the fast path, anything
/// else the dense one.
pub fn fit_command(opts: &FitOptions) -> Result<FitFile> {
    let (ids, points) = read_design_table(File::open(&opts.design)?)?;
    if points.is_empty() {
        return Err(Error::InvalidDesign("empty design".into()));
    }
    let y_rows = read_observations(&opts.obs, &ids)?;
    let d = points[0].len();
    let smoothness = Smoothness::from_nu(opts.nu)?;
    let shape = KernelShape::new(smoothness, opts.nugget);
    let p = opts.mean.len(d);

    let (fit, points, y, weights, grid): (MleResult, Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Option<SparseGridDesign>) =
        match recognize(&points, opts.schedule.as_deref(), opts.eta)? {
            Some((design, perm)) => {
                let mut y = vec![0.0; design.len()];
                for (row, &k) in perm.iter().enumerate() {
                    y[k] = y_rows[row];
                }
                let pts = design.points();
                let f = opts.mean.design_matrix(&pts);
                let fit = fit_mle(&design, &f, p, &y, shape, opts.bracket, opts.search)?;
                let kernel = shape.correlation_kernel(d, fit.phi_hat)?;
                let mu: Vec<f64> = pts.iter().map(|x| opts.mean.mean(x, &fit.beta_hat)).collect();
                let w = SparseGridSolver::new(&design, &kernel)?.compute_weights(&y, &mu)?.0;
                (fit, pts, y, w, Some(design))
            }
            None => {
                let f = opts.mean.design_matrix(&points);
                let fit = dense_mle(&points, &f, p, &y_rows, shape, opts.bracket, opts.search, opts.guard)?;
                let kernel = shape.correlation_kernel(d, fit.phi_hat)?;
                let r: Vec<f64> = points
                    .iter()
                    .zip(&y_rows)
                    .map(|(x, v)| v - opts.mean.mean(x, &fit.beta_hat))
                    .collect();
                let w = DenseCovariance::new(&points, &kernel, opts.guard)?.solve(&r, 1)?;
                (fit, points, y_rows, w, None)
            }
        };
    let file = FitFile {
        method: if grid.is_some() { "sparse_grid" } else { "dense" }.to_string(),
        d,
        nu: smoothness.nu(),
        nugget: opts.nugget,
        mean: opts.mean.name().to_string(),
        beta_hat: fit.beta_hat,
        sigma2_hat: fit.sigma2_hat,
        phi_hat: fit.phi_hat,
        loglik: JsonF64(fit.loglik),
        logdet: fit.logdet,
        n_evals: fit.n_evals,
        bracket_edge: fit.bracket_edge,
        trace: fit.trace.into_iter().map(|(a, b)| (a, JsonF64(b))).collect(),
        eta: grid.as_ref().map(SparseGridDesign::eta),
        schedules: grid.as_ref().map(|g| format_schedules(g.schedules())),
        points,
        y,
        weights,
    };
    file.write(&opts.out)?;
    Ok(file)
}

/// Kriging mean and variance at every row of a points CSV, written as
/// `id,mean,variance`.
pub fn predict_command(fit: &Path, points: &Path, out: &Path) -> Result<usize> {
    let model = FitFile::read(fit)?;
    let (ids, probes) = read_design_table(File::open(points)?)?;
    if let Some(bad) = probes.iter().find(|p| p.len() != model.d) {
        return Err(Error::Shape(format!("probe has {} coordinates, model expects {}", bad.len(), model.d)));
    }
    let basis = model.basis()?;
    let kernel = model.correlation_kernel()?;
    let n = model.points.len();
    if model.weights.len() != n || model.y.len() != n {
        return Err(Error::Parse("fit file has inconsistent sizes".into()));
    }
    let mut rows = Vec::with_capacity(probes.len());
    match model.sparse_grid()? {
        Some(design) => {
            if design.len() != n {
                return Err(Error::Parse("fit file schedules do not match its points".into()));
            }
            let solver = SparseGridSolver::new(&design, &kernel)?;
            let w = WeightVector(model.weights.clone());
            for x in &probes {
                let mean = solver.predict_mean(&w, basis.mean(x, &model.beta_hat), x);
                rows.push((mean, model.sigma2_hat * solver.predict_variance(x).value));
            }
        }
        None => {
            let cov = DenseCovariance::new(&model.points, &kernel, n.max(DEFAULT_GUARD))?;
            for x in &probes {
                let c = cov.cross_covariance(x);
                let mean = basis.mean(x, &model.beta_hat) + c.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>();
                rows.push((mean, model.sigma2_hat * cov.variance(x).max(0.0)));
            }
        }
    }
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out)?));
    w.write_record(["id", "mean", "variance"]).map_err(csv_err)?;
    for (id, (mean, var)) in ids.iter().zip(&rows) {
        w.write_record([id.clone(), format_f64(*mean), format_f64(*var)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(rows.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchKind {
    Rmspe,
    Mape,
    Timing,
}

/// Runs a study from its config file and writes the report CSV.
pub fn bench_command(kind: BenchKind, config: &Path, out: &Path) -> Result<Vec<super::ExperimentReport>> {
    let text = std::fs::read_to_string(config)?;
    let rows = match kind {
        BenchKind::Rmspe => rmspe_study(&RmspeConfig::from_config(&Config::parse(&text, &RmspeConfig::KEYS)?)?)?,
        BenchKind::Mape => mape_study(&MapeConfig::from_config(&Config::parse(&text, &MapeConfig::KEYS)?)?)?,
        BenchKind::Timing => timing_study(&TimingConfig::from_config(&Config::parse(&text, &TimingConfig::KEYS)?)?)?.rows(),
    };
    write_report_csv(&rows, BufWriter::new(File::create(out)?))?;
    Ok(rows)
}
