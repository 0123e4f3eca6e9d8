use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sparsegrid_gp::bench_harness::commands::{
    bench_command, design_command, fit_command, predict_command, BenchKind, FitOptions,
};
use sparsegrid_gp::dense_oracle::DEFAULT_GUARD;
use sparsegrid_gp::likelihood::{SearchOptions, DEFAULT_BRACKET};
use sparsegrid_gp::MeanBasis;

#[derive(Parser)]
#[command(name = "sggp", version, about = "Gaussian process emulation on sparse grid designs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a sparse grid design as `id,x1,...,xd`.
    Design {
        /// Built-in schedule (interior-first, boundary-first, hyperbolic-cross) or schedule file.
        #[arg(long, default_value = "interior-first")]
        schedule: String,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        eta: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum likelihood fit of a constant-mean Matérn model.
    Fit {
        #[arg(long)]
        design: PathBuf,
        /// `id,y` observations.
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, default_value_t = 2.5)]
        nu: f64,
        /// Added to each component correlation at coincident inputs.
        #[arg(long, default_value_t = 0.0)]
        nugget: f64,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        phi_bracket: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        /// Schedule the design was built from; built-ins are tried if omitted.
        #[arg(long)]
        schedule: Option<String>,
        #[arg(long)]
        eta: Option<usize>,
        /// `constant` or `linear`.
        #[arg(long, default_value = "constant")]
        mean: String,
        /// Final bracket width in log φ.
        #[arg(long, default_value_t = SearchOptions::default().tol)]
        tol: f64,
        #[arg(long, default_value_t = SearchOptions::default().max_evals)]
        max_evals: usize,
        /// Largest design the dense fallback will factorize.
        #[arg(long, default_value_t = DEFAULT_GUARD)]
        guard: usize,
    },
    /// Predict at new points; writes `id,mean,variance`.
    Predict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark study from a `key = value` config.
    Bench {
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Rmspe,
    Mape,
    Timing,
}

fn run(cli: Cli) -> sparsegrid_gp::Result<()> {
    match cli.command {
        Command::Design { schedule, dim, eta, out } => {
            let n = design_command(&schedule, dim, eta, &out)?;
            eprintln!("wrote {n} points to {}", out.display());
        }
        Command::Fit {
            design,
            obs,
            nu,
            nugget,
            phi_bracket,
            out,
            schedule,
            eta,
            mean,
            tol,
            max_evals,
            guard,
        } => {
            let mut opts = FitOptions::new(design, obs, out);
            opts.nu = nu;
            opts.nugget = nugget;
            opts.bracket = phi_bracket.map_or(DEFAULT_BRACKET, |b| (b[0], b[1]));
            opts.schedule = schedule;
            opts.eta = eta;
            opts.mean = MeanBasis::from_name(&mean)
                .ok_or_else(|| sparsegrid_gp::Error::Config(format!("unknown mean `{mean}`")))?;
            opts.search = SearchOptions { tol, max_evals };
            opts.guard = guard;
            let fit = fit_command(&opts)?;
            eprintln!(
                "{} fit: phi_hat = {}, sigma2_hat = {}, loglik = {}, {} evaluations{}{}",
                fit.method,
                fit.phi_hat,
                fit.sigma2_hat,
                fit.loglik.0,
                fit.n_evals,
                if fit.bracket_edge { " (maximum at bracket edge)" } else { "" },
                if fit.nugget > 0.0 { format!(", nugget {}", fit.nugget) } else { String::new() }
            );
        }
        Command::Predict { fit, points, out } => {
            let n = predict_command(&fit, &points, &out)?;
            eprintln!("wrote {n} predictions to {}", out.display());
        }
        Command::Bench { kind, config, out } => {
            let kind = match kind {
                Kind::Rmspe => BenchKind::Rmspe,
                Kind::Mape => BenchKind::Mape,
                Kind::Timing => BenchKind::Timing,
            };
            let rows = bench_command(kind, &config, &out)?;
            eprintln!("wrote {} report rows to {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
