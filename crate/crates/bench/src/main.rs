use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlnltp::RngSeed;
use mlnltp_bench::config::FitConfig;
use mlnltp_bench::error::{BenchError, Result};
use mlnltp_bench::fit::{run_fit, write_fit_report, FitInputs};
use mlnltp_bench::grid::{parse_grid, run_bench, BenchSettings};
use mlnltp_bench::io::write_atomic;
use mlnltp_bench::ppc::posterior_predictive;
use mlnltp_bench::reference::McmcSettings;
use mlnltp_bench::sim::simulate_mln;

/// Multinomial logistic-normal regression by collapse-uncollapse sampling.
#[derive(Debug, Parser)]
#[command(name = "mlnltp", version)]
struct Cli {
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct SamplerArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Posterior draws S.
    #[arg(long = "draws")]
    draws: Option<usize>,
    /// Pseudo-count for initialization.
    #[arg(long)]
    pseudo: Option<f64>,
}

impl SamplerArgs {
    fn overrides(&self) -> FitConfig {
        FitConfig { seed: self.seed, draws: self.draws, pseudo: self.pseudo, ..Default::default() }
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Count table, categories by samples.
    #[arg(long)]
    counts: PathBuf,
    /// Covariate table, covariates by samples.
    #[arg(long)]
    covariates: PathBuf,
    /// TOML file of fit settings; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model and write posterior summaries of the coefficients.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Output directory for lambda.csv, diagnostics.csv and timing.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a data set and write it with its ground truth.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate, fit and score over a grid of N x D x Q.
    Bench {
        /// Comma-separated NxDxQ triples, e.g. 100x30x5,50x10x2.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 3)]
        replicates: usize,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Also run the MCMC reference with this many post-burn-in sweeps
        /// and report standard-deviation errors.
        #[arg(long)]
        reference_sweeps: Option<usize>,
        /// Output table; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Posterior predictive check of a fit against its data.
    Ppc {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        /// Output table of observed counts and predictive intervals.
        #[arg(long)]
        out: PathBuf,
    },
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(BenchError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    set_threads(cli.threads)?;
    match cli.command {
        Command::Fit { data, sampler, out } => {
            let fit = run_fit(&data.counts, &data.covariates, data.config.as_deref(), &sampler.overrides())?;
            write_fit_report(&fit.report, &out)?;
            let d = &fit.report.diagnostics;
            eprintln!(
                "converged={} iterations={} draws={} seconds={:.3} -> {}",
                d.converged,
                d.iterations,
                fit.report.draws,
                fit.report.seconds,
                out.display()
            );
        }
        Command::Simulate { n, d, q, seed, out } => {
            let data = simulate_mln(n, d, q, seed)?;
            data.write(&out)?;
            eprintln!("zero_fraction={:.4} -> {}", data.zero_fraction(), out.display());
        }
        Command::Bench { grid, replicates, sampler, reference_sweeps, out } => {
            let settings = BenchSettings {
                replicates,
                seed: sampler.seed.unwrap_or(0),
                config: FitConfig { seed: None, ..sampler.overrides() },
                reference: reference_sweeps.map(|sweeps| McmcSettings { sweeps, ..Default::default() }),
            };
            let table = run_bench(&parse_grid(&grid)?, &settings)?;
            match out {
                Some(path) => write_atomic(&path, &table.render())?,
                None => print!("{}", table.render()),
            }
        }
        Command::Ppc { data, sampler, out } => ppc(&data, &sampler, &out)?,
    }
    Ok(())
}

/// Refits from the same inputs, configuration and seed (the fit is
/// deterministic), then simulates replicate count tables.
fn ppc(data: &DataArgs, sampler: &SamplerArgs, out: &Path) -> Result<()> {
    let fit = run_fit(&data.counts, &data.covariates, data.config.as_deref(), &sampler.overrides())?;
    let inputs = FitInputs::load(&data.counts, &data.covariates)?;
    let seed = RngSeed(fit.report.seed).derive(3);
    let summary = posterior_predictive(&fit.posterior.params, &inputs.x, inputs.y.totals(), seed)?;
    let samples: Vec<String> = mlnltp_bench::io::load_count_table(&data.counts)?.col_labels("s");
    summary.table(inputs.y.counts(), &inputs.category_names, &samples).write(out)?;
    eprintln!("coverage={:.4} -> {}", summary.coverage(inputs.y.counts()), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
