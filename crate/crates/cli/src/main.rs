use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use misclass_cli::commands::{self, ExperimentRequest, Overrides, RunOutput};
use misclass_cli::data::write_dataset;
use misclass_cli::ModelConfig;

#[derive(Debug, Parser)]
#[command(name = "misclass", version, about = "Bayesian adjustment for misclassified binary variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunFlags {
    /// Importance-sampling iterations (overrides the configuration).
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "MISCLASS_THREADS")]
    threads: Option<usize>,
    /// Output directory for summary.json, intervals.csv and traces;
    /// without it the JSON summary goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-draw traces of importance-sampled fits.
    #[arg(long)]
    trace: bool,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            iterations: self.iterations,
            seed: self.seed,
            threads: self.threads,
            trace: self.trace,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a configured model to a CSV file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Simulate a dataset from a named design (linear, dichotomised, missing, response, attenuation).
    Simulate {
        scenario: String,
        #[arg(long, default_value_t = commands::DEFAULT_SEED)]
        seed: u64,
        /// Number of rows; each design has its own default.
        #[arg(long)]
        n: Option<usize>,
        /// CSV file to write; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact posterior of a small Gaussian model by enumeration.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run a named experiment.
    Experiment {
        /// linear, dichotomised, missing, response, attenuation, birthweight or hsv.
        name: String,
        /// Birthweight case (1 or 2).
        #[arg(long)]
        case: Option<u8>,
        /// Input CSV for the birthweight experiment.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Optional configuration whose `experiment` block supplies replicates and quantile levels.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
    },
}

fn emit(output: &RunOutput, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(dir) => output.write_to(dir).with_context(|| format!("writing results to {}", dir.display())),
        None => {
            std::io::stdout().write_all(output.report.to_json()?.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit { config, data, run } => {
            let model = ModelConfig::load(&config)?;
            let output = misclass_core::parallel::with_threads(run.threads, || {
                commands::fit(&model, &data, &run.overrides())
            })??;
            let out = run.out.clone().or_else(|| model.experiment.output_dir.as_ref().map(PathBuf::from));
            emit(&output, out.as_ref())
        }
        Command::Oracle { config, data, run } => {
            let model = ModelConfig::load(&config)?;
            let output = misclass_core::parallel::with_threads(run.threads, || {
                commands::oracle(&model, &data, &run.overrides())
            })??;
            emit(&output, run.out.as_ref())
        }
        Command::Experiment {
            name,
            case,
            data,
            replicates,
            config,
            run,
        } => {
            let block = match &config {
                Some(path) => Some(ModelConfig::load(path)?.experiment),
                None => None,
            };
            let request = ExperimentRequest {
                name,
                case,
                data,
                replicates: replicates.or(block.as_ref().map(|b| b.replicates)),
                quantile_levels: block.as_ref().map(|b| b.quantile_levels.clone()),
            };
            let mut overrides = run.overrides();
            overrides.trace |= block.as_ref().is_some_and(|b| b.emit_trace);
            let output = misclass_core::parallel::with_threads(run.threads, || {
                commands::experiment(&request, &overrides)
            })??;
            let out = run.out.clone().or_else(|| block.and_then(|b| b.output_dir).map(PathBuf::from));
            emit(&output, out.as_ref())
        }
        Command::Simulate { scenario, seed, n, out } => {
            let dataset = commands::simulate(&scenario, seed, n)?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_dataset(&dataset, std::io::BufWriter::new(file))?;
                }
                None => write_dataset(&dataset, std::io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
