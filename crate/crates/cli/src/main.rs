//! `subst-spectra`: structural checks, Lq-spectra, multifractal spectra and oracle runs for random
//! substitutions given as JSON specs.

mod commands;
mod error;
mod output;
mod report;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subst_spectra::catalogue;
use subst_spectra::distribution::DEFAULT_CAP;
use subst_spectra::lq::Grid;
use subst_spectra::PerronData;

use crate::error::CliError;
use crate::output::write_output;
use crate::report::{Analysis, AnalysisOptions};

/// Environment variable capping the number of worker threads.
const THREADS_ENV: &str = "SUBST_SPECTRA_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "subst-spectra",
    version,
    about = "Lq-spectra and multifractal spectra of random substitutions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON substitution spec.
    spec: PathBuf,
    /// Depth for the disjoint and identical set checks and the entropy approximants.
    #[arg(long, default_value_t = 3)]
    depth: usize,
    /// Largest recognisability radius to search.
    #[arg(long, default_value_t = 12)]
    recog_max: usize,
    /// Treat the substitution as recognisable without a certified radius.
    #[arg(long)]
    assume_recognisable: bool,
    /// Largest support of an exact word distribution.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Structural report: primitivity, Perron data, conditions, regime, entropies, α-range.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV of the inflation-word bounds on τ per level, and the closed form when one applies.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
        q_min: f64,
        #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
        q_max: f64,
        #[arg(long, default_value_t = 0.05)]
        q_step: f64,
        /// Inflation levels, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "3")]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV of the multifractal spectrum f(α) = τ*(α); needs recognisability.
    Conjugate {
        #[command(flatten)]
        common: Common,
        /// α grid as MIN:MAX:STEP; defaults to equally spaced points of [α_min, α_max].
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        alpha_grid: Option<Grid>,
        /// Number of default grid points.
        #[arg(long, default_value_t = 201)]
        alpha_points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact frequency table of length n: empirical τ against the bounds, plus a per-word dump.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Values of q, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0,0.5,1,2",
            allow_negative_numbers = true
        )]
        q: Vec<f64>,
        /// Monte Carlo samples for the per-word dump; 0 skips sampling.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Lower bound on every cylinder measure; a smaller minimum fails the run.
        #[arg(long)]
        min_bound: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the per-word table; defaults to stdout after the curve.
        #[arg(long)]
        table_out: Option<PathBuf>,
    },
    /// Writes a built-in example as a JSON spec; lists the names when none is given.
    Catalogue {
        name: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// JSON sequences of the topological and measure entropy approximants.
    Entropy {
        spec: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [min, max, step] = parts[..] else {
        return Err("expected MIN:MAX:STEP".into());
    };
    Grid::new(min, max, step).map_err(|e| e.to_string())
}

fn analysis(common: &Common) -> Result<Analysis, CliError> {
    let (subst, label) = spec::parse_spec(&common.spec)?;
    Analysis::run(
        subst,
        label,
        AnalysisOptions {
            depth: common.depth,
            recog_max: common.recog_max,
            assume_recognisable: common.assume_recognisable,
            cap: common.cap,
        },
    )
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { common, out } => {
            let a = analysis(&common)?;
            write_output(out.as_deref(), &commands::analyze(&a)?)
        }
        Command::Spectrum {
            common,
            q_min,
            q_max,
            q_step,
            k,
            out,
        } => {
            let grid =
                Grid::new(q_min, q_max, q_step).map_err(|e| CliError::Validation(e.to_string()))?;
            let a = analysis(&common)?;
            write_output(out.as_deref(), &commands::spectrum(&a, &grid, &k)?)
        }
        Command::Conjugate {
            common,
            alpha_grid,
            alpha_points,
            out,
        } => {
            let a = analysis(&common)?;
            write_output(
                out.as_deref(),
                &commands::conjugate(&a, alpha_grid.as_ref(), alpha_points)?,
            )
        }
        Command::Oracle {
            common,
            n,
            q,
            samples,
            seed,
            min_bound,
            out,
            table_out,
        } => {
            let a = analysis(&common)?;
            let result = commands::oracle(&a, n, &q, samples, seed, min_bound)?;
            write_output(out.as_deref(), &result.curve)?;
            write_output(table_out.as_deref(), &result.table)?;
            if result.violations.is_empty() {
                Ok(())
            } else {
                Err(CliError::Failure(format!(
                    "table checks fail: {}",
                    result.violations.join("; ")
                )))
            }
        }
        Command::Catalogue { name, out } => match name {
            None => write_output(out.as_deref(), &(catalogue::NAMES.join("\n") + "\n")),
            Some(name) => {
                let subst = catalogue::by_name(&name).ok_or_else(|| {
                    CliError::Parse(format!(
                        "unknown example {name:?}; try one of {}",
                        catalogue::NAMES.join(", ")
                    ))
                })?;
                write_output(out.as_deref(), &(spec::emit(&subst, Some(name)) + "\n"))
            }
        },
        Command::Entropy {
            spec,
            k_max,
            cap,
            out,
        } => {
            let (subst, _) = spec::parse_spec(&spec)?;
            let perron = PerronData::of(&subst)?;
            write_output(
                out.as_deref(),
                &commands::entropy(&subst, &perron, k_max, cap)?,
            )
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Parse(format!("{THREADS_ENV}={value:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failure(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(CliError::Parse(String::new()).exit_code());
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", commands::json_text(&e.to_json()).trim_end());
            ExitCode::from(e.exit_code())
        }
    }
}
