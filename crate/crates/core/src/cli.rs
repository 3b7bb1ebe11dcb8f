//! Command-line front end. Every output table is a CSV file preceded by one
//! `# longmem/<table>/v<version>` comment line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::experiments::{
    run_study, standard_pair, study_from_toml_str, trace_convergence, trace_convergence_passes,
    whittle_gap_study, write_trace_csv, WhittlePlan,
};
use crate::likelihood::TimeSeries;
use crate::metrics::{verify_appendix_d, AppendixDOptions, DivergenceReport};
use crate::prior::PriorSpec;
use crate::sampler::{
    diagnostics, estimate_d, estimate_f, posterior_mean_model, run_chain, EstimateForm, McmcConfig,
};
use crate::simulate::{sample_path, write_gamma_csv, write_paths_csv, SimPlan};
use crate::spectral::{FexpModel, SmoothnessClass};

pub const SCHEMA_VERSION: u32 = 1;

/// Process exit status.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VERIFICATION_FAILED: i32 = 1;
    pub const INPUT_ERROR: i32 = 2;
}

#[derive(Parser, Debug)]
#[command(
    name = "longmem",
    version,
    about = "Bayesian FEXP spectral estimation for long-memory Gaussian series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides any seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replicate-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate Gaussian paths from the `[simulate]` table.
    Simulate,
    /// Run the sampler on a single-column series.
    Fit {
        /// CSV with one column headed `x`.
        data: PathBuf,
        /// Number of grid frequencies in `(0, π]`.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// All divergences between two JSON models at dimension `n`.
    Distances {
        model_a: PathBuf,
        model_b: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Run a verification suite; exit status 1 on failure.
    Verify {
        suite: Suite,
        /// Random pairs for `appendix_d`.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Consistency and rate experiment from `[study]`, `[prior]`, `[mcmc]`.
    #[command(name = "rate_study", alias = "rate-study")]
    RateStudy,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Suite {
    #[value(name = "appendix_d")]
    AppendixD,
    #[value(name = "trace_convergence")]
    TraceConvergence,
    #[value(name = "whittle_gap")]
    WhittleGap,
}

/// Opens `dir/name.csv` and writes the schema line.
pub fn create_table(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{name}.csv")))?);
    writeln!(w, "# longmem/{name}/v{SCHEMA_VERSION}")?;
    Ok(w)
}

fn read_config(path: &Option<PathBuf>, required: bool) -> Result<String> {
    match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display()))),
        None if required => Err(Error::Config("--config is required".into())),
        None => Ok(String::new()),
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FitFile {
    #[serde(default)]
    prior: PriorSpec,
    #[serde(default)]
    mcmc: McmcConfig,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VerifyFile {
    class: Option<SmoothnessClass>,
    #[serde(default)]
    trace_convergence: Option<TraceFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceFile {
    ns: Vec<usize>,
}

fn parse_toml<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
}

pub fn default_class() -> SmoothnessClass {
    SmoothnessClass::new(0.05, 0.01, 100.0, 1.0, 0.5, 1.5).expect("valid")
}

fn load_model(path: &Path) -> Result<FexpModel> {
    let s = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<i32> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate => {
            let mut plan = SimPlan::from_toml_str(&read_config(&cli.config, true)?)?;
            if let Some(s) = cli.seed {
                plan.seed = s;
            }
            let sim = sample_path(&plan)?;
            write_paths_csv(&sim.paths, create_table(out, "paths")?)?;
            write_gamma_csv(&sim.gamma, create_table(out, "gamma")?)?;
        }
        Command::Fit { data, grid } => {
            let x = TimeSeries::from_csv_path(&data)?;
            let cfg_text = read_config(&cli.config, false)?;
            let file: FitFile = if cfg_text.is_empty() {
                FitFile::default()
            } else {
                parse_toml(&cfg_text)?
            };
            file.prior.validate()?;
            let mut mcmc = file.mcmc;
            if let Some(s) = cli.seed {
                mcmc.seed = s;
            }
            if grid == 0 {
                return Err(Error::Input("--grid must be positive".into()));
            }
            let chain = run_chain(&x, &file.prior, &mcmc)?;
            chain.write_csv(create_table(out, "chain")?)?;
            let lambdas: Vec<f64> = (1..=grid)
                .map(|i| std::f64::consts::PI * i as f64 / grid as f64)
                .collect();
            estimate_f(&chain, &lambdas, EstimateForm::Plugin)?
                .write_csv(create_table(out, "estimates")?)?;
            estimate_f(&chain, &lambdas, EstimateForm::LogMean)?
                .write_csv(create_table(out, "estimates_log_mean")?)?;
            diagnostics(&chain).write_csv(create_table(out, "diagnostics")?)?;
            let mean = posterior_mean_model(&chain)?;
            std::fs::write(
                out.join("posterior_mean.json"),
                serde_json::to_string_pretty(&mean)?,
            )?;
            println!("d_hat = {:.6}", estimate_d(&chain)?);
        }
        Command::Distances {
            model_a,
            model_b,
            n,
        } => {
            let a = load_model(&model_a)?;
            let b = load_model(&model_b)?;
            if n == 0 {
                return Err(Error::Input("--n must be positive".into()));
            }
            DivergenceReport::compute(&a, &b, n)?.write_csv(create_table(out, "distances")?)?;
        }
        Command::Verify { suite, trials } => {
            let text = read_config(&cli.config, false)?;
            let file: VerifyFile = if text.is_empty() {
                VerifyFile::default()
            } else {
                parse_toml(&text)?
            };
            let seed = cli.seed.unwrap_or(0);
            let pass = match suite {
                Suite::AppendixD => {
                    let class = file.class.unwrap_or_else(default_class);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let report =
                        verify_appendix_d(&mut rng, trials, &class, &AppendixDOptions::default())?;
                    report.write_csv(create_table(out, "appendix_d")?)?;
                    let v = report.violations().len();
                    println!("appendix_d: {} checks, {v} violations", report.checks.len());
                    v == 0
                }
                Suite::TraceConvergence => {
                    let ns = file
                        .trace_convergence
                        .map(|t| t.ns)
                        .unwrap_or_else(|| vec![64, 128, 256, 512, 1024, 2048]);
                    let (f0, f) = standard_pair();
                    let rows = trace_convergence(&f0, &f, &ns)?;
                    write_trace_csv(&rows, create_table(out, "trace_convergence")?)?;
                    trace_convergence_passes(&rows)
                }
                Suite::WhittleGap => {
                    let plan = WhittlePlan {
                        seed,
                        ..WhittlePlan::default()
                    };
                    let report = whittle_gap_study(&plan)?;
                    report.write_csv(create_table(out, "whittle_gap")?)?;
                    report.passes()
                }
            };
            println!("{}", if pass { "PASS" } else { "FAIL" });
            return Ok(if pass {
                exit::SUCCESS
            } else {
                exit::VERIFICATION_FAILED
            });
        }
        Command::RateStudy => {
            let (mut plan, prior, mcmc) = study_from_toml_str(&read_config(&cli.config, true)?)?;
            if let Some(s) = cli.seed {
                plan.seed = s;
            }
            let report = run_study(&plan, &prior, &mcmc, cli.workers)?;
            report.write_rows_csv(create_table(out, "rates_replicates")?)?;
            report.write_summary_csv(create_table(out, "rates")?)?;
        }
    }
    Ok(exit::SUCCESS)
}

/// Exit status for an error: numerical failures count as verification
/// failures, everything else as input errors.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Breakdown { .. }
        | Error::Quadrature(_)
        | Error::RejectionBudget(_)
        | Error::EmptyChain(_) => exit::VERIFICATION_FAILED,
        _ => exit::INPUT_ERROR,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
