//! `rmst`: pseudo-value export, RMST-difference estimation, copy-reference
//! sensitivity analysis and simulation from the command line.
//!
//! JSON goes to standard output (or `--out`), logs to standard error.
//! Exit codes: 0 ok, 2 input/validation, 3 tau outside the data support,
//! 4 estimation failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rmst_core::dataset::{append_column_csv, load_csv, write_csv};
use rmst_core::estimators::{estimate, EstimateReport, Method, NuisanceConfig};
use rmst_core::learners::LearnerSpec;
use rmst_core::pseudo::rmst_pseudo_per_arm;
use rmst_core::sensitivity::run_cr_analysis;
use rmst_core::simgen::SimScenario;
use rmst_core::Error;

#[derive(Parser)]
#[command(
    name = "rmst",
    version,
    about = "Pseudo-observation RMST difference estimation"
)]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the input CSV with an appended `pseudo_value` column.
    Pseudo(PseudoArgs),
    /// Estimate the RMST difference and print a JSON report.
    Estimate(EstimateArgs),
    /// Sensitivity analyses.
    #[command(subcommand)]
    Sensitivity(Sensitivity),
    /// Generate a synthetic study from a named scenario.
    Simulate(SimulateArgs),
}

#[derive(Subcommand)]
enum Sensitivity {
    /// Copy-reference analysis for censored treated subjects.
    Cr(EstimateArgs),
}

#[derive(Args)]
struct PseudoArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    tau: f64,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    tau: f64,
    /// unadjusted | gee | aiptw | tmle
    #[arg(long, default_value = "tmle")]
    method: String,
    /// Comma-separated learner library for both nuisance models
    /// (mean, glm, glm_interact, glm_sq, glm_trt).
    #[arg(long, default_value = "mean,glm,glm_interact,glm_sq")]
    learners: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Propensity truncation bounds as `lo,hi`.
    #[arg(long, default_value = "0.025,0.975")]
    g_bounds: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output JSON file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// S0, S1, S1-misQ or S1-misG.
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Overrides the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV (default: standard output unless `--truth` is given).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the scenario's true RMST values as JSON on standard output.
    #[arg(long)]
    truth: bool,
}

/// A failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::TauSupport { .. } => 3,
            Error::RankDeficient { .. } | Error::Estimation(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CmdResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> CmdResult {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn check_tau(tau: f64) -> CmdResult {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(usage(format!(
            "--tau must be a positive finite number, got {tau}"
        )))
    }
}

impl EstimateArgs {
    fn method(&self) -> Result<Method, Failure> {
        Ok(self.method.parse()?)
    }

    fn config(&self) -> Result<NuisanceConfig, Failure> {
        let library = LearnerSpec::parse_list(&self.learners)?;
        let bounds: Vec<f64> = self
            .g_bounds
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                usage(format!(
                    "--g-bounds expects `lo,hi`, got `{}`",
                    self.g_bounds
                ))
            })?;
        let [lo, hi] = bounds[..] else {
            return Err(usage(format!(
                "--g-bounds expects `lo,hi`, got `{}`",
                self.g_bounds
            )));
        };
        let config = NuisanceConfig {
            q_library: library.clone(),
            g_library: library,
            folds: self.folds,
            g_bounds: (lo, hi),
            seed: self.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

fn cmd_pseudo(args: &PseudoArgs) -> CmdResult {
    check_tau(args.tau)?;
    let data = load_csv(&args.input, None)?;
    let po = rmst_pseudo_per_arm(&data, args.tau)?;
    log::info!("computed {} pseudo-values at tau = {}", po.len(), args.tau);
    let input = File::open(&args.input)?;
    let mut w = output(args.out.as_deref())?;
    append_column_csv(input, &mut w, "pseudo_value", &po.pseudo_values())?;
    w.flush()?;
    Ok(())
}

fn run_estimate(args: &EstimateArgs) -> Result<EstimateReport, Failure> {
    check_tau(args.tau)?;
    let method = args.method()?;
    let config = args.config()?;
    let data = load_csv(&args.input, None)?;
    let po = rmst_pseudo_per_arm(&data, args.tau)?;
    let report = estimate(&po, method, &config)?;
    for w in &report.diagnostics.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

fn cmd_estimate(args: &EstimateArgs) -> CmdResult {
    let report = run_estimate(args)?;
    write_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct CrOutput {
    main: EstimateReport,
    cr: EstimateReport,
    replaced_count: usize,
    delta: f64,
}

fn cmd_sensitivity_cr(args: &EstimateArgs) -> CmdResult {
    check_tau(args.tau)?;
    let method = args.method()?;
    let config = args.config()?;
    let data = load_csv(&args.input, None)?;
    let result = run_cr_analysis(&data, args.tau, method, &config)?;
    log::info!(
        "replaced {} treated pseudo-values using a tentative cohort of {}",
        result.replaced_count,
        result.tentative_dataset_size
    );
    let delta = result.delta();
    write_json(
        &CrOutput {
            main: result.main_report,
            cr: result.cr_report,
            replaced_count: result.replaced_count,
            delta,
        },
        args.out.as_deref(),
    )
}

fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let mut scenario = SimScenario::named(&args.scenario)?;
    if let Some(seed) = args.seed {
        scenario = scenario.with_seed(seed);
    }
    if args.out.is_some() || !args.truth {
        let data = scenario.generate(args.n)?;
        let mut w = output(args.out.as_deref())?;
        write_csv(&data, &mut w)?;
        w.flush()?;
    }
    if args.truth {
        write_json(&scenario.truth(), None)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Pseudo(a) => cmd_pseudo(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sensitivity(Sensitivity::Cr(a)) => cmd_sensitivity_cr(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
