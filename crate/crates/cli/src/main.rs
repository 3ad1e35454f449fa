//! Command-line front end: runs the experiments and the numerics self-test.
//!
//! Exit codes: 0 success, 1 file-system failure, 2 configuration error,
//! 3 numerical failure (including too many flagged estimates or a failing
//! self-test check).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use volskew::experiments::{load_config, render_text, run, write_outputs};
use volskew::selftest::run_selftest;
use volskew::{Error, ExperimentConfig, ExperimentId, ModelConfig, OutputFormat};

#[derive(Debug, Parser)]
#[command(name = "volskew", version, about = "Short-maturity skew and curvature experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Implied over local ATM skew across a maturity ladder (rough Bergomi).
    SkewRatio(RunArgs),
    /// Analytic SABR implied and local ATM curvatures and their gap.
    SabrCurvature(RunArgs),
    /// Short-end power laws of implied and local ATM curvature (rough Bergomi).
    PowerLaw(RunArgs),
    /// Deterministic numerics suite.
    Selftest,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Time steps per maturity.
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv+svg")]
    format: Format,
    /// Hurst exponent of the rough Bergomi model.
    #[arg(long)]
    hurst: Option<f64>,
}

fn build_config(experiment: ExperimentId, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut config = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::preset(experiment),
    };
    if config.experiment != experiment {
        return Err(Error::Config(vec![format!(
            "config describes experiment {}, but {} was requested",
            config.experiment.name(),
            experiment.name()
        )]));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(paths) = args.paths {
        config.n_paths = paths;
    }
    if let Some(steps) = args.steps {
        config.n_steps = steps;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(h) = args.hurst {
        match &mut config.model {
            ModelConfig::RoughBergomi(p) => p.hurst = h,
            ModelConfig::Sabr(_) => {
                return Err(Error::Config(vec![
                    "--hurst applies to rough Bergomi experiments only".into()
                ]))
            }
        }
    }
    config.validate()?;
    Ok(config)
}

fn run_experiment(experiment: ExperimentId, args: &RunArgs) -> Result<ExitCode, Error> {
    let config = build_config(experiment, args)?;
    let start = Instant::now();
    let report = run(&config)?;
    let format = match args.format {
        Format::Csv => OutputFormat::Csv,
        Format::CsvSvg => OutputFormat::CsvSvg,
    };
    let written = write_outputs(&config, &report, format, start.elapsed().as_secs_f64())?;
    print!("{}", render_text(&report));
    for path in written {
        println!("wrote {}", path.display());
    }
    if report.exceeds_flag_limit(config.max_flagged_fraction) {
        eprintln!(
            "error: {} of {} rows flagged, above the limit of {}",
            report.flagged(),
            report.n_rows(),
            config.max_flagged_fraction
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn selftest() -> ExitCode {
    let report = run_selftest();
    for check in &report.checks {
        println!(
            "{} {}: {}",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.detail
        );
    }
    println!("selftest finished in {:.1} s", report.seconds);
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::SkewRatio(a) => (ExperimentId::SkewRatio, a),
        Command::SabrCurvature(a) => (ExperimentId::SabrCurvature, a),
        Command::PowerLaw(a) => (ExperimentId::PowerLaw, a),
        Command::Selftest => return selftest(),
    };
    match run_experiment(experiment, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
