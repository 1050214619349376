use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hawkes_rf::bench::{
    self, BenchError, BenchmarkConfig, BenchmarkReport, FitRow, IMPROVEMENT_FILE, SUMMARY_FILE,
};
use hawkes_rf::{
    default_init, mle_fit, renormalized_fit, EventSequence, FitError, KernelFamily, OptimConfig,
};

/// Exit status when a fit ran but the optimizer did not meet its tolerances.
const EXIT_NOT_CONVERGED: u8 = 3;
/// Exit status for unreadable or malformed input and invalid arguments.
const EXIT_INPUT: u8 = 2;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser)]
#[command(
    name = "hawkes-rf",
    version,
    about = "Simulate, fit and benchmark univariate Hawkes models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every sequence of the benchmark grid.
    Simulate(GridArgs),
    /// Fit one kernel family to a sequence file and print a CSV row.
    Fit(FitArgs),
    /// Run MLE and RF-MLE over the benchmark grid and write the reports.
    Benchmark(GridArgs),
    /// Rebuild summary.csv and improvement.csv from per_sequence.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct GridArgs {
    /// JSON benchmark config; omitted fields take the full-grid defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `master_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores (overrides `workers`).
    #[arg(long)]
    workers: Option<usize>,
    /// Safety margins to evaluate; repeat or comma-separate (overrides `epsilons`).
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Families to fit; repeat or comma-separate (overrides `fitted_families`).
    #[arg(long, value_delimiter = ',', value_parser = parse_family)]
    family: Vec<KernelFamily>,
}

#[derive(Args)]
struct FitArgs {
    /// Sequence file: a `T=<horizon>` line followed by one timestamp per line.
    sequence: PathBuf,
    #[arg(long, value_parser = parse_family)]
    family: KernelFamily,
    #[arg(long, value_enum, default_value_t = MethodArg::Mle)]
    method: MethodArg,
    /// Safety margin for RF-MLE.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Append the row to this CSV file (created with a header) instead of
    /// printing it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Benchmark output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config whose `output_dir` to use when `--out` is absent.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mle,
    RfMle,
}

fn parse_family(s: &str) -> Result<KernelFamily, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Other(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_)
            | BenchError::ConfigSyntax { .. }
            | BenchError::Sequence { .. } => Failure::Input(e.to_string()),
            BenchError::Io { ref source, .. } if source.kind() == io::ErrorKind::NotFound => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => fit(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn load_config(args: &GridArgs) -> Result<BenchmarkConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => BenchmarkConfig::from_file(path)?,
        None => BenchmarkConfig::default(),
    };
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if !args.epsilon.is_empty() {
        config.epsilons = args.epsilon.clone();
    }
    if !args.family.is_empty() {
        config.fitted_families = args.family.clone();
    }
    config.validate()?;
    Ok(config)
}

fn simulate(args: GridArgs) -> Result<ExitCode, Failure> {
    let config = load_config(&args)?;
    let paths = bench::simulate_sequences(&config)?;
    println!(
        "wrote {} sequences under {}",
        paths.len(),
        config.output_dir.join("sequences").display()
    );
    Ok(ExitCode::SUCCESS)
}

fn fit(args: FitArgs) -> Result<ExitCode, Failure> {
    if !(args.epsilon.is_finite() && args.epsilon > 0.0) {
        return Err(Failure::Input(format!(
            "--epsilon must be positive, got {}",
            args.epsilon
        )));
    }
    let seq = EventSequence::read(&args.sequence)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.sequence.display())))?;
    let fit_error = |e: FitError| match e {
        FitError::EmptySequence => Failure::Input(format!(
            "{}: sequence has no events",
            args.sequence.display()
        )),
        e => Failure::Other(e.to_string()),
    };
    let init = default_init(&seq, args.family).map_err(fit_error)?;
    let mle = mle_fit(&seq, args.family, &init, &OptimConfig::default()).map_err(fit_error)?;
    let result = match args.method {
        MethodArg::Mle => mle,
        MethodArg::RfMle => renormalized_fit(&seq, &mle, args.epsilon).map_err(fit_error)?,
    };

    let row = FitRow::new(
        args.sequence.display().to_string(),
        None,
        args.family,
        &result,
    );
    match &args.out {
        Some(path) => append_row(path, &row),
        None => write_rows(io::stdout().lock(), &row, true),
    }
    .map_err(Failure::Other)?;

    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "warning: optimizer stopped after {} iterations without converging",
            result.iterations
        );
        ExitCode::from(EXIT_NOT_CONVERGED)
    })
}

fn write_rows<W: Write>(out: W, row: &FitRow, header: bool) -> Result<(), String> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(out);
    writer.serialize(row).map_err(|e| e.to_string())?;
    writer.flush().map_err(|e| e.to_string())
}

fn append_row(path: &Path, row: &FitRow) -> Result<(), String> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let fresh = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    write_rows(file, row, fresh)
}

fn benchmark(args: GridArgs) -> Result<ExitCode, Failure> {
    let config = load_config(&args)?;
    let report = bench::run_benchmark(&config)?;
    let failed = report.rows.iter().filter(|r| r.is_failed()).count();
    println!(
        "{} fits ({} failed); reports written to {}",
        report.rows.len(),
        failed,
        config.output_dir.display()
    );
    print_improvement(&report);
    Ok(ExitCode::SUCCESS)
}

fn report(args: ReportArgs) -> Result<ExitCode, Failure> {
    let dir = match (args.out, args.config) {
        (Some(dir), _) => dir,
        (None, Some(config)) => BenchmarkConfig::from_file(&config)?.output_dir,
        (None, None) => BenchmarkConfig::default().output_dir,
    };
    let report = BenchmarkReport::read(&dir)?;
    report.write(&dir)?;
    println!(
        "rewrote {} and {} from {} rows",
        dir.join(SUMMARY_FILE).display(),
        dir.join(IMPROVEMENT_FILE).display(),
        report.rows.len()
    );
    print_improvement(&report);
    Ok(ExitCode::SUCCESS)
}

fn print_improvement(report: &BenchmarkReport) {
    println!(
        "{:>8}  {:<6} {:>7}  {:<6} {:>9}",
        "horizon", "fitted", "epsilon", "gen", "improved"
    );
    for r in &report.improvement {
        println!(
            "{:>8}  {:<6} {:>7}  {:<6} {:>4}/{:<4}",
            r.horizon, r.fitted_family, r.epsilon, r.generator_family, r.improved, r.sequences
        );
    }
}
