//! `kmse`: estimation, benchmarking, verification and density fitting from
//! the command line.
//!
//! Exit codes: 0 on success, 1 for bad input or usage, 2 for numerical or
//! internal failures (including a verification that does not pass).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "kmse", version, about = "Spectral kernel mean shrinkage estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit shrinkage weights to a CSV sample.
    Estimate(EstimateArgs),
    /// Monte-Carlo risk of estimators on synthetic mixtures.
    Benchmark(BenchmarkArgs),
    /// Risk of the λ = c·n^(−b) estimator across sample sizes.
    Rates(RatesArgs),
    /// Admissibility constants of a filter, or the bound A(c, b).
    Admissibility(AdmissibilityArgs),
    /// Fit a Gaussian mixture by kernel mean matching and report test NLL.
    DensityFit(DensityArgs),
    /// Run a named numerical verification.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct OutputArg {
    /// Output file; standard output when omitted.
    #[arg(long, visible_alias = "out")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EstimatorArgs {
    /// kme, skmse, tikhonov, landweber, nu, itik or tsvd.
    #[arg(long, default_value = "tikhonov")]
    filter: String,
    /// Fixed λ (or TSVD threshold); skips selection.
    #[arg(long)]
    lambda: Option<f64>,
    /// Fixed iteration count for landweber and nu; refinement count for itik.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// loocv, gcv or none; defaults to the family's usual rule.
    #[arg(long)]
    select: Option<String>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// rbf or linear.
    #[arg(long, default_value = "rbf")]
    kernel: String,
    /// `median` or a positive σ².
    #[arg(long, default_value = "median")]
    bandwidth: String,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[command(flatten)]
    output: OutputArg,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `all` or a comma-separated list of estimator names.
    #[arg(long, default_value = "all")]
    filters: String,
    /// loocv, gcv, oracle or none; applied to every estimator but kme.
    #[arg(long)]
    select: Option<String>,
    #[arg(long, default_value = "median")]
    bandwidth: String,
    /// Draw new mixture parameters in every replication.
    #[arg(long)]
    redraw_params: bool,
    #[command(flatten)]
    output: OutputArg,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long, default_value = "1000,10000,100000")]
    n_grid: String,
    /// linear (exact risks) or rbf (simulated on the benchmark mixture).
    #[arg(long, default_value = "linear")]
    kernel: String,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "median")]
    bandwidth: String,
    #[command(flatten)]
    output: OutputArg,
}

#[derive(Debug, Args)]
struct AdmissibilityArgs {
    /// Filter whose constants are estimated.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Evaluate the bound A(c, b) together with `--beta`.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    output: OutputArg,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    estimator: EstimatorArgs,
    #[arg(long, default_value = "median")]
    bandwidth: String,
    #[arg(long, default_value_t = 5)]
    components: usize,
    #[arg(long, default_value_t = 0.25)]
    test_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// k-means restarts used to initialise the mixture.
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[command(flatten)]
    output: OutputArg,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// prop1, prop2, thm1, thm2, rates or all.
    #[arg(long)]
    check: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArg,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("KMSE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("KMSE_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
