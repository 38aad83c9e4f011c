use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use kmse_core::density::{density_experiment, DensityConfig, KmmConfig};
use kmse_core::filters::check_admissibility;
use kmse_core::kernels::BandwidthRule;
use kmse_core::risk::{
    fit_estimator, run_benchmark, write_risk_csv, BenchmarkConfig, EstimatorConfig, Family, PairedComparison,
    Selection,
};
use kmse_core::selection::SelectionResult;
use kmse_core::synthetic::{draw_mixture_params, sample_mixture, RngStream, PARAMS_STREAM};
use kmse_core::theory::{
    brute_force_admissibility_infimum, rate_experiment, run_check, theorem1_admissibility_bound, CheckVerdict,
    RateExperimentConfig, RateSource, CHECK_NAMES,
};
use kmse_core::{gram_matrix, load_csv, median_heuristic_bandwidth, FilterSpec, KernelSpec, KmseError};
use serde::Serialize;

use crate::{AdmissibilityArgs, BenchmarkArgs, Command, DensityArgs, EstimateArgs, EstimatorArgs, RatesArgs, VerifyArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(KmseError),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_input_error() => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<KmseError> for CliError {
    fn from(e: KmseError) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("cannot serialise output: {e}"))
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Estimate(a) => estimate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Rates(a) => rates(a),
        Command::Admissibility(a) => admissibility(a),
        Command::DensityFit(a) => density_fit(a),
        Command::Verify(a) => verify(a),
    }
}

fn write_bytes(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| KmseError::Io(e).into()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| KmseError::Io(e).into())
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

// CSV outputs carry their configuration in `<file>.config.json`.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

fn parse_bandwidth(raw: &str) -> Result<BandwidthRule> {
    if raw == "median" {
        return Ok(BandwidthRule::Median);
    }
    match raw.parse::<f64>() {
        Ok(s) if s > 0.0 && s.is_finite() => Ok(BandwidthRule::Fixed(s)),
        _ => Err(CliError::Usage(format!("--bandwidth must be 'median' or a positive number, got '{raw}'"))),
    }
}

fn parse_selection(raw: &str) -> Result<Selection> {
    match raw {
        "loocv" => Ok(Selection::Loocv),
        "gcv" => Ok(Selection::Gcv),
        "oracle" => Ok(Selection::Oracle),
        "none" => Ok(Selection::None),
        other => Err(CliError::Usage(format!("unknown selection '{other}', expected loocv, gcv or none"))),
    }
}

fn family_from(name: &str, nu: f64, iters: Option<usize>) -> Result<Family> {
    Ok(match Family::from_name(name)? {
        Family::Nu { .. } => Family::Nu { nu },
        Family::Itik { iters: default } => Family::Itik {
            iters: iters.unwrap_or(default),
        },
        f => f,
    })
}

fn estimator_config(args: &EstimatorArgs) -> Result<EstimatorConfig> {
    let family = family_from(&args.filter, args.nu, args.iters)?;
    let fixed = match family {
        Family::Kme => {
            if args.lambda.is_some() || args.iters.is_some() {
                return Err(CliError::Usage("kme takes neither --lambda nor --iters".into()));
            }
            None
        }
        Family::Landweber | Family::Nu { .. } => {
            if args.lambda.is_some() {
                return Err(CliError::Usage(format!("{} is indexed by --iters, not --lambda", family.name())));
            }
            args.iters.map(|t| t as f64)
        }
        _ => args.lambda,
    };
    let selection = match (fixed, args.select.as_deref()) {
        (Some(_), Some(s)) if s != "none" => {
            return Err(CliError::Usage(format!("--select {s} conflicts with a fixed parameter")));
        }
        (Some(value), _) => Selection::Fixed { value },
        (None, Some(s)) => parse_selection(s)?,
        (None, None) => family.default_selection(),
    };
    Ok(EstimatorConfig::new(family, selection))
}

#[derive(Serialize)]
struct EstimateConfigEcho<'a> {
    input: &'a Path,
    n: usize,
    d: usize,
    kernel: KernelSpec,
    bandwidth: BandwidthRule,
    estimator: &'a EstimatorConfig,
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    estimator_id: String,
    beta: &'a [f64],
    sigma_sq: Option<f64>,
    filter: Option<FilterSpec>,
    selection: Option<&'a SelectionResult>,
    config: EstimateConfigEcho<'a>,
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let data = load_csv(&args.input)?;
    let estimator = estimator_config(&args.estimator)?;
    let bandwidth = parse_bandwidth(&args.bandwidth)?;
    let kernel = match args.kernel.as_str() {
        "rbf" => bandwidth.resolve(&data)?,
        "linear" => KernelSpec::linear_for(&data),
        other => return Err(CliError::Usage(format!("unknown kernel '{other}', expected rbf or linear"))),
    };
    let gram = gram_matrix(&data, &kernel)?;
    let fitted = fit_estimator(&estimator, &gram, None)?;
    let out = EstimateOutput {
        estimator_id: estimator.label(),
        beta: fitted.weights.as_slice(),
        sigma_sq: kernel.bandwidth_sq(),
        filter: fitted.weights.filter,
        selection: fitted.selection.as_ref(),
        config: EstimateConfigEcho {
            input: &args.input,
            n: data.n(),
            d: data.dim(),
            kernel,
            bandwidth,
            estimator: &estimator,
        },
    };
    write_json(args.output.output.as_deref(), &out)
}

#[derive(Serialize)]
struct Comparison {
    estimator: String,
    baseline: String,
    #[serde(flatten)]
    paired: PairedComparison,
}

#[derive(Serialize)]
struct BenchmarkSidecar<'a> {
    config: &'a BenchmarkConfig,
    estimators: &'a [EstimatorConfig],
    reports: &'a [kmse_core::risk::RiskReport],
    comparisons: Vec<Comparison>,
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let names: Vec<&str> = if args.filters == "all" {
        Family::ALL_NAMES.to_vec()
    } else {
        args.filters.split(',').map(str::trim).collect()
    };
    let override_selection = args.select.as_deref().map(parse_selection).transpose()?;
    let mut estimators = Vec::with_capacity(names.len());
    for name in names {
        let family = family_from(name, 1.0, None)?;
        let selection = match (family, override_selection) {
            (Family::Kme, _) | (_, None) => family.default_selection(),
            (_, Some(s)) => s,
        };
        estimators.push(EstimatorConfig::new(family, selection));
    }
    let mut cfg = BenchmarkConfig::new(args.n, args.d, args.reps, args.seed);
    cfg.bandwidth = parse_bandwidth(&args.bandwidth)?;
    cfg.redraw_params = args.redraw_params;
    let outcome = run_benchmark(&estimators, &cfg)?;

    let mut csv = Vec::new();
    write_risk_csv(&mut csv, &outcome.reports)?;
    let path = args.output.output.as_deref();
    write_bytes(path, &csv)?;
    if let Some(p) = path {
        let base = estimators.iter().position(|e| e.family == Family::Kme);
        let comparisons = match base {
            Some(b) => estimators
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != b)
                .map(|(i, e)| Comparison {
                    estimator: e.label(),
                    baseline: estimators[b].label(),
                    paired: PairedComparison::new(&outcome.losses[b], &outcome.losses[i]),
                })
                .collect(),
            None => Vec::new(),
        };
        let side = BenchmarkSidecar {
            config: &cfg,
            estimators: &estimators,
            reports: &outcome.reports,
            comparisons,
        };
        write_json(Some(&sidecar(p)), &side)?;
    }
    Ok(())
}

fn parse_grid(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--n-grid entries must be positive integers, got '{s}'")))
        })
        .collect()
}

fn rates(args: RatesArgs) -> Result<()> {
    if args.d == 0 {
        return Err(CliError::Usage("--d must be positive".into()));
    }
    let source = match args.kernel.as_str() {
        // (1, −1/2, 1/4, …)
        "linear" => RateSource::LinearGaussian {
            mean: (0..args.d).map(|k| (-0.5f64).powi(k as i32)).collect(),
        },
        "rbf" => {
            let bandwidth_sq = match parse_bandwidth(&args.bandwidth)? {
                BandwidthRule::Fixed(s) => s,
                // median heuristic on a pilot sample from the experiment's mixture
                BandwidthRule::Median => {
                    let params = draw_mixture_params(args.d, &mut RngStream::new(args.seed, PARAMS_STREAM).rng())?;
                    let pilot = sample_mixture(&params, 500, &mut RngStream::new(args.seed, PARAMS_STREAM - 1).rng())?;
                    median_heuristic_bandwidth(&pilot)?
                }
            };
            RateSource::RbfMixture {
                d: args.d,
                bandwidth_sq,
                replications: args.reps,
                seed: args.seed,
            }
        }
        other => return Err(CliError::Usage(format!("unknown kernel '{other}', expected rbf or linear"))),
    };
    let report = rate_experiment(&RateExperimentConfig {
        c: args.c,
        b: args.beta,
        n_grid: parse_grid(&args.n_grid)?,
        source,
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(["n", "lambda", "risk", "stderr", "kme_risk", "kme_stderr"]).map_err(csv_err)?;
    for p in &report.points {
        w.write_record([
            p.n.to_string(),
            format!("{:e}", p.lambda),
            format!("{:e}", p.risk),
            format!("{:e}", p.stderr),
            format!("{:e}", p.kme_risk),
            format!("{:e}", p.kme_stderr),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Internal(e.to_string()))?;
    let path = args.output.output.as_deref();
    write_bytes(path, &bytes)?;
    if let Some(p) = path {
        write_json(Some(&sidecar(p)), &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundReport {
    c: f64,
    beta: f64,
    bound: f64,
    brute_force_infimum: f64,
}

#[derive(Serialize)]
struct AdmissibilityOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    filter_report: Option<kmse_core::AdmissibilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<BoundReport>,
}

fn admissibility(args: AdmissibilityArgs) -> Result<()> {
    let need_lambda = |name: &str| {
        args.lambda
            .ok_or_else(|| CliError::Usage(format!("--filter {name} needs --lambda")))
    };
    let need_iters = |name: &str| {
        args.iters
            .ok_or_else(|| CliError::Usage(format!("--filter {name} needs --iters")))
    };
    // spectra of normalised bounded kernels lie in [0, 1]
    let kappa_sq = 1.0;
    let filter_report = match args.filter.as_deref() {
        None => None,
        Some(name) => {
            let spec = match name {
                "tikhonov" => FilterSpec::Tikhonov { lambda: need_lambda(name)? },
                "skmse" => FilterSpec::Skmse { lambda: need_lambda(name)? },
                "tsvd" => FilterSpec::Tsvd { threshold: need_lambda(name)? },
                "itik" => FilterSpec::IteratedTikhonov {
                    iters: args.iters.unwrap_or(3),
                    lambda: need_lambda(name)?,
                },
                "landweber" => FilterSpec::landweber(need_iters(name)?, kappa_sq),
                "nu" => FilterSpec::nu_method(need_iters(name)?, args.nu, kappa_sq),
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown filter '{other}', expected tikhonov, skmse, tsvd, itik, landweber or nu"
                    )))
                }
            };
            Some(check_admissibility(&spec, kappa_sq, 10_000, &[1.0, 2.0, 4.0])?)
        }
    };
    let bound = match (args.c, args.beta) {
        (Some(c), Some(beta)) => Some(BoundReport {
            c,
            beta,
            bound: theorem1_admissibility_bound(c, beta)?,
            brute_force_infimum: brute_force_admissibility_infimum(c, beta),
        }),
        (None, None) => None,
        _ => return Err(CliError::Usage("--c and --beta must be given together".into())),
    };
    if filter_report.is_none() && bound.is_none() {
        return Err(CliError::Usage("give --filter, or --c with --beta".into()));
    }
    write_json(args.output.output.as_deref(), &AdmissibilityOutput { filter_report, bound })
}

fn density_fit(args: DensityArgs) -> Result<()> {
    let data = load_csv(&args.input)?;
    let target = estimator_config(&args.estimator)?;
    let sigma_sq = match parse_bandwidth(&args.bandwidth)? {
        BandwidthRule::Median => None,
        BandwidthRule::Fixed(s) => Some(s),
    };
    let config = DensityConfig {
        dataset: args.input.display().to_string(),
        target,
        components: args.components,
        test_frac: args.test_frac,
        seed: args.seed,
        kmm: KmmConfig {
            sigma_sq,
            restarts: args.restarts,
            ..KmmConfig::default()
        },
    };
    write_json(args.output.output.as_deref(), &density_experiment(&data, &config)?)
}

fn verify(args: VerifyArgs) -> Result<()> {
    let path = args.output.output.as_deref();
    let verdicts: Vec<CheckVerdict> = if args.check == "all" {
        CHECK_NAMES.iter().map(|c| run_check(c, args.seed)).collect::<std::result::Result<_, _>>()?
    } else {
        vec![run_check(&args.check, args.seed)?]
    };
    if args.check == "all" {
        write_json(path, &verdicts)?;
    } else {
        write_json(path, &verdicts[0])?;
    }
    match verdicts.iter().find(|v| !v.pass) {
        Some(v) => Err(CliError::Internal(format!(
            "check {} failed: metric {:e} exceeds {:e}",
            v.check, v.metric, v.threshold
        ))),
        None => Ok(()),
    }
}
