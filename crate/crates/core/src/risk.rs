//! Exact loss against Gaussian mixtures under the RBF kernel, and the
//! replication harness that turns losses into risk estimates.
//!
//! For `k(x, y) = exp(−‖x−y‖²/(2σ²))` and `y ~ N(θ, Σ)`,
//! `E k(x, y) = (σ²)^{d/2} det(Σ+σ²I)^{−1/2} exp(−½ (x−θ)ᵀ(Σ+σ²I)⁻¹(x−θ))`.
//! Applying the identity twice gives `‖μ_P‖²` for a mixture, so
//! `‖Σβᵢk(xᵢ,·) − μ_P‖² = βᵀKβ − 2βᵀz + ‖μ_P‖²` with `zᵢ = μ_P(xᵢ)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::estimators::{
    empirical_kme_weights, fit_weights, landweber_path, nu_method_path, spectral_weights, WeightVector,
};
use crate::filters::{default_lambda_grid, FilterSpec};
use crate::kernels::{gram_matrix, normalize_gram, BandwidthRule, GramMatrix, KernelSpec};
use crate::linalg::{sym_eigendecompose, SymMatrix};
use crate::selection::{
    argmin_first, gcv_select_tsvd, select_iterations_on_gram, select_lambda_on_gram, IterativeAlgorithm,
    LambdaFamily, ScoreKind, SelectionResult,
};
use crate::synthetic::{draw_mixture_params, effective_components, sample_mixture, MixtureParams, RngStream, PARAMS_STREAM};

// Gaussian smoothing by the kernel: evaluates E k(x, y) for y ~ N(θ, Σ)
// through the eigendecomposition of Σ + σ²I.
#[derive(Debug, Clone)]
struct Smoother {
    basis: DMatrix<f64>,
    shifted: DVector<f64>,
    log_scale: f64,
}

impl Smoother {
    fn new(cov: &DMatrix<f64>, sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(KmseError::Config(format!("bandwidth must be positive, got {sigma_sq}")));
        }
        let d = cov.nrows();
        let eig = sym_eigendecompose(&SymMatrix::new(cov + DMatrix::identity(d, d) * sigma_sq)?)?;
        // a PSD covariance keeps every shifted eigenvalue at least σ²
        let tol = 1e-10 * eig.max_abs_eigenvalue().max(sigma_sq);
        if eig.eigenvalues.iter().any(|&a| a < sigma_sq - tol) {
            return Err(KmseError::Input("covariance is not positive semi-definite".into()));
        }
        let shifted = eig.eigenvalues.map(|a| a.max(sigma_sq));
        let log_scale = shifted.iter().map(|a| 0.5 * (sigma_sq / a).ln()).sum();
        Ok(Smoother {
            basis: eig.eigenvectors,
            shifted,
            log_scale,
        })
    }

    fn eval(&self, delta: &DVector<f64>) -> f64 {
        let proj = self.basis.tr_mul(delta);
        let quad: f64 = proj.iter().zip(self.shifted.iter()).map(|(p, a)| p * p / a).sum();
        (self.log_scale - 0.5 * quad).exp()
    }
}

fn to_vector(x: &[f64], d: usize) -> Result<DVector<f64>> {
    if x.len() != d {
        return Err(KmseError::DimensionMismatch { expected: d, found: x.len() });
    }
    Ok(DVector::from_column_slice(x))
}

/// `∫ k(x, y) N(y; θ, Σ) dy` for the RBF kernel with bandwidth `σ²`.
pub fn kernel_mean_inner(x: &[f64], mean: &DVector<f64>, cov: &DMatrix<f64>, sigma_sq: f64) -> Result<f64> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d {
        return Err(KmseError::DimensionMismatch { expected: d, found: cov.nrows() });
    }
    let delta = to_vector(x, d)? - mean;
    Ok(Smoother::new(cov, sigma_sq)?.eval(&delta))
}

/// `‖μ_P‖²` for a Gaussian mixture; additive noise is folded in first.
pub fn mixture_mean_sq_norm(params: &MixtureParams, sigma_sq: f64) -> Result<f64> {
    let p = effective_components(params);
    let r = p.components();
    let mut total = 0.0;
    for j in 0..r {
        for l in j..r {
            let cov = &p.covariances[j] + &p.covariances[l];
            let v = Smoother::new(&cov, sigma_sq)?.eval(&(&p.means[j] - &p.means[l]));
            let mult = if j == l { 1.0 } else { 2.0 };
            total += mult * p.weights[j] * p.weights[l] * v;
        }
    }
    Ok(total)
}

/// The kernel mean of a Gaussian mixture, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct MixtureEmbedding {
    params: MixtureParams,
    smoothers: Vec<Smoother>,
    sigma_sq: f64,
    mean_sq_norm: f64,
}

impl MixtureEmbedding {
    pub fn new(params: &MixtureParams, sigma_sq: f64) -> Result<Self> {
        let params = effective_components(params);
        let smoothers = params
            .covariances
            .iter()
            .map(|c| Smoother::new(c, sigma_sq))
            .collect::<Result<Vec<_>>>()?;
        let mean_sq_norm = mixture_mean_sq_norm(&params, sigma_sq)?;
        Ok(MixtureEmbedding {
            params,
            smoothers,
            sigma_sq,
            mean_sq_norm,
        })
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    /// `‖μ_P‖²`.
    pub fn mean_sq_norm(&self) -> f64 {
        self.mean_sq_norm
    }

    /// `μ_P(x) = ⟨μ_P, k(x, ·)⟩`.
    pub fn inner(&self, x: &[f64]) -> Result<f64> {
        let x = to_vector(x, self.params.dim())?;
        Ok(self
            .params
            .weights
            .iter()
            .zip(&self.params.means)
            .zip(&self.smoothers)
            .map(|((w, m), s)| w * s.eval(&(&x - m)))
            .sum())
    }

    /// `μ_P` evaluated at every row.
    pub fn inner_vector(&self, points: &Dataset) -> Result<DVector<f64>> {
        let vals = points.rows().map(|r| self.inner(r)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(vals))
    }

    /// `βᵀKβ − 2βᵀz + ‖μ_P‖²` given the Gram matrix and `z = μ_P(X)`.
    pub fn loss_from_parts(&self, gram: &SymMatrix, z: &DVector<f64>, beta: &DVector<f64>) -> f64 {
        beta.dot(&gram.mul_vec(beta)) - 2.0 * beta.dot(z) + self.mean_sq_norm
    }
}

/// `‖Σᵢ βᵢ k(xᵢ, ·) − μ_P‖²` in closed form.
pub fn loss(beta: &WeightVector, points: &Dataset, params: &MixtureParams, spec: &KernelSpec) -> Result<f64> {
    let KernelSpec::GaussianRbf { bandwidth_sq } = *spec else {
        return Err(KmseError::Unsupported("closed-form loss needs the Gaussian RBF kernel".into()));
    };
    if beta.len() != points.n() {
        return Err(KmseError::DimensionMismatch { expected: points.n(), found: beta.len() });
    }
    if points.dim() != params.dim() {
        return Err(KmseError::DimensionMismatch { expected: params.dim(), found: points.dim() });
    }
    let emb = MixtureEmbedding::new(params, bandwidth_sq)?;
    let gram = gram_matrix(points, spec)?;
    let z = emb.inner_vector(points)?;
    Ok(emb.loss_from_parts(gram.raw(), &z, &beta.weights))
}

/// Estimator families known to the harness, named as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Kme,
    Skmse,
    Tikhonov,
    Landweber,
    Nu { nu: f64 },
    Itik { iters: usize },
    Tsvd,
}

impl Family {
    pub const ALL_NAMES: [&'static str; 7] = ["kme", "skmse", "tikhonov", "landweber", "nu", "itik", "tsvd"];

    /// Parses a command-line name; ν defaults to 1 and iterated Tikhonov to
    /// three refinements.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "kme" => Family::Kme,
            "skmse" => Family::Skmse,
            "tikhonov" => Family::Tikhonov,
            "landweber" => Family::Landweber,
            "nu" => Family::Nu { nu: 1.0 },
            "itik" => Family::Itik { iters: 3 },
            "tsvd" => Family::Tsvd,
            other => {
                return Err(KmseError::Config(format!(
                    "unknown estimator '{other}', expected one of {}",
                    Self::ALL_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Kme => "kme",
            Family::Skmse => "skmse",
            Family::Tikhonov => "tikhonov",
            Family::Landweber => "landweber",
            Family::Nu { .. } => "nu",
            Family::Itik { .. } => "itik",
            Family::Tsvd => "tsvd",
        }
    }

    /// The selection rule used when none is requested.
    pub fn default_selection(&self) -> Selection {
        match self {
            Family::Kme => Selection::None,
            Family::Tsvd => Selection::Gcv,
            _ => Selection::Loocv,
        }
    }

    fn lambda_family(&self) -> Option<LambdaFamily> {
        match *self {
            Family::Skmse => Some(LambdaFamily::Skmse),
            Family::Tikhonov => Some(LambdaFamily::Tikhonov),
            Family::Itik { iters } => Some(LambdaFamily::IteratedTikhonov { iters }),
            Family::Tsvd => Some(LambdaFamily::Tsvd),
            _ => None,
        }
    }

    fn iterative(&self) -> Option<IterativeAlgorithm> {
        match *self {
            Family::Landweber => Some(IterativeAlgorithm::Landweber),
            Family::Nu { nu } => Some(IterativeAlgorithm::NuMethod { nu }),
            _ => None,
        }
    }
}

/// How an estimator's shrinkage parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Selection {
    /// No parameter (the empirical mean).
    None,
    Loocv,
    Gcv,
    /// Minimises the true loss; simulations only.
    Oracle,
    /// λ, threshold, or iteration count given directly.
    Fixed { value: f64 },
}

impl Selection {
    pub fn name(&self) -> &'static str {
        match self {
            Selection::None => "none",
            Selection::Loocv => "loocv",
            Selection::Gcv => "gcv",
            Selection::Oracle => "oracle",
            Selection::Fixed { .. } => "fixed",
        }
    }
}

/// An estimator family with its parameter selection rule and candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub family: Family,
    pub selection: Selection,
    /// Candidate λ (or thresholds) for LOOCV and oracle selection.
    pub lambda_grid: Vec<f64>,
    /// Largest iteration count considered for Landweber and the ν-method.
    pub t_max: usize,
}

impl EstimatorConfig {
    pub fn new(family: Family, selection: Selection) -> Self {
        let t_max = match family {
            Family::Nu { .. } => 50,
            _ => 200,
        };
        EstimatorConfig {
            family,
            selection,
            lambda_grid: default_lambda_grid(),
            t_max,
        }
    }

    /// The family with its default selection rule.
    pub fn default_for(family: Family) -> Self {
        Self::new(family, family.default_selection())
    }

    /// Identifier used in reports, e.g. `tikhonov-loocv`.
    pub fn label(&self) -> String {
        match self.selection {
            Selection::None => self.family.name().to_string(),
            s => format!("{}-{}", self.family.name(), s.name()),
        }
    }
}

/// Weights chosen for one sample, with the selection trace when a
/// parameter was selected.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub weights: WeightVector,
    pub selection: Option<SelectionResult>,
}

fn fixed_spec(family: Family, value: f64, kappa_sq: f64) -> Result<FilterSpec> {
    let iters = || {
        if value >= 1.0 && value.fract() == 0.0 {
            Ok(value as usize)
        } else {
            Err(KmseError::Config(format!("iteration count must be a positive integer, got {value}")))
        }
    };
    Ok(match family {
        Family::Kme => return Err(KmseError::Config("kme has no shrinkage parameter".into())),
        Family::Landweber => FilterSpec::landweber(iters()?, kappa_sq),
        Family::Nu { nu } => FilterSpec::nu_method(iters()?, nu, kappa_sq),
        other => other.lambda_family().expect("lambda family").with_lambda(value),
    })
}

/// Fits `config` on one sample. `oracle` maps weights to their true loss
/// and is required for oracle selection.
pub fn fit_estimator(
    config: &EstimatorConfig,
    gram: &GramMatrix,
    oracle: Option<&(dyn Fn(&DVector<f64>) -> f64 + Sync)>,
) -> Result<Fitted> {
    let kbar = normalize_gram(gram);
    let kappa_sq = gram.kernel().kappa_sq();
    let family = config.family;
    if family == Family::Kme {
        return Ok(Fitted {
            weights: empirical_kme_weights(gram.n())?,
            selection: None,
        });
    }
    let selection = match config.selection {
        Selection::None => {
            return Err(KmseError::Config(format!("{} needs a selection rule", family.name())));
        }
        Selection::Fixed { value } => {
            let spec = fixed_spec(family, value, kappa_sq)?;
            return Ok(Fitted {
                weights: fit_weights(&kbar, &spec)?,
                selection: None,
            });
        }
        Selection::Gcv => {
            if family != Family::Tsvd {
                return Err(KmseError::Config(format!("GCV applies to tsvd only, not {}", family.name())));
            }
            gcv_select_tsvd(&kbar)?
        }
        Selection::Loocv => match (family.iterative(), family.lambda_family()) {
            (Some(algo), _) => select_iterations_on_gram(gram, algo, config.t_max)?,
            (None, Some(lf)) => select_lambda_on_gram(gram, lf, &config.lambda_grid)?,
            _ => unreachable!("every family with a parameter is iterative or λ-indexed"),
        },
        Selection::Oracle => {
            let oracle =
                oracle.ok_or_else(|| KmseError::Config("oracle selection needs the true distribution".into()))?;
            oracle_select(config, &kbar, oracle)?
        }
    };
    Ok(Fitted {
        weights: fit_weights(&kbar, &selection.chosen)?,
        selection: Some(selection),
    })
}

fn oracle_select(
    config: &EstimatorConfig,
    kbar: &crate::kernels::NormalizedGram,
    oracle: &(dyn Fn(&DVector<f64>) -> f64 + Sync),
) -> Result<SelectionResult> {
    let kappa_sq = kbar.kappa_sq();
    let (params, specs, scores): (Vec<f64>, Vec<FilterSpec>, Vec<f64>) = match config.family {
        Family::Landweber | Family::Nu { .. } => {
            let mut scores = Vec::with_capacity(config.t_max);
            let visit = |_: usize, b: &DVector<f64>| scores.push(oracle(b));
            let specs: Vec<FilterSpec> = match config.family {
                Family::Nu { nu } => {
                    nu_method_path(kbar, config.t_max, nu, 1.0 / kappa_sq, visit)?;
                    (1..=config.t_max).map(|t| FilterSpec::nu_method(t, nu, kappa_sq)).collect()
                }
                _ => {
                    landweber_path(kbar, config.t_max, 1.0 / kappa_sq, visit)?;
                    (1..=config.t_max).map(|t| FilterSpec::landweber(t, kappa_sq)).collect()
                }
            };
            ((1..=config.t_max).map(|t| t as f64).collect(), specs, scores)
        }
        Family::Tsvd => {
            // every distinct retained set is one threshold γ_m > 0
            let eig = kbar.spectrum()?;
            let thresholds: Vec<f64> = eig.eigenvalues.iter().copied().filter(|&g| g > 0.0).collect();
            let specs: Vec<FilterSpec> = thresholds.iter().map(|&t| FilterSpec::Tsvd { threshold: t }).collect();
            let scores = specs
                .iter()
                .map(|s| Ok(oracle(&spectral_weights(kbar, s)?.weights)))
                .collect::<Result<Vec<_>>>()?;
            ((1..=thresholds.len()).map(|m| m as f64).collect(), specs, scores)
        }
        family => {
            let lf = family.lambda_family().expect("lambda family");
            let specs: Vec<FilterSpec> = config.lambda_grid.iter().map(|&l| lf.with_lambda(l)).collect();
            let scores = specs
                .iter()
                .map(|s| Ok(oracle(&fit_weights(kbar, s)?.weights)))
                .collect::<Result<Vec<_>>>()?;
            (config.lambda_grid.clone(), specs, scores)
        }
    };
    let best = argmin_first(&scores).ok_or_else(|| KmseError::Config("no oracle candidates".into()))?;
    Ok(SelectionResult {
        chosen: specs[best],
        score_path: params.into_iter().zip(scores).collect(),
        score_kind: ScoreKind::Oracle,
    })
}

/// Settings of a synthetic risk experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub n: usize,
    pub d: usize,
    pub replications: usize,
    pub seed: u64,
    pub bandwidth: BandwidthRule,
    /// Draw fresh mixture parameters in every replication instead of once
    /// per experiment.
    pub redraw_params: bool,
}

impl BenchmarkConfig {
    pub fn new(n: usize, d: usize, replications: usize, seed: u64) -> Self {
        BenchmarkConfig {
            n,
            d,
            replications,
            seed,
            bandwidth: BandwidthRule::Median,
            redraw_params: false,
        }
    }
}

/// Everything needed to score estimators on one simulated sample.
pub struct Replication {
    pub params: MixtureParams,
    pub sample: Dataset,
    pub gram: GramMatrix,
    pub embedding: MixtureEmbedding,
    z: DVector<f64>,
}

impl Replication {
    /// True loss of weights on this sample.
    pub fn loss(&self, beta: &DVector<f64>) -> f64 {
        self.embedding.loss_from_parts(self.gram.raw(), &self.z, beta)
    }
}

/// Draws replication `index` of the experiment. Replications depend only on
/// `(seed, index)`, never on the order they are run in.
pub fn draw_replication(cfg: &BenchmarkConfig, shared: Option<&MixtureParams>, index: usize) -> Result<Replication> {
    let mut rng = RngStream::new(cfg.seed, index as u64).rng();
    let params = match shared {
        Some(p) if !cfg.redraw_params => p.clone(),
        _ => draw_mixture_params(cfg.d, &mut rng)?,
    };
    let sample = sample_mixture(&params, cfg.n, &mut rng)?;
    let kernel = cfg.bandwidth.resolve(&sample)?;
    let gram = gram_matrix(&sample, &kernel)?;
    let sigma_sq = kernel.bandwidth_sq().expect("RBF kernel");
    let embedding = MixtureEmbedding::new(&params, sigma_sq)?;
    let z = embedding.inner_vector(&sample)?;
    Ok(Replication {
        params,
        sample,
        gram,
        embedding,
        z,
    })
}

/// Mixture parameters shared by all replications of an experiment.
pub fn experiment_params(cfg: &BenchmarkConfig) -> Result<MixtureParams> {
    draw_mixture_params(cfg.d, &mut RngStream::new(cfg.seed, PARAMS_STREAM).rng())
}

/// Echo of the settings behind a risk estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfigEcho {
    pub n: usize,
    pub d: usize,
    pub kernel: String,
    pub bandwidth: BandwidthRule,
    pub selection: Selection,
    pub seed: u64,
    pub redraw_params: bool,
}

/// Mean loss over replications and its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub estimator_id: String,
    pub mean_loss: f64,
    pub stderr: f64,
    pub replications: usize,
    pub config: RiskConfigEcho,
}

/// Per-replication losses of several estimators on common samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub reports: Vec<RiskReport>,
    /// `losses[e][r]`: estimator `e` on replication `r`.
    pub losses: Vec<Vec<f64>>,
}

/// Sample mean and standard error `sd/√m`.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Runs every estimator on the same `m` simulated samples. Replications run
/// in parallel; losses are gathered in replication order.
pub fn run_benchmark(estimators: &[EstimatorConfig], cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    if cfg.replications < 2 {
        return Err(KmseError::Config(format!(
            "risk estimation needs at least 2 replications, got {}",
            cfg.replications
        )));
    }
    if cfg.n == 0 || cfg.d == 0 {
        return Err(KmseError::Config("n and d must be positive".into()));
    }
    let shared = experiment_params(cfg)?;
    let per_rep: Vec<Vec<f64>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<Vec<f64>> {
                let rep = draw_replication(cfg, Some(&shared), r)?;
                let oracle = |b: &DVector<f64>| rep.loss(b);
                estimators
                    .iter()
                    .map(|e| Ok(rep.loss(&fit_estimator(e, &rep.gram, Some(&oracle))?.weights.weights)))
                    .collect()
            };
            run().map_err(|e| KmseError::Replication {
                index: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let losses: Vec<Vec<f64>> = (0..estimators.len())
        .map(|e| per_rep.iter().map(|row| row[e]).collect())
        .collect();
    let reports = estimators
        .iter()
        .zip(&losses)
        .map(|(e, l)| {
            let (mean_loss, stderr) = mean_and_stderr(l);
            RiskReport {
                estimator_id: e.label(),
                mean_loss,
                stderr,
                replications: cfg.replications,
                config: RiskConfigEcho {
                    n: cfg.n,
                    d: cfg.d,
                    kernel: "rbf".into(),
                    bandwidth: cfg.bandwidth,
                    selection: e.selection,
                    seed: cfg.seed,
                    redraw_params: cfg.redraw_params,
                },
            }
        })
        .collect();
    Ok(BenchmarkOutcome { reports, losses })
}

/// Risk of a single estimator.
pub fn risk_estimate(estimator: &EstimatorConfig, cfg: &BenchmarkConfig) -> Result<RiskReport> {
    Ok(run_benchmark(std::slice::from_ref(estimator), cfg)?.reports.remove(0))
}

/// `100·(R − R_λ)/R`.
pub fn improvement_percent(baseline_risk: f64, risk: f64) -> f64 {
    100.0 * (baseline_risk - risk) / baseline_risk
}

/// Paired comparison of an estimator against a baseline on common samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub improvement_percent: f64,
    /// Mean of `baseline_r − other_r`.
    pub mean_difference: f64,
    pub stderr_difference: f64,
}

impl PairedComparison {
    pub fn new(baseline: &[f64], other: &[f64]) -> Self {
        let diffs: Vec<f64> = baseline.iter().zip(other).map(|(b, o)| b - o).collect();
        let (mean_difference, stderr_difference) = mean_and_stderr(&diffs);
        let (rb, _) = mean_and_stderr(baseline);
        let (ro, _) = mean_and_stderr(other);
        PairedComparison {
            improvement_percent: improvement_percent(rb, ro),
            mean_difference,
            stderr_difference,
        }
    }

    /// One-sided test that the other estimator has lower risk, at `z`
    /// standard errors.
    pub fn significantly_better(&self, z: f64) -> bool {
        self.mean_difference > z * self.stderr_difference
    }
}

pub const RISK_CSV_HEADER: [&str; 7] = ["estimator", "n", "d", "m", "seed", "mean_loss", "stderr"];

/// Writes reports as CSV with a header row.
pub fn write_risk_csv<W: Write>(out: W, reports: &[RiskReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| KmseError::Io(std::io::Error::other(e));
    w.write_record(RISK_CSV_HEADER).map_err(io)?;
    for r in reports {
        w.write_record([
            r.estimator_id.clone(),
            r.config.n.to_string(),
            r.config.d.to_string(),
            r.replications.to_string(),
            r.config.seed.to_string(),
            format!("{:e}", r.mean_loss),
            format!("{:e}", r.stderr),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
