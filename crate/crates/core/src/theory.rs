//! Closed-form risk expressions for uniform and component-wise shrinkage,
//! numerical checks that the iterative, spectral and operator forms of the
//! estimators agree, and the `λ = c·n^{−b}` rate experiment.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::estimators::{fit_weights, spectral_weights};
use crate::filters::{shrinkage_factor, FilterSpec};
use crate::kernels::{gram_matrix, normalize_gram, KernelSpec, NormalizedGram};
use crate::linalg::{sym_eigendecompose, SymMatrix};
use crate::risk::{mean_and_stderr, MixtureEmbedding};
use crate::synthetic::{draw_mixture_params, sample_mixture, RngStream, PARAMS_STREAM};

// a·b as an unevaluated sum hi + lo.
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let hi = a * b;
    (hi, a.mul_add(b, -hi))
}

/// Risk of `μ̂/(1+λ)` with `λ = c·n^{−b}` minus the risk of the empirical
/// mean:
/// `[(nc² + c² + 2cn^b)‖μ‖² − (c² + 2cn^b)∫k(x,x)dP] / [n(n^b + c)²]`.
///
/// The numerator is evaluated as `nc²‖μ‖² − (c² + 2cn^b)(∫k − ‖μ‖²)` with
/// error-free products, so its sign is reliable near the boundary.
pub fn skmse_risk_difference_exact(c: f64, b: f64, n: f64, mu_norm_sq: f64, k_diag_mean: f64) -> Result<f64> {
    if !(c > 0.0 && b > 0.0 && n > 0.0) || ![c, b, n, mu_norm_sq, k_diag_mean].iter().all(|v| v.is_finite()) {
        return Err(KmseError::Input(format!("need finite c > 0, b > 0, n > 0 (got c={c}, b={b}, n={n})")));
    }
    if !(0.0 <= mu_norm_sq && mu_norm_sq <= k_diag_mean) {
        return Err(KmseError::Input(format!(
            "need 0 <= ||mu||^2 <= E k(x,x), got {mu_norm_sq} and {k_diag_mean}"
        )));
    }
    let nb = n.powf(b);
    let s = c * c + 2.0 * c * nb;
    let (p1, e1) = two_product(n * c * c, mu_norm_sq);
    let (p2, e2) = two_product(s, k_diag_mean - mu_norm_sq);
    let numerator = (p1 - p2) + (e1 - e2);
    let denom = n * (nb + c) * (nb + c);
    Ok(numerator / denom)
}

/// `A = 2^{1/b}b / (2^{1/b}b + c^{1/b}(b−1)^{(b−1)/b})`, the infimum over
/// `n > 0` of `(c² + 2cn^b)/(nc² + c² + 2cn^b)`. Uniform shrinkage with
/// `λ = c·n^{−b}` beats the empirical mean whenever `‖μ‖²/∫k(x,x)dP < A`.
pub fn theorem1_admissibility_bound(c: f64, b: f64) -> Result<f64> {
    if !(b > 1.0 && b.is_finite()) {
        return Err(KmseError::Input(format!("b must exceed 1, got {b}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(KmseError::Input(format!("c must be positive, got {c}")));
    }
    let head = 2f64.powf(1.0 / b) * b;
    Ok(head / (head + c.powf(1.0 / b) * (b - 1.0).powf((b - 1.0) / b)))
}

/// The ratio `(c² + 2cn^b)/(nc² + c² + 2cn^b)` whose infimum over `n` is `A`.
pub fn admissibility_ratio(c: f64, b: f64, n: f64) -> f64 {
    let s = c * c + 2.0 * c * n.powf(b);
    s / (n * c * c + s)
}

/// Change in risk of one Fourier component when shrunk by `α` towards `f*`:
/// `α²(Δ + (f*−μ)²) − 2αΔ`. Evaluated in the factored form
/// `α·S·(α − 2Δ/S)` so the roots `0` and `2Δ/S` are exact.
pub fn component_risk_difference(alpha: f64, delta: f64, f_star: f64, mu: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(KmseError::Input(format!("component variance must be positive, got {delta}")));
    }
    let s = delta + (f_star - mu) * (f_star - mu);
    Ok(alpha * s * (alpha - component_shrinkage_bound(delta, f_star, mu)))
}

/// `2Δ/(Δ + (f*−μ)²)`: shrinking by any `α` in `(0, bound)` lowers the risk.
pub fn component_shrinkage_bound(delta: f64, f_star: f64, mu: f64) -> f64 {
    2.0 * delta / (delta + (f_star - mu) * (f_star - mu))
}

/// Largest coefficient difference between the iterative and spectral
/// computations of the same filter.
pub fn verify_spectral_equivalence(kbar: &NormalizedGram, spec: &FilterSpec) -> Result<f64> {
    let iterative = fit_weights(kbar, spec)?;
    let spectral = spectral_weights(kbar, spec)?;
    Ok((iterative.weights - spectral.weights).amax())
}

/// Largest pointwise difference, over the sample, between the
/// feature-space estimate `C̃g(C̃)μ̂` (with `C̃ = XᵀX/n`, a `d × d` matrix)
/// and the Gram-side estimate `Σβⱼ⟨xⱼ, ·⟩`, for a linear kernel and any
/// filter.
pub fn operator_equivalence_gap(points: &Dataset, kernel: &KernelSpec, spec: &FilterSpec) -> Result<f64> {
    if !matches!(kernel, KernelSpec::Linear { .. }) {
        return Err(KmseError::Unsupported(
            "operator equivalence is checked in feature space, which needs the linear kernel".into(),
        ));
    }
    let (n, d) = (points.n(), points.dim());
    if n == 0 {
        return Err(KmseError::Input("empty dataset".into()));
    }
    let x = DMatrix::from_row_slice(n, d, &points.rows().flatten().copied().collect::<Vec<_>>());
    let cov = SymMatrix::new(x.tr_mul(&x) / n as f64)?;
    let mean = DVector::from_vec(points.column_means());
    let eig = sym_eigendecompose(&cov)?.clamp_nonnegative();
    spec.validate(kernel.kappa_sq())?;
    let mut coeffs = eig.eigenvectors.tr_mul(&mean);
    for (cf, &g) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *cf *= shrinkage_factor(spec, g)?;
    }
    let w = &eig.eigenvectors * coeffs;
    let operator_side = &x * w;

    let gram = gram_matrix(points, kernel)?;
    let beta = spectral_weights(&normalize_gram(&gram), spec)?;
    let gram_side = gram.raw().mul_vec(&beta.weights);
    Ok((operator_side - gram_side).amax())
}

/// [`operator_equivalence_gap`] for Tikhonov regularisation with parameter
/// `lambda` and the linear kernel sized to the data.
pub fn verify_operator_equivalence(points: &Dataset, lambda: f64) -> Result<f64> {
    operator_equivalence_gap(points, &KernelSpec::linear_for(points), &FilterSpec::Tikhonov { lambda })
}

/// Distribution and risk computation behind a rate experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RateSource {
    /// Linear kernel with `P = N(mean, I)`; risks are exact.
    LinearGaussian { mean: Vec<f64> },
    /// RBF kernel on the synthetic benchmark mixture; risks by simulation.
    RbfMixture {
        d: usize,
        bandwidth_sq: f64,
        replications: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExperimentConfig {
    pub c: f64,
    /// Decay exponent in `λ = c·n^{−b}`.
    pub b: f64,
    pub n_grid: Vec<usize>,
    pub source: RateSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub lambda: f64,
    pub risk: f64,
    pub stderr: f64,
    pub kme_risk: f64,
    pub kme_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub config: RateExperimentConfig,
    pub points: Vec<RatePoint>,
    /// Least-squares slope of log risk against log n.
    pub slope: f64,
    pub kme_slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Risk of `μ̂/(1+λ)` and of `μ̂` at `λ = c·n^{−b}` for every grid size.
pub fn rate_experiment(config: &RateExperimentConfig) -> Result<RateReport> {
    let grid = &config.n_grid;
    if grid.len() < 3 {
        return Err(KmseError::Config(format!("rate experiment needs at least 3 sample sizes, got {}", grid.len())));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KmseError::Config("sample sizes must be positive and strictly increasing".into()));
    }
    if !(config.c > 0.0 && config.b > 0.0) {
        return Err(KmseError::Config(format!("need c > 0 and b > 0, got c={} b={}", config.c, config.b)));
    }
    let lambda_at = |n: usize| config.c * (n as f64).powf(-config.b);
    let points: Vec<RatePoint> = match &config.source {
        RateSource::LinearGaussian { mean } => {
            if mean.is_empty() {
                return Err(KmseError::Config("mean must have at least one coordinate".into()));
            }
            let mu_sq: f64 = mean.iter().map(|m| m * m).sum();
            let k_diag = mu_sq + mean.len() as f64;
            grid.iter()
                .map(|&n| {
                    let nf = n as f64;
                    let delta = (k_diag - mu_sq) / nf;
                    let nb = nf.powf(config.b);
                    let keep = nb / (nb + config.c);
                    let shrink = config.c / (nb + config.c);
                    RatePoint {
                        n,
                        lambda: lambda_at(n),
                        risk: keep * keep * delta + shrink * shrink * mu_sq,
                        stderr: 0.0,
                        kme_risk: delta,
                        kme_stderr: 0.0,
                    }
                })
                .collect()
        }
        RateSource::RbfMixture { d, bandwidth_sq, replications, seed } => {
            if *replications < 2 {
                return Err(KmseError::Config("need at least 2 replications".into()));
            }
            let params = draw_mixture_params(*d, &mut RngStream::new(*seed, PARAMS_STREAM).rng())?;
            let emb = MixtureEmbedding::new(&params, *bandwidth_sq)?;
            let spec = KernelSpec::gaussian(*bandwidth_sq)?;
            grid.iter()
                .enumerate()
                .map(|(gi, &n)| {
                    let lambda = lambda_at(n);
                    let pairs: Vec<(f64, f64)> = (0..*replications)
                        .into_par_iter()
                        .map(|r| {
                            // distinct streams per (grid point, replication)
                            let stream = (gi as u64) << 32 | r as u64;
                            let mut rng = RngStream::new(*seed, stream).rng();
                            let x = sample_mixture(&params, n, &mut rng)?;
                            let mut quad = 0.0;
                            for i in 0..n {
                                for j in 0..n {
                                    quad += spec.eval_unchecked(x.row(i), x.row(j));
                                }
                            }
                            let quad = quad / (n * n) as f64;
                            let lin = emb.inner_vector(&x)?.sum() / n as f64;
                            let norm = emb.mean_sq_norm();
                            let f = 1.0 / (1.0 + lambda);
                            Ok((f * f * quad - 2.0 * f * lin + norm, quad - 2.0 * lin + norm))
                        })
                        .collect::<Result<_>>()?;
                    let (shrunk, kme): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                    let (risk, stderr) = mean_and_stderr(&shrunk);
                    let (kme_risk, kme_stderr) = mean_and_stderr(&kme);
                    Ok(RatePoint { n, lambda, risk, stderr, kme_risk, kme_stderr })
                })
                .collect::<Result<_>>()?
        }
    };
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let slope = log_log_slope(&ns, &points.iter().map(|p| p.risk).collect::<Vec<_>>());
    let kme_slope = log_log_slope(&ns, &points.iter().map(|p| p.kme_risk).collect::<Vec<_>>());
    Ok(RateReport {
        config: config.clone(),
        points,
        slope,
        kme_slope,
    })
}

/// Random symmetric PSD matrix with spectrum inside `[0, 1]`, wrapped as a
/// normalised Gram matrix with `κ² = 1`.
pub fn random_normalized_gram(n: usize, rng: &mut impl Rng) -> Result<NormalizedGram> {
    let rank = rng.gen_range(1..=n);
    let g = DMatrix::<f64>::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
    let m = &g * g.transpose();
    // the trace bounds the largest eigenvalue
    let scale = rng.gen_range(0.2..1.0) / m.trace().max(f64::MIN_POSITIVE);
    NormalizedGram::from_normalized(SymMatrix::new(m * scale)?, 1.0)
}

/// Outcome of one named verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub check: String,
    pub pass: bool,
    pub metric: f64,
    pub threshold: f64,
}

impl CheckVerdict {
    fn at_most(check: &str, metric: f64, threshold: f64) -> Self {
        CheckVerdict {
            check: check.into(),
            pass: metric <= threshold,
            metric,
            threshold,
        }
    }
}

pub const CHECK_NAMES: [&str; 5] = ["prop1", "prop2", "thm1", "thm2", "rates"];

/// Iterative versus spectral weights for Landweber (`t ≤ 50`), the ν-method
/// (`t ≤ 20`) and iterated Tikhonov (`t = 3`) on `matrices` random `n × n`
/// normalised Gram matrices. Metric: worst max-abs difference.
pub fn check_spectral_equivalence(matrices: usize, n: usize, seed: u64) -> Result<CheckVerdict> {
    let worst = (0..matrices)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let kbar = random_normalized_gram(n, &mut rng)?;
            let lambda = 10f64.powf(rng.gen_range(-4.0..0.0));
            let specs = [
                FilterSpec::landweber(rng.gen_range(1..=50), 1.0),
                FilterSpec::nu_method(rng.gen_range(1..=20), 1.0, 1.0),
                FilterSpec::IteratedTikhonov { iters: 3, lambda },
            ];
            specs.iter().try_fold(0.0_f64, |acc, s| Ok(acc.max(verify_spectral_equivalence(&kbar, s)?)))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckVerdict::at_most("prop1", worst, 1e-8))
}

/// Feature-space versus Gram-side estimates for the linear kernel with
/// `d = 5`, `n = 40`, `λ ∈ {0.1, 1}` over `seeds` datasets.
pub fn check_operator_equivalence(seeds: u64, seed: u64) -> Result<CheckVerdict> {
    let mut worst = 0.0_f64;
    for k in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        let vals: Vec<f64> = (0..40 * 5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ds = Dataset::from_flat(40, 5, vals)?;
        for lambda in [0.1, 1.0] {
            worst = worst.max(verify_operator_equivalence(&ds, lambda)?);
        }
    }
    Ok(CheckVerdict::at_most("prop2", worst, 1e-8))
}

/// Brute-force infimum over real `n > 0` of [`admissibility_ratio`]: a
/// log-spaced scan followed by golden-section refinement around the best
/// scan point.
pub fn brute_force_admissibility_infimum(c: f64, b: f64) -> f64 {
    let f = |ln_n: f64| admissibility_ratio(c, b, ln_n.exp());
    let (lo, hi, steps) = (-40.0_f64, 40.0_f64, 200_000);
    let h = (hi - lo) / steps as f64;
    let mut best = (lo, f(lo));
    for i in 1..=steps {
        let x = lo + h * i as f64;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut z) = (best.0 - h, best.0 + h);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = z - phi * (z - a);
        let x2 = a + phi * (z - a);
        if f(x1) < f(x2) {
            z = x2;
        } else {
            a = x1;
        }
    }
    best.1.min(f(0.5 * (a + z)))
}

/// Sign agreement of the exact risk difference with the admissibility
/// inequality on `tuples` random inputs, plus the bound `A` against its
/// brute-force infimum. Metric: number of mismatches plus the worst
/// infimum gap.
pub fn check_theorem1(tuples: usize, seed: u64) -> Result<CheckVerdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0usize;
    for _ in 0..tuples {
        let c = 10f64.powf(rng.gen_range(-3.0..2.0));
        let b = rng.gen_range(1.05..4.0);
        let n = rng.gen_range(1..10_000) as f64;
        let k = rng.gen_range(0.1..5.0);
        let mu = k * rng.gen::<f64>();
        let diff = skmse_risk_difference_exact(c, b, n, mu, k)?;
        let predicted_better = mu / k < admissibility_ratio(c, b, n);
        if (diff < 0.0) != predicted_better {
            mismatches += 1;
        }
    }
    let mut gap = 0.0_f64;
    for c in [0.01, 0.1, 1.0, 10.0] {
        for b in [1.5, 2.0, 3.0, 5.0] {
            let a = theorem1_admissibility_bound(c, b)?;
            gap = gap.max((a - brute_force_admissibility_infimum(c, b)).abs());
        }
    }
    let mut v = CheckVerdict::at_most("thm1", mismatches as f64 + gap, 1e-6);
    v.pass = mismatches == 0 && gap <= 1e-6;
    Ok(v)
}

/// Sign of the component risk change inside and outside `[0, 2Δ/S]` on
/// `tuples` random inputs. Metric: number of sign violations.
pub fn check_theorem2(tuples: usize, seed: u64) -> Result<CheckVerdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..tuples {
        let delta = 10f64.powf(rng.gen_range(-3.0..1.0));
        let f_star = rng.gen_range(-3.0..3.0);
        let mu = rng.gen_range(-3.0..3.0);
        let bound = component_shrinkage_bound(delta, f_star, mu);
        let alpha = rng.gen_range(-1.0..(2.0 * bound + 1.0));
        let value = component_risk_difference(alpha, delta, f_star, mu)?;
        let inside = (0.0..=bound).contains(&alpha);
        let ok = if inside { value <= 0.0 } else { value > 0.0 };
        for edge in [0.0, bound] {
            if component_risk_difference(edge, delta, f_star, mu)? > 0.0 {
                violations += 1;
            }
        }
        if !ok {
            violations += 1;
        }
    }
    Ok(CheckVerdict::at_most("thm2", violations as f64, 0.0))
}

/// Exact-risk slope for the linear kernel, `b = 1`, `c = 1`, over
/// `n ∈ {10³, 10⁴, 10⁵}`. Metric: distance of the slope from −1.
pub fn check_rates() -> Result<CheckVerdict> {
    let report = rate_experiment(&RateExperimentConfig {
        c: 1.0,
        b: 1.0,
        n_grid: vec![1_000, 10_000, 100_000],
        source: RateSource::LinearGaussian { mean: vec![1.0, -0.5, 0.25] },
    })?;
    Ok(CheckVerdict::at_most("rates", (report.slope + 1.0).abs(), 0.05))
}

/// Runs a named check with the default sizes used by the command line.
pub fn run_check(name: &str, seed: u64) -> Result<CheckVerdict> {
    match name {
        "prop1" => check_spectral_equivalence(100, 30, seed),
        "prop2" => check_operator_equivalence(20, seed),
        "thm1" => check_theorem1(10_000, seed),
        "thm2" => check_theorem2(10_000, seed),
        "rates" => check_rates(),
        other => Err(KmseError::Config(format!(
            "unknown check '{other}', expected one of {}",
            CHECK_NAMES.join(", ")
        ))),
    }
}
