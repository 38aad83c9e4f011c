//! Density estimation by kernel mean matching.
//!
//! An isotropic Gaussian mixture `Q = Σ πⱼ N(θⱼ, σⱼ²I)` is fitted so that its
//! kernel mean is close, in RKHS norm, to a weighted sample embedding
//! `Σ βᵢ k(xᵢ, ·)`. Under the RBF kernel with bandwidth `σ²`,
//! `⟨N(θ, vI), k(x, ·)⟩ = (σ²/(v+σ²))^{d/2} exp(−‖x−θ‖²/(2(v+σ²)))`, so the
//! objective and its gradient are available in closed form.

use nalgebra::DVector;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::kernels::{gram_matrix, median_heuristic_bandwidth, KernelSpec};
use crate::risk::{fit_estimator, EstimatorConfig};
use crate::synthetic::RngStream;

/// Smallest component variance; keeps kernel means from collapsing onto points.
pub const VARIANCE_FLOOR: f64 = 1e-6;
/// Smallest mixing weight produced by [`kmeans_init`] before renormalising.
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// `Σ πⱼ N(θⱼ, σⱼ² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let r = weights.len();
        if r == 0 || means.len() != r || variances.len() != r {
            return Err(KmseError::Input("mixture needs matching, nonempty component lists".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(KmseError::Input("component means must share a positive dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(KmseError::Input("mixture weights must lie on the simplex".into()));
        }
        if variances.iter().any(|v| !(*v >= VARIANCE_FLOOR && v.is_finite())) {
            return Err(KmseError::Input(format!("component variances must be at least {VARIANCE_FLOOR}")));
        }
        Ok(MixtureModel {
            weights,
            means,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Coordinates used by the optimiser: softmax logits, means, then
    /// `s` with `σ² = 1e−6 + exp(s)`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.components() * (self.dim() + 2));
        p.extend(self.weights.iter().map(|w| w.max(f64::MIN_POSITIVE).ln()));
        for m in &self.means {
            p.extend_from_slice(m);
        }
        p.extend(self.variances.iter().map(|v| (v - VARIANCE_FLOOR).max(1e-300).ln()));
        p
    }

    pub fn from_unconstrained(r: usize, d: usize, p: &[f64]) -> Result<Self> {
        if r == 0 || d == 0 || p.len() != r * (d + 2) {
            return Err(KmseError::DimensionMismatch {
                expected: r * (d + 2),
                found: p.len(),
            });
        }
        let logits = &p[..r];
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|a| (a - top).exp()).collect();
        let total: f64 = exps.iter().sum();
        let weights = exps.iter().map(|e| e / total).collect();
        let means = p[r..r + r * d].chunks_exact(d).map(<[f64]>::to_vec).collect();
        let variances = p[r + r * d..].iter().map(|s| VARIANCE_FLOOR + s.exp()).collect();
        Ok(MixtureModel {
            weights,
            means,
            variances,
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_plus_plus(data: &Dataset, r: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = data.n();
    let mut centroids = vec![data.row(rng.gen_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = data.rows().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < r {
        let next = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // every point already coincides with a centroid
            Err(_) => rng.gen_range(0..n),
        };
        let c = data.row(next).to_vec();
        for (d, x) in dist.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(data: &Dataset, mut centroids: Vec<Vec<f64>>, max_iters: usize) -> KMeans {
    let (n, d, r) = (data.n(), data.dim(), centroids.len());
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, x) in data.rows().enumerate() {
            let (j, _) = nearest(x, &centroids);
            if assignments[i] != j {
                assignments[i] = j;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; r];
        let mut counts = vec![0usize; r];
        for (i, x) in data.rows().enumerate() {
            counts[assignments[i]] += 1;
            for (s, v) in sums[assignments[i]].iter_mut().zip(x) {
                *s += v;
            }
        }
        for j in 0..r {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
                continue;
            }
            // empty cluster: move to the point worst served by its centroid
            let far = (0..n)
                .map(|i| (i, sq_dist(data.row(i), &centroids[assignments[i]])))
                .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
                .0;
            centroids[j] = data.row(far).to_vec();
            assignments[far] = j;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    for (i, x) in data.rows().enumerate() {
        assignments[i] = nearest(x, &centroids).0;
    }
    let wcss = data.rows().zip(&assignments).map(|(x, &j)| sq_dist(x, &centroids[j])).sum();
    KMeans {
        centroids,
        assignments,
        wcss,
    }
}

/// Best of `restarts` k-means++ seeded runs of Lloyd's algorithm, by WCSS.
pub fn kmeans(data: &Dataset, r: usize, restarts: usize, rng: &mut impl Rng) -> Result<KMeans> {
    if r == 0 || restarts == 0 {
        return Err(KmseError::Config("k-means needs at least one cluster and one restart".into()));
    }
    if data.n() < r {
        return Err(KmseError::Input(format!("{} points cannot form {r} clusters", data.n())));
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts {
        let run = lloyd(data, kmeans_plus_plus(data, r, rng), 300);
        if best.as_ref().map_or(true, |b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Mixture built from the best k-means clustering: centroids as means,
/// cluster fractions as weights, and the per-dimension within-cluster
/// spread as variances.
pub fn kmeans_init(data: &Dataset, r: usize, restarts: usize, rng: &mut impl Rng) -> Result<MixtureModel> {
    let km = kmeans(data, r, restarts, rng)?;
    let n = data.n() as f64;
    let d = data.dim() as f64;
    let mut counts = vec![0usize; r];
    let mut spread = vec![0.0; r];
    for (x, &j) in data.rows().zip(&km.assignments) {
        counts[j] += 1;
        spread[j] += sq_dist(x, &km.centroids[j]);
    }
    let raw: Vec<f64> = counts.iter().map(|&c| (c as f64 / n).max(WEIGHT_FLOOR)).collect();
    let total: f64 = raw.iter().sum();
    let variances = spread
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { VARIANCE_FLOOR } else { (s / (c as f64 * d)).max(VARIANCE_FLOOR) })
        .collect();
    MixtureModel::new(raw.iter().map(|w| w / total).collect(), km.centroids, variances)
}

/// Closed-form pieces of the matching objective for one model.
struct Terms {
    // cross[i][j] = ⟨N(θⱼ, vⱼI), k(xᵢ, ·)⟩
    cross: Vec<Vec<f64>>,
    // self_inner[j][l] = ⟨N(θⱼ, vⱼI), N(θ_l, v_l I)⟩ in the RKHS
    self_inner: Vec<Vec<f64>>,
}

fn smoothed(dist_sq: f64, spread: f64, sigma_sq: f64, d: usize) -> f64 {
    let t = spread + sigma_sq;
    (0.5 * d as f64 * (sigma_sq / t).ln() - dist_sq / (2.0 * t)).exp()
}

fn terms(model: &MixtureModel, x: &Dataset, sigma_sq: f64) -> Terms {
    let (r, d) = (model.components(), model.dim());
    let cross = x
        .rows()
        .map(|xi| {
            (0..r)
                .map(|j| smoothed(sq_dist(xi, &model.means[j]), model.variances[j], sigma_sq, d))
                .collect()
        })
        .collect();
    let self_inner = (0..r)
        .map(|j| {
            (0..r)
                .map(|l| {
                    let spread = model.variances[j] + model.variances[l];
                    smoothed(sq_dist(&model.means[j], &model.means[l]), spread, sigma_sq, d)
                })
                .collect()
        })
        .collect();
    Terms { cross, self_inner }
}

fn check_inputs(model: &MixtureModel, beta: &DVector<f64>, x: &Dataset, sigma_sq: f64) -> Result<()> {
    if x.dim() != model.dim() {
        return Err(KmseError::DimensionMismatch {
            expected: model.dim(),
            found: x.dim(),
        });
    }
    if beta.len() != x.n() {
        return Err(KmseError::DimensionMismatch {
            expected: x.n(),
            found: beta.len(),
        });
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(KmseError::Config(format!("bandwidth must be positive, got {sigma_sq}")));
    }
    Ok(())
}

fn target_norm_sq(beta: &DVector<f64>, x: &Dataset, sigma_sq: f64) -> Result<f64> {
    let k = gram_matrix(x, &KernelSpec::gaussian(sigma_sq)?)?;
    Ok(beta.dot(&(k.raw().as_matrix() * beta)))
}

fn objective_from(model: &MixtureModel, beta: &DVector<f64>, t: &Terms, target_sq: f64) -> f64 {
    let r = model.components();
    let pi = &model.weights;
    let mut q = 0.0;
    for j in 0..r {
        for l in 0..r {
            q += pi[j] * pi[l] * t.self_inner[j][l];
        }
    }
    let mut cross = 0.0;
    for (b, row) in beta.iter().zip(&t.cross) {
        cross += b * row.iter().zip(pi).map(|(e, p)| e * p).sum::<f64>();
    }
    q - 2.0 * cross + target_sq
}

/// `‖μ_Q − Σ βᵢ k(xᵢ, ·)‖²` under the RBF kernel with bandwidth `σ²`.
pub fn kmm_objective(model: &MixtureModel, beta: &DVector<f64>, x: &Dataset, sigma_sq: f64) -> Result<f64> {
    check_inputs(model, beta, x, sigma_sq)?;
    let t = terms(model, x, sigma_sq);
    Ok(objective_from(model, beta, &t, target_norm_sq(beta, x, sigma_sq)?))
}

// Objective and gradient in the coordinates of `to_unconstrained`, with the
// target norm supplied so the Gram matrix is built once per fit.
fn value_and_gradient(model: &MixtureModel, beta: &DVector<f64>, x: &Dataset, sigma_sq: f64, target_sq: f64) -> (f64, Vec<f64>) {
    let (r, d) = (model.components(), model.dim());
    let df = d as f64;
    let t = terms(model, x, sigma_sq);
    let value = objective_from(model, beta, &t, target_sq);
    let pi = &model.weights;

    // ∂J/∂πⱼ = 2 Σ_l π_l Gⱼₗ − 2 hⱼ with hⱼ = Σᵢ βᵢ Eᵢⱼ
    let mut h = vec![0.0; r];
    for (b, row) in beta.iter().zip(&t.cross) {
        for j in 0..r {
            h[j] += b * row[j];
        }
    }
    let w: Vec<f64> = (0..r)
        .map(|j| 2.0 * (0..r).map(|l| pi[l] * t.self_inner[j][l]).sum::<f64>() - 2.0 * h[j])
        .collect();
    let mean_w: f64 = pi.iter().zip(&w).map(|(p, g)| p * g).sum();

    let mut grad = vec![0.0; r * (d + 2)];
    for j in 0..r {
        grad[j] = pi[j] * (w[j] - mean_w);
        let mut g_theta = vec![0.0; d];
        let mut g_var = 0.0;
        for l in 0..r {
            let tau = model.variances[j] + model.variances[l] + sigma_sq;
            let coef = pi[l] * t.self_inner[j][l];
            let dist = sq_dist(&model.means[j], &model.means[l]);
            for (g, (a, b)) in g_theta.iter_mut().zip(model.means[j].iter().zip(&model.means[l])) {
                *g -= coef * (a - b) / tau;
            }
            g_var += coef * (-df / (2.0 * tau) + dist / (2.0 * tau * tau));
        }
        let rho = model.variances[j] + sigma_sq;
        for ((xi, row), b) in x.rows().zip(&t.cross).zip(beta.iter()) {
            let coef = b * row[j];
            for (g, (xv, m)) in g_theta.iter_mut().zip(xi.iter().zip(&model.means[j])) {
                *g -= coef * (xv - m) / rho;
            }
            g_var -= coef * (-df / (2.0 * rho) + sq_dist(xi, &model.means[j]) / (2.0 * rho * rho));
        }
        for (k, g) in g_theta.iter().enumerate() {
            grad[r + j * d + k] = 2.0 * pi[j] * g;
        }
        grad[r + r * d + j] = 2.0 * pi[j] * g_var * (model.variances[j] - VARIANCE_FLOOR);
    }
    (value, grad)
}

/// Gradient of [`kmm_objective`] with respect to the coordinates of
/// [`MixtureModel::to_unconstrained`].
pub fn kmm_gradient(model: &MixtureModel, beta: &DVector<f64>, x: &Dataset, sigma_sq: f64) -> Result<Vec<f64>> {
    check_inputs(model, beta, x, sigma_sq)?;
    Ok(value_and_gradient(model, beta, x, sigma_sq, target_norm_sq(beta, x, sigma_sq)?).1)
}

/// Optimiser settings for [`kmm_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmmConfig {
    /// Kernel bandwidth `σ²`; `None` uses the median heuristic on the data.
    pub sigma_sq: Option<f64>,
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for KmmConfig {
    fn default() -> Self {
        KmmConfig {
            sigma_sq: None,
            restarts: 50,
            max_iters: 2000,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmmFit {
    pub model: MixtureModel,
    pub sigma_sq: f64,
    pub initial_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting at the initial value.
    pub trace: Vec<f64>,
}

/// Fits an `r`-component isotropic mixture to the embedding `Σ βᵢ k(xᵢ, ·)`
/// by gradient descent with Armijo backtracking, starting from k-means.
pub fn kmm_fit(
    x: &Dataset,
    beta: &DVector<f64>,
    r: usize,
    config: &KmmConfig,
    rng: &mut impl Rng,
) -> Result<KmmFit> {
    let sigma_sq = match config.sigma_sq {
        Some(s) => s,
        None => median_heuristic_bandwidth(x)?,
    };
    let init = kmeans_init(x, r, config.restarts, rng)?;
    check_inputs(&init, beta, x, sigma_sq)?;
    let d = x.dim();
    let target_sq = target_norm_sq(beta, x, sigma_sq)?;
    let eval = |p: &[f64]| -> Result<(MixtureModel, f64, Vec<f64>)> {
        let m = MixtureModel::from_unconstrained(r, d, p)?;
        let (v, g) = value_and_gradient(&m, beta, x, sigma_sq, target_sq);
        Ok((m, v, g))
    };

    let mut p = init.to_unconstrained();
    let (mut model, mut value, mut grad) = eval(&p)?;
    if !value.is_finite() {
        return Err(KmseError::NonFinite { iteration: 0 });
    }
    let initial_objective = value;
    let mut trace = vec![value];
    let mut step = 1.0;
    let mut iterations = 0;
    for it in 1..=config.max_iters {
        let g_sq: f64 = grad.iter().map(|g| g * g).sum();
        if g_sq == 0.0 {
            break;
        }
        let mut accepted = None;
        let mut trial = step * 2.0;
        for _ in 0..60 {
            let q: Vec<f64> = p.iter().zip(&grad).map(|(a, g)| a - trial * g).collect();
            let (m, v, g) = eval(&q)?;
            if v.is_finite() && v <= value - 1e-4 * trial * g_sq {
                accepted = Some((q, m, v, g));
                break;
            }
            trial *= 0.5;
        }
        let Some((q, m, v, g)) = accepted else { break };
        if !v.is_finite() {
            return Err(KmseError::NonFinite { iteration: it });
        }
        iterations = it;
        step = trial;
        let decrease = (value - v) / value.abs().max(f64::MIN_POSITIVE);
        p = q;
        model = m;
        value = v;
        grad = g;
        trace.push(value);
        if decrease < config.rel_tol {
            break;
        }
    }
    // every accepted step decreases the objective, so the last iterate is the best
    Ok(KmmFit {
        model,
        sigma_sq,
        initial_objective,
        objective: value,
        iterations,
        trace,
    })
}

/// Average negative log-likelihood of `test` under `model`.
pub fn nll(model: &MixtureModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(KmseError::Input("negative log-likelihood needs a nonempty test set".into()));
    }
    if test.dim() != model.dim() {
        return Err(KmseError::DimensionMismatch {
            expected: model.dim(),
            found: test.dim(),
        });
    }
    let d = model.dim() as f64;
    let log_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    let mut terms = vec![0.0; model.components()];
    for x in test.rows() {
        for (j, t) in terms.iter_mut().enumerate() {
            let v = model.variances[j];
            *t = model.weights[j].ln() - 0.5 * d * (log_2pi + v.ln()) - sq_dist(x, &model.means[j]) / (2.0 * v);
        }
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        total -= top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln();
    }
    Ok(total / test.n() as f64)
}

/// Settings of one density-estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    pub dataset: String,
    pub target: EstimatorConfig,
    pub components: usize,
    pub test_frac: f64,
    pub seed: u64,
    pub kmm: KmmConfig,
}

impl DensityConfig {
    pub fn new(dataset: &str, target: EstimatorConfig, seed: u64) -> Self {
        DensityConfig {
            dataset: dataset.to_string(),
            target,
            components: 5,
            test_frac: 0.25,
            seed,
            kmm: KmmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub dataset: String,
    pub target_estimator: String,
    pub seed: u64,
    pub nll_train: f64,
    pub nll_test: f64,
    pub model: MixtureModel,
    pub sigma_sq: f64,
    pub objective: f64,
    pub iterations: usize,
    pub config: DensityConfig,
}

const SPLIT_STREAM: u64 = 0;
const KMEANS_STREAM: u64 = 1;

/// Standardises `data`, splits off a test set, fits the target embedding on
/// the training rows (bandwidth by median heuristic there) and matches a
/// mixture to it.
pub fn density_experiment(data: &Dataset, config: &DensityConfig) -> Result<DensityResult> {
    let standardized = data.standardize()?;
    let (train, test) = standardized.shuffle_split(config.test_frac, &mut RngStream::new(config.seed, SPLIT_STREAM).rng())?;
    let sigma_sq = match config.kmm.sigma_sq {
        Some(s) => s,
        None => median_heuristic_bandwidth(&train)?,
    };
    let gram = gram_matrix(&train, &KernelSpec::gaussian(sigma_sq)?)?;
    let beta = fit_estimator(&config.target, &gram, None)?.weights.weights;
    let kmm = KmmConfig {
        sigma_sq: Some(sigma_sq),
        ..config.kmm.clone()
    };
    let fit = kmm_fit(
        &train,
        &beta,
        config.components,
        &kmm,
        &mut RngStream::new(config.seed, KMEANS_STREAM).rng(),
    )?;
    Ok(DensityResult {
        dataset: config.dataset.clone(),
        target_estimator: config.target.label(),
        seed: config.seed,
        nll_train: nll(&fit.model, &train)?,
        nll_test: nll(&fit.model, &test)?,
        model: fit.model,
        sigma_sq,
        objective: fit.objective,
        iterations: fit.iterations,
        config: DensityConfig {
            kmm,
            ..config.clone()
        },
    })
}
