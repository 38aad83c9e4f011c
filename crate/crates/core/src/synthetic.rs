//! Synthetic Gaussian mixtures with Wishart covariances and seeded random
//! streams for order-independent replications.

use nalgebra::{DMatrix, DVector};
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::linalg::{sym_eigendecompose, SymMatrix};

/// Mixture weights used by the synthetic benchmark.
pub const DEFAULT_WEIGHTS: [f64; 4] = [0.05, 0.3, 0.4, 0.25];
pub const DEFAULT_NOISE_VAR: f64 = 0.2;
pub const WISHART_SCALE: f64 = 3.0;
pub const WISHART_DF: usize = 7;
pub const MEAN_RANGE: f64 = 10.0;

/// Stream reserved for drawing mixture parameters, distinct from every
/// replication index.
pub const PARAMS_STREAM: u64 = u64::MAX;

/// A `(seed, stream)` pair naming an independent ChaCha8 sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// `x ~ Σ πᵢ N(θᵢ, Σᵢ) + ε` with `ε ~ N(0, noise_var·I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub noise_var: f64,
}

impl MixtureParams {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
        noise_var: f64,
    ) -> Result<Self> {
        let r = weights.len();
        if r == 0 || means.len() != r || covariances.len() != r {
            return Err(KmseError::Input(format!(
                "mixture needs matching, nonempty component lists (weights {r}, means {}, covariances {})",
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(KmseError::Input("mixture weights must lie on the simplex".into()));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(KmseError::Input("mixture dimension must be positive".into()));
        }
        for (m, c) in means.iter().zip(&covariances) {
            if m.len() != d {
                return Err(KmseError::DimensionMismatch { expected: d, found: m.len() });
            }
            if c.nrows() != d || c.ncols() != d {
                return Err(KmseError::DimensionMismatch { expected: d, found: c.nrows() });
            }
        }
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(KmseError::Input(format!("noise variance must be non-negative, got {noise_var}")));
        }
        Ok(MixtureParams {
            weights,
            means,
            covariances,
            noise_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }
}

/// Draws `S·G·Gᵀ·S` with `S` the symmetric square root of `scale` and `G` a
/// `d × df` standard normal matrix. The result has rank at most `df`.
pub fn wishart_sample(scale: &DMatrix<f64>, df: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if df == 0 {
        return Err(KmseError::Config("Wishart degrees of freedom must be positive".into()));
    }
    let root = psd_root(scale)?;
    let d = scale.nrows();
    let g = DMatrix::<f64>::from_fn(d, df, |_, _| rng.sample(StandardNormal));
    let sg = &root * g;
    Ok(&sg * sg.transpose())
}

// Symmetric square root of a PSD matrix; small negative eigenvalues are
// clamped, clearly negative ones rejected.
fn psd_root(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eigendecompose(&SymMatrix::new(m.clone())?)?;
    let tol = 1e-10 * eig.max_abs_eigenvalue().max(1.0);
    if eig.eigenvalues.iter().any(|&g| g < -tol) {
        return Err(KmseError::Input("matrix is not positive semi-definite".into()));
    }
    Ok(eig.matrix_function(|g| g.max(0.0).sqrt()))
}

/// The benchmark's mixture in dimension `d`: fixed weights, means uniform on
/// `(−10, 10)`, covariances `W(3I, 7)`, noise variance 0.2.
pub fn draw_mixture_params(d: usize, rng: &mut impl Rng) -> Result<MixtureParams> {
    if d == 0 {
        return Err(KmseError::Config("dimension must be positive".into()));
    }
    let scale = DMatrix::identity(d, d) * WISHART_SCALE;
    let mut means = Vec::with_capacity(DEFAULT_WEIGHTS.len());
    let mut covariances = Vec::with_capacity(DEFAULT_WEIGHTS.len());
    for _ in DEFAULT_WEIGHTS {
        means.push(DVector::from_fn(d, |_, _| rng.gen_range(-MEAN_RANGE..MEAN_RANGE)));
        covariances.push(wishart_sample(&scale, WISHART_DF, rng)?);
    }
    MixtureParams::new(DEFAULT_WEIGHTS.to_vec(), means, covariances, DEFAULT_NOISE_VAR)
}

/// Folds the additive noise into the components: `Σᵢ ← Σᵢ + noise·I`.
pub fn effective_components(params: &MixtureParams) -> MixtureParams {
    let d = params.dim();
    let shift = DMatrix::identity(d, d) * params.noise_var;
    MixtureParams {
        weights: params.weights.clone(),
        means: params.means.clone(),
        covariances: params.covariances.iter().map(|c| c + &shift).collect(),
        noise_var: 0.0,
    }
}

/// Draws `n` rows: a component index from `π`, a Gaussian draw through a
/// square root of `Σᵢ` (rank-deficient covariances are fine), then the noise.
pub fn sample_mixture(params: &MixtureParams, n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(KmseError::Input("sample size must be positive".into()));
    }
    let d = params.dim();
    let roots = params
        .covariances
        .iter()
        .map(psd_root)
        .collect::<Result<Vec<_>>>()?;
    let picker = WeightedIndex::new(&params.weights)
        .map_err(|e| KmseError::Input(format!("mixture weights: {e}")))?;
    let noise_sd = params.noise_var.sqrt();
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        let j = picker.sample(rng);
        let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let x = &params.means[j] + &roots[j] * z;
        for v in x.iter() {
            let eps: f64 = rng.sample(StandardNormal);
            values.push(v + noise_sd * eps);
        }
    }
    Dataset::from_flat(n, d, values)
}
