//! Kernel evaluation, Gram matrices, the median-heuristic bandwidth and the
//! `K/n` spectrum normalisation.
//!
//! Every filter in this crate acts on the normalised Gram matrix
//! `K̄ = K/n`. Its nonzero spectrum coincides with that of the empirical
//! covariance operator, so it lies in `[0, κ²]`, the domain on which filter
//! functions are defined, and a Landweber step of `1/κ²` is always stable.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::linalg::{sym_eigendecompose, EigenDecomposition, SymMatrix};

/// Slack allowed above `κ²` on the Gram diagonal.
const DIAG_SLACK: f64 = 1e-12;

/// A reproducing kernel together with its bound `κ² ≥ sup k(x, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `exp(−‖x−y‖²/(2σ²))`.
    GaussianRbf { bandwidth_sq: f64 },
    /// `⟨x, y⟩`; `kappa_sq` must bound `‖x‖²` over the data.
    Linear { kappa_sq: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth_sq: f64) -> Result<Self> {
        if !(bandwidth_sq > 0.0 && bandwidth_sq.is_finite()) {
            return Err(KmseError::Config(format!(
                "RBF bandwidth must be positive and finite, got {bandwidth_sq}"
            )));
        }
        Ok(KernelSpec::GaussianRbf { bandwidth_sq })
    }

    /// Linear kernel whose `κ²` is the largest squared norm in `data`.
    pub fn linear_for(data: &Dataset) -> Self {
        let kappa_sq = data
            .rows()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>())
            .fold(0.0_f64, f64::max);
        KernelSpec::Linear { kappa_sq }
    }

    pub fn kappa_sq(&self) -> f64 {
        match *self {
            KernelSpec::GaussianRbf { .. } => 1.0,
            KernelSpec::Linear { kappa_sq } => kappa_sq,
        }
    }

    pub fn bandwidth_sq(&self) -> Option<f64> {
        match *self {
            KernelSpec::GaussianRbf { bandwidth_sq } => Some(bandwidth_sq),
            KernelSpec::Linear { .. } => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::GaussianRbf { .. } => "rbf",
            KernelSpec::Linear { .. } => "linear",
        }
    }

    // Evaluation without the dimension check, for inner loops.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::GaussianRbf { bandwidth_sq } => {
                (-squared_distance(x, y) / (2.0 * bandwidth_sq)).exp()
            }
            KernelSpec::Linear { .. } => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(KmseError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if let KernelSpec::GaussianRbf { bandwidth_sq } = *spec {
        if !(bandwidth_sq > 0.0) {
            return Err(KmseError::Config(format!(
                "RBF bandwidth must be positive, got {bandwidth_sq}"
            )));
        }
    }
    Ok(spec.eval_unchecked(x, y))
}

/// The raw Gram matrix `K_ij = k(x_i, x_j)`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    raw: SymMatrix,
    kernel: KernelSpec,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.raw.dim()
    }

    pub fn raw(&self) -> &SymMatrix {
        &self.raw
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }
}

pub fn gram_matrix(points: &Dataset, spec: &KernelSpec) -> Result<GramMatrix> {
    let n = points.n();
    if n == 0 {
        return Err(KmseError::Input("Gram matrix of an empty dataset".into()));
    }
    if let KernelSpec::GaussianRbf { bandwidth_sq } = *spec {
        if !(bandwidth_sq > 0.0) {
            return Err(KmseError::Config(format!(
                "RBF bandwidth must be positive, got {bandwidth_sq}"
            )));
        }
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = points.row(i);
        for j in 0..=i {
            let v = spec.eval_unchecked(xi, points.row(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let kappa_sq = spec.kappa_sq();
    for i in 0..n {
        if k[(i, i)] > kappa_sq + DIAG_SLACK {
            return Err(KmseError::Config(format!(
                "k(x_{i}, x_{i}) = {} exceeds kappa^2 = {kappa_sq}",
                k[(i, i)]
            )));
        }
    }
    Ok(GramMatrix {
        raw: SymMatrix::new(k)?,
        kernel: *spec,
    })
}

/// Cross-kernel matrix `k(a_i, b_j)`.
pub fn cross_kernel(spec: &KernelSpec, a: &Dataset, b: &Dataset) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() {
        return Err(KmseError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(DMatrix::from_fn(a.n(), b.n(), |i, j| {
        spec.eval_unchecked(a.row(i), b.row(j))
    }))
}

/// Median of the squared pairwise distances `‖x_i − x_j‖²`, `i < j`, taking
/// the lower median when the number of pairs is even.
///
/// Duplicated rows can push that median to zero while distinct points still
/// exist; in that case the lower median of the nonzero distances is used.
pub fn median_heuristic_bandwidth(points: &Dataset) -> Result<f64> {
    let n = points.n();
    if n < 2 {
        return Err(KmseError::Input(format!(
            "median heuristic needs at least 2 points, got {n}"
        )));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(squared_distance(points.row(i), points.row(j)));
        }
    }
    let median = lower_median(&mut dists);
    if median > 0.0 {
        return Ok(median);
    }
    let mut nonzero: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    if nonzero.is_empty() {
        return Err(KmseError::DegenerateBandwidth);
    }
    Ok(lower_median(&mut nonzero))
}

fn lower_median(values: &mut [f64]) -> f64 {
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    *m
}

/// How the RBF bandwidth is chosen for a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    Median,
    Fixed(f64),
}

impl BandwidthRule {
    /// The Gaussian kernel this rule gives on `points`.
    pub fn resolve(&self, points: &Dataset) -> Result<KernelSpec> {
        match *self {
            BandwidthRule::Median => KernelSpec::gaussian(median_heuristic_bandwidth(points)?),
            BandwidthRule::Fixed(s) => KernelSpec::gaussian(s),
        }
    }
}

/// The Gram matrix scaled by `1/n`, with its eigendecomposition computed on
/// first use.
#[derive(Debug)]
pub struct NormalizedGram {
    matrix: SymMatrix,
    kappa_sq: f64,
    spectrum: OnceLock<std::result::Result<EigenDecomposition, String>>,
}

impl Clone for NormalizedGram {
    fn clone(&self) -> Self {
        let spectrum = OnceLock::new();
        if let Some(s) = self.spectrum.get() {
            let _ = spectrum.set(s.clone());
        }
        NormalizedGram {
            matrix: self.matrix.clone(),
            kappa_sq: self.kappa_sq,
            spectrum,
        }
    }
}

impl NormalizedGram {
    /// Wraps a matrix that is already normalised, e.g. a synthetic PSD matrix
    /// with spectrum inside `[0, kappa_sq]`.
    pub fn from_normalized(matrix: SymMatrix, kappa_sq: f64) -> Result<Self> {
        if !(kappa_sq > 0.0 && kappa_sq.is_finite()) {
            return Err(KmseError::Config(format!(
                "kappa^2 must be positive and finite, got {kappa_sq}"
            )));
        }
        Ok(NormalizedGram {
            matrix,
            kappa_sq,
            spectrum: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    /// Eigendecomposition of `K/n` with negative eigenvalues clamped to 0.
    pub fn spectrum(&self) -> Result<&EigenDecomposition> {
        self.spectrum
            .get_or_init(|| {
                sym_eigendecompose(&self.matrix)
                    .map(EigenDecomposition::clamp_nonnegative)
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|msg| KmseError::Input(msg.clone()))
    }

    /// The uniform weight vector `1_n = (1/n, …, 1/n)`.
    pub fn uniform(&self) -> DVector<f64> {
        DVector::from_element(self.n(), 1.0 / self.n() as f64)
    }

    /// `K̄·1_n`.
    pub fn mean_embedding_rhs(&self) -> DVector<f64> {
        self.matrix.mul_vec(&self.uniform())
    }

    /// Normalised Gram matrix of the sample with index `skip` left out.
    pub fn leave_one_out(gram: &GramMatrix, skip: usize) -> Result<Self> {
        let sub = gram.raw().without_index(skip)?;
        let m = sub.dim() as f64;
        Self::from_normalized(sub.scaled(1.0 / m), gram.kernel().kappa_sq())
    }
}

pub fn normalize_gram(k: &GramMatrix) -> NormalizedGram {
    let n = k.n() as f64;
    NormalizedGram {
        matrix: k.raw().scaled(1.0 / n),
        kappa_sq: k.kernel().kappa_sq(),
        spectrum: OnceLock::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rbf(s: f64) -> KernelSpec {
        KernelSpec::gaussian(s).unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_eval(&rbf(1.0), &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        let v = kernel_eval(&rbf(2.0), &[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        let lin = KernelSpec::Linear { kappa_sq: 25.0 };
        assert_eq!(kernel_eval(&lin, &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(
            kernel_eval(&lin, &[1.0], &[1.0, 2.0]),
            Err(KmseError::DimensionMismatch { .. })
        ));
        assert!(KernelSpec::gaussian(0.0).is_err());
    }

    #[test]
    fn gram_examples() {
        let one = Dataset::from_scalars(&[4.0]).unwrap();
        let k = gram_matrix(&one, &rbf(1.0)).unwrap();
        assert_eq!(k.raw().get(0, 0), 1.0);

        let dup = Dataset::from_scalars(&[1.5, 1.5]).unwrap();
        let k = gram_matrix(&dup, &rbf(1.0)).unwrap();
        assert!(k.raw().as_matrix().iter().all(|&v| v == 1.0));

        let line = Dataset::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let k = gram_matrix(&line, &rbf(0.5)).unwrap();
        assert!((k.raw().get(0, 2) - (-4.0f64).exp()).abs() < 1e-16);

        let empty = Dataset::from_flat(0, 1, vec![]).unwrap();
        assert!(gram_matrix(&empty, &rbf(1.0)).is_err());
    }

    #[test]
    fn linear_kernel_kappa_is_checked() {
        let ds = Dataset::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        assert!(gram_matrix(&ds, &KernelSpec::Linear { kappa_sq: 4.0 }).is_err());
        let spec = KernelSpec::linear_for(&ds);
        assert_eq!(spec.kappa_sq(), 9.0);
        assert!(gram_matrix(&ds, &spec).is_ok());
    }

    #[test]
    fn median_heuristic_examples() {
        let m = |pts: &[f64]| median_heuristic_bandwidth(&Dataset::from_scalars(pts).unwrap());
        assert_eq!(m(&[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(m(&[0.0, 1.0, 3.0]).unwrap(), 4.0);
        assert_eq!(m(&[0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(m(&[2.0, 2.0, 2.0]), Err(KmseError::DegenerateBandwidth)));
        assert!(m(&[2.0]).is_err());
    }

    #[test]
    fn median_heuristic_ignores_added_duplicates() {
        // pairs {0,0,0,1,1,1}: lower median is 0, but distinct points exist
        let s = median_heuristic_bandwidth(&Dataset::from_scalars(&[0.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(s, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let mut pts: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for _ in 0..rng.gen_range(1..20) {
                let k = rng.gen_range(0..pts.len());
                pts.push(pts[k]);
            }
            let s = median_heuristic_bandwidth(&Dataset::from_scalars(&pts).unwrap()).unwrap();
            assert!(s > 0.0);
        }
    }

    #[test]
    fn normalization_examples() {
        let dup = Dataset::from_scalars(&[0.0, 0.0]).unwrap();
        let kbar = normalize_gram(&gram_matrix(&dup, &rbf(1.0)).unwrap());
        assert!(kbar.matrix().as_matrix().iter().all(|&v| v == 0.5));
        let eig = kbar.spectrum().unwrap();
        assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!(eig.eigenvalues[1].abs() < 1e-15);

        let far = Dataset::from_scalars(&[0.0, 100.0, 200.0]).unwrap();
        let kbar = normalize_gram(&gram_matrix(&far, &rbf(1.0)).unwrap());
        for g in kbar.spectrum().unwrap().eigenvalues.iter() {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalized_spectrum_is_bounded_by_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let n = rng.gen_range(2..40);
            let d = rng.gen_range(1..6);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let ds = Dataset::from_rows(&rows).unwrap();
            let sigma = median_heuristic_bandwidth(&ds).unwrap();
            let k = gram_matrix(&ds, &rbf(sigma)).unwrap();
            let raw_eig = sym_eigendecompose(k.raw()).unwrap();
            assert!(raw_eig.eigenvalues.min() >= -1e-10);
            let kbar = normalize_gram(&k);
            let eig = kbar.spectrum().unwrap();
            assert!(eig.eigenvalues.max() <= kbar.kappa_sq() + 1e-10);
            assert!(eig.eigenvalues.min() >= 0.0);

            let lin = KernelSpec::linear_for(&ds);
            let kbar = normalize_gram(&gram_matrix(&ds, &lin).unwrap());
            assert!(kbar.spectrum().unwrap().eigenvalues.max() <= lin.kappa_sq() + 1e-10);
        }
    }

    #[test]
    fn leave_one_out_normalises_by_remaining_count() {
        let ds = Dataset::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let k = gram_matrix(&ds, &rbf(1.0)).unwrap();
        let loo = NormalizedGram::leave_one_out(&k, 1).unwrap();
        assert_eq!(loo.n(), 2);
        assert_eq!(loo.matrix().get(0, 1), k.raw().get(0, 2) / 2.0);
    }
}
