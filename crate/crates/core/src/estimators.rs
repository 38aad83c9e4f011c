//! Weight vectors for the empirical kernel mean and its shrinkage variants.
//!
//! Every estimate has the form `Σ βᵢ k(xᵢ, ·)`. The spectral route computes
//! `β = U·diag(γ g_λ(γ))·Uᵀ·1_n` from the spectrum of `K̄`, which equals
//! `g_λ(K̄)·K̄·1_n`. The iterative routes reach the same vector without an
//! eigendecomposition.

use nalgebra::DVector;

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::filters::{nu_coefficients, shrinkage_factor, FilterSpec};
use crate::kernels::{KernelSpec, NormalizedGram};
use crate::linalg::SpdFactor;

/// Iterates abort once `‖β‖` exceeds this multiple of `‖1_n‖`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// Coefficients `β` of an estimate `Σ βᵢ k(xᵢ, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: DVector<f64>,
    pub estimator_id: String,
    /// The filter that produced the weights; `None` for the plain empirical mean.
    pub filter: Option<FilterSpec>,
}

impl WeightVector {
    fn new(weights: DVector<f64>, estimator_id: &str, filter: Option<FilterSpec>) -> Self {
        WeightVector {
            weights,
            estimator_id: estimator_id.to_string(),
            filter,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice()
    }
}

/// The empirical kernel mean: every weight is `1/n`.
pub fn empirical_kme_weights(n: usize) -> Result<WeightVector> {
    if n == 0 {
        return Err(KmseError::Input("empirical mean of an empty sample".into()));
    }
    Ok(WeightVector::new(
        DVector::from_element(n, 1.0 / n as f64),
        "kme",
        None,
    ))
}

/// The uniformly shrunk mean `μ̂/(1+λ)`.
pub fn skmse_weights(n: usize, lambda: f64) -> Result<WeightVector> {
    let spec = FilterSpec::Skmse { lambda };
    spec.validate(1.0)
        .map_err(|_| KmseError::Input(format!("S-KMSE needs lambda >= 0, got {lambda}")))?;
    let mut w = empirical_kme_weights(n)?;
    w.weights /= 1.0 + lambda;
    w.estimator_id = "skmse".into();
    w.filter = Some(spec);
    Ok(w)
}

/// `β = g_λ(K̄)·K̄·1_n` through the eigendecomposition of `K̄`.
pub fn spectral_weights(kbar: &NormalizedGram, spec: &FilterSpec) -> Result<WeightVector> {
    spec.validate(kbar.kappa_sq())?;
    let eig = kbar.spectrum()?;
    let mut coeffs = eig.eigenvectors.tr_mul(&kbar.uniform());
    for (c, &gamma) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c *= shrinkage_factor(spec, gamma)?;
    }
    let weights = &eig.eigenvectors * coeffs;
    Ok(WeightVector::new(weights, spec.name(), Some(*spec)))
}

fn guard(step: usize, beta: &DVector<f64>, target_norm: f64) -> Result<()> {
    let norm = beta.norm();
    let limit = DIVERGENCE_FACTOR * target_norm;
    if !norm.is_finite() || norm > limit {
        return Err(KmseError::Divergence {
            step,
            norm,
            guard: limit,
        });
    }
    Ok(())
}

/// Runs Landweber from `β⁰ = 0`, handing every iterate `β^s` (s = 1..=t)
/// to `visit`.
pub fn landweber_path(
    kbar: &NormalizedGram,
    iters: usize,
    eta: f64,
    mut visit: impl FnMut(usize, &DVector<f64>),
) -> Result<DVector<f64>> {
    FilterSpec::Landweber { iters, eta }.validate(kbar.kappa_sq())?;
    let rhs = kbar.mean_embedding_rhs();
    let target_norm = kbar.uniform().norm();
    let mut beta = DVector::zeros(kbar.n());
    for s in 1..=iters {
        let residual = &rhs - kbar.matrix().mul_vec(&beta);
        beta.axpy(eta, &residual, 1.0);
        guard(s, &beta, target_norm)?;
        visit(s, &beta);
    }
    Ok(beta)
}

/// Landweber iteration `β^s = β^{s−1} + η(K̄1_n − K̄β^{s−1})`.
pub fn landweber_weights(kbar: &NormalizedGram, iters: usize, eta: f64) -> Result<WeightVector> {
    let beta = landweber_path(kbar, iters, eta, |_, _| {})?;
    Ok(WeightVector::new(
        beta,
        "landweber",
        Some(FilterSpec::Landweber { iters, eta }),
    ))
}

/// Runs the ν-method from `β⁰ = β⁻¹ = 0`, handing every iterate to `visit`.
pub fn nu_method_path(
    kbar: &NormalizedGram,
    iters: usize,
    nu: f64,
    step: f64,
    mut visit: impl FnMut(usize, &DVector<f64>),
) -> Result<DVector<f64>> {
    FilterSpec::NuMethod { iters, nu, step }.validate(kbar.kappa_sq())?;
    let rhs = kbar.mean_embedding_rhs();
    let target_norm = kbar.uniform().norm();
    let n = kbar.n();
    let mut prev = DVector::zeros(n);
    let mut beta = DVector::zeros(n);
    for s in 1..=iters {
        let (omega, kappa) = nu_coefficients(s, nu);
        let residual = &rhs - kbar.matrix().mul_vec(&beta);
        let mut next = &beta + (&beta - &prev) * omega;
        next.axpy(kappa * step, &residual, 1.0);
        prev = std::mem::replace(&mut beta, next);
        guard(s, &beta, target_norm)?;
        visit(s, &beta);
    }
    Ok(beta)
}

/// Accelerated Landweber with step `1/κ²`.
pub fn nu_method_weights(kbar: &NormalizedGram, iters: usize, nu: f64) -> Result<WeightVector> {
    let spec = FilterSpec::nu_method(iters, nu, kbar.kappa_sq());
    let step = 1.0 / kbar.kappa_sq();
    let beta = nu_method_path(kbar, iters, nu, step, |_, _| {})?;
    Ok(WeightVector::new(beta, "nu", Some(spec)))
}

/// `t` ridge refinements `(K̄+λI)β_s = K̄1_n + λβ_{s−1}` from `β₀ = 0`,
/// sharing one Cholesky factor.
pub fn iterated_tikhonov_weights(
    kbar: &NormalizedGram,
    iters: usize,
    lambda: f64,
) -> Result<WeightVector> {
    let spec = FilterSpec::IteratedTikhonov { iters, lambda };
    spec.validate(kbar.kappa_sq())?;
    let factor = SpdFactor::new(&kbar.matrix().shifted(lambda))?;
    let rhs = kbar.mean_embedding_rhs();
    let mut beta = DVector::zeros(kbar.n());
    for _ in 0..iters {
        beta = factor.solve(&(&rhs + &beta * lambda))?;
    }
    Ok(WeightVector::new(beta, "itik", Some(spec)))
}

/// Tikhonov (F-KMSE) weights `(K̄+λI)⁻¹K̄1_n` by a Cholesky solve.
pub fn tikhonov_weights(kbar: &NormalizedGram, lambda: f64) -> Result<WeightVector> {
    let mut w = iterated_tikhonov_weights(kbar, 1, lambda)?;
    w.estimator_id = "tikhonov".into();
    w.filter = Some(FilterSpec::Tikhonov { lambda });
    Ok(w)
}

/// Projection of `1_n` onto the eigenvectors of `K̄` with `γ ≥ threshold`.
pub fn tsvd_weights(kbar: &NormalizedGram, threshold: f64) -> Result<WeightVector> {
    spectral_weights(kbar, &FilterSpec::Tsvd { threshold })
}

/// Weights for any filter, preferring the route that avoids an
/// eigendecomposition when one exists.
pub fn fit_weights(kbar: &NormalizedGram, spec: &FilterSpec) -> Result<WeightVector> {
    match *spec {
        FilterSpec::Tikhonov { lambda } => tikhonov_weights(kbar, lambda),
        FilterSpec::Landweber { iters, eta } => landweber_weights(kbar, iters, eta),
        FilterSpec::NuMethod { iters, nu, step } => {
            let beta = nu_method_path(kbar, iters, nu, step, |_, _| {})?;
            Ok(WeightVector::new(beta, "nu", Some(*spec)))
        }
        FilterSpec::IteratedTikhonov { iters, lambda } => {
            iterated_tikhonov_weights(kbar, iters, lambda)
        }
        FilterSpec::Tsvd { threshold } => tsvd_weights(kbar, threshold),
        FilterSpec::Skmse { lambda } => skmse_weights(kbar.n(), lambda),
    }
}

/// `Σ βᵢ k(xᵢ, query)`.
pub fn evaluate_estimate(
    points: &Dataset,
    beta: &WeightVector,
    spec: &KernelSpec,
    query: &[f64],
) -> Result<f64> {
    if beta.len() != points.n() {
        return Err(KmseError::DimensionMismatch {
            expected: points.n(),
            found: beta.len(),
        });
    }
    if query.len() != points.dim() {
        return Err(KmseError::DimensionMismatch {
            expected: points.dim(),
            found: query.len(),
        });
    }
    Ok(points
        .rows()
        .zip(beta.weights.iter())
        .map(|(x, b)| b * spec.eval_unchecked(x, query))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram_matrix, normalize_gram};
    use crate::linalg::SymMatrix;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kbar_from(m: DMatrix<f64>) -> NormalizedGram {
        NormalizedGram::from_normalized(SymMatrix::new(m).unwrap(), 1.0).unwrap()
    }

    fn duplicate_pair() -> NormalizedGram {
        let ds = Dataset::from_scalars(&[0.3, 0.3]).unwrap();
        normalize_gram(&gram_matrix(&ds, &KernelSpec::gaussian(1.0).unwrap()).unwrap())
    }

    fn random_kbar(n: usize, seed: u64) -> NormalizedGram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<f64> = (0..n * 2).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let ds = Dataset::from_flat(n, 2, pts).unwrap();
        normalize_gram(&gram_matrix(&ds, &KernelSpec::gaussian(0.5).unwrap()).unwrap())
    }

    fn max_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn kme_and_skmse_examples() {
        assert_eq!(empirical_kme_weights(1).unwrap().as_slice(), &[1.0]);
        assert_eq!(empirical_kme_weights(4).unwrap().as_slice(), &[0.25; 4]);
        assert!(empirical_kme_weights(0).is_err());
        assert_eq!(skmse_weights(2, 1.0).unwrap().as_slice(), &[0.25, 0.25]);
        assert_eq!(skmse_weights(3, 0.0).unwrap(), WeightVector {
            filter: Some(FilterSpec::Skmse { lambda: 0.0 }),
            estimator_id: "skmse".into(),
            ..empirical_kme_weights(3).unwrap()
        });
        assert!(skmse_weights(2, 1e12).unwrap().weights.amax() < 1e-12);
        assert!(skmse_weights(2, -0.5).is_err());
    }

    #[test]
    fn duplicate_points_shrink_like_skmse() {
        let kbar = duplicate_pair();
        let w = spectral_weights(&kbar, &FilterSpec::Tikhonov { lambda: 1.0 }).unwrap();
        assert!(max_diff(&w.weights, &DVector::from_element(2, 0.25)) < 1e-12);
        let w = tikhonov_weights(&kbar, 1.0).unwrap();
        assert!(max_diff(&w.weights, &DVector::from_element(2, 0.25)) < 1e-12);
    }

    #[test]
    fn tsvd_examples() {
        // rank one: the single retained component reproduces 1_n exactly
        let w = tsvd_weights(&duplicate_pair(), 0.5).unwrap();
        assert!(max_diff(&w.weights, &DVector::from_element(2, 0.5)) < 1e-12);

        let kbar = random_kbar(8, 3);
        let gmin = kbar.spectrum().unwrap().eigenvalues.min();
        let w = tsvd_weights(&kbar, gmin * 0.999).unwrap();
        assert!(max_diff(&w.weights, &kbar.uniform()) < 1e-8);
        let w = tsvd_weights(&kbar, 1.5).unwrap();
        assert_eq!(w.weights.amax(), 0.0);
    }

    #[test]
    fn iterated_tikhonov_two_by_two() {
        let kbar = kbar_from(DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.25, 0.5]));
        let w = iterated_tikhonov_weights(&kbar, 1, 0.5).unwrap();
        assert!(max_diff(&w.weights, &DVector::from_element(2, 0.3)) < 1e-14);
    }

    #[test]
    fn first_steps() {
        let kbar = random_kbar(10, 5);
        let rhs = kbar.mean_embedding_rhs();
        let w = landweber_weights(&kbar, 1, 0.7).unwrap();
        assert!(max_diff(&w.weights, &(&rhs * 0.7)) < 1e-15);
        let w = nu_method_weights(&kbar, 1, 1.0).unwrap();
        assert!(max_diff(&w.weights, &(&rhs * 1.2)) < 1e-15);
        assert!(landweber_weights(&kbar, 5, 1.5).is_err());
    }

    #[test]
    fn iterative_matches_spectral() {
        for seed in 0..20 {
            let kbar = random_kbar(15, seed);
            for spec in [
                FilterSpec::landweber(40, 1.0),
                FilterSpec::nu_method(15, 1.0, 1.0),
                FilterSpec::IteratedTikhonov { iters: 3, lambda: 0.01 },
                FilterSpec::Tikhonov { lambda: 0.05 },
            ] {
                let a = fit_weights(&kbar, &spec).unwrap();
                let b = spectral_weights(&kbar, &spec).unwrap();
                assert!(max_diff(&a.weights, &b.weights) < 1e-8, "{spec:?} seed {seed}");
            }
        }
    }

    #[test]
    fn large_iteration_counts_reach_uniform_weights() {
        let kbar = kbar_from(DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.4, 0.05, 0.0, 0.05, 0.3]));
        let w = landweber_weights(&kbar, 2000, 1.0).unwrap();
        assert!(max_diff(&w.weights, &kbar.uniform()) < 1e-10);
        let w = spectral_weights(&kbar, &FilterSpec::Tikhonov { lambda: 1e-10 }).unwrap();
        assert!(max_diff(&w.weights, &kbar.uniform()) < 1e-6);
    }

    #[test]
    fn nu_method_accelerates_landweber() {
        let kbar = random_kbar(20, 11);
        let rhs = kbar.mean_embedding_rhs();
        let res = |b: &DVector<f64>| (kbar.matrix().mul_vec(b) - &rhs).norm();
        for t in [5, 10, 20] {
            let lw = landweber_weights(&kbar, t, 1.0).unwrap();
            let nu = nu_method_weights(&kbar, t, 1.0).unwrap();
            assert!(res(&nu.weights) <= res(&lw.weights), "t = {t}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        // a matrix whose spectrum exceeds the declared κ² blows up Landweber
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 1.0]));
        let kbar = NormalizedGram::from_normalized(SymMatrix::new(m).unwrap(), 1.0).unwrap();
        match landweber_weights(&kbar, 200, 1.0) {
            Err(KmseError::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn tikhonov_norm_decreases_with_lambda() {
        let kbar = random_kbar(12, 9);
        let norms: Vec<f64> = crate::filters::log_grid(1e-6, 1e2, 30)
            .into_iter()
            .map(|lambda| {
                let b = spectral_weights(&kbar, &FilterSpec::Tikhonov { lambda }).unwrap().weights;
                b.dot(&kbar.matrix().mul_vec(&b))
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn evaluation_examples() {
        let ds = Dataset::from_scalars(&[-1.0, 1.0]).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let kme = empirical_kme_weights(2).unwrap();
        let v = evaluate_estimate(&ds, &kme, &spec, &[0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        let zero = WeightVector::new(DVector::zeros(2), "zero", None);
        assert_eq!(evaluate_estimate(&ds, &zero, &spec, &[0.3]).unwrap(), 0.0);
        assert!(evaluate_estimate(&ds, &kme, &spec, &[0.0, 1.0]).is_err());
    }
}
