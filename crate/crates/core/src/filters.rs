//! Scalar filter functions `g_λ(γ)`, their residuals `r_λ(γ) = 1 − γ·g_λ(γ)`
//! and a numeric check of the admissibility constants (B, C, D).
//!
//! Estimators only ever need the product `γ·g_λ(γ)` (the per-component
//! shrinkage factor), which [`shrinkage_factor`] evaluates in a form that
//! stays accurate when `γ` is tiny.

use serde::{Deserialize, Serialize};

use crate::error::{KmseError, Result};

/// A shrinkage algorithm together with its regularisation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// `1/(γ+λ)`, the F-KMSE.
    Tikhonov { lambda: f64 },
    /// Gradient descent with step `eta` stopped after `iters` steps.
    Landweber { iters: usize, eta: f64 },
    /// Accelerated Landweber. `step` scales the spectrum into `[0, 1]` and
    /// is `1/κ²` for the normalised Gram matrix.
    NuMethod { iters: usize, nu: f64, step: f64 },
    /// `iters` Tikhonov refinements: `((γ+λ)^t − λ^t)/(γ(γ+λ)^t)`.
    IteratedTikhonov { iters: usize, lambda: f64 },
    /// Spectral cut-off: `1/γ` for `γ ≥ threshold`, else 0.
    Tsvd { threshold: f64 },
    /// Uniform shrinkage `γ·g = 1/(1+λ)` of every nonzero component.
    Skmse { lambda: f64 },
}

impl FilterSpec {
    /// Landweber with the default step `1/κ²`.
    pub fn landweber(iters: usize, kappa_sq: f64) -> Self {
        FilterSpec::Landweber {
            iters,
            eta: 1.0 / kappa_sq,
        }
    }

    /// ν-method with step `1/κ²`.
    pub fn nu_method(iters: usize, nu: f64, kappa_sq: f64) -> Self {
        FilterSpec::NuMethod {
            iters,
            nu,
            step: 1.0 / kappa_sq,
        }
    }

    /// Stable command-line name.
    pub fn name(&self) -> &'static str {
        match self {
            FilterSpec::Tikhonov { .. } => "tikhonov",
            FilterSpec::Landweber { .. } => "landweber",
            FilterSpec::NuMethod { .. } => "nu",
            FilterSpec::IteratedTikhonov { .. } => "itik",
            FilterSpec::Tsvd { .. } => "tsvd",
            FilterSpec::Skmse { .. } => "skmse",
        }
    }

    /// Qualification `η₀` (metadata).
    pub fn qualification(&self) -> f64 {
        match *self {
            FilterSpec::Tikhonov { .. } => 1.0,
            FilterSpec::IteratedTikhonov { iters, .. } => iters as f64,
            FilterSpec::Landweber { .. } | FilterSpec::Tsvd { .. } => f64::INFINITY,
            FilterSpec::NuMethod { nu, .. } => nu,
            // constant shrinkage never vanishes, so no positive order works
            FilterSpec::Skmse { .. } => 0.0,
        }
    }

    /// The effective shrinkage parameter λ. Iteration counts map to
    /// `1/(η t)` for Landweber and `1/(η t²)` for the ν-method.
    pub fn shrinkage_parameter(&self) -> f64 {
        match *self {
            FilterSpec::Tikhonov { lambda }
            | FilterSpec::IteratedTikhonov { lambda, .. }
            | FilterSpec::Skmse { lambda } => lambda,
            FilterSpec::Tsvd { threshold } => threshold,
            FilterSpec::Landweber { iters, eta } => 1.0 / (eta * iters.max(1) as f64),
            FilterSpec::NuMethod { iters, step, .. } => {
                let t = iters.max(1) as f64;
                1.0 / (step * t * t)
            }
        }
    }

    /// Checks parameter ranges, and that the step sizes are stable for a
    /// spectrum bounded by `kappa_sq`.
    pub fn validate(&self, kappa_sq: f64) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(KmseError::Config(format!(
                    "{}: {name} must be positive and finite, got {v}",
                    self.name()
                )))
            }
        };
        match *self {
            FilterSpec::Tikhonov { lambda } | FilterSpec::IteratedTikhonov { lambda, .. } => {
                positive("lambda", lambda)
            }
            FilterSpec::Skmse { lambda } => {
                if lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(KmseError::Config(format!(
                        "skmse: lambda must be non-negative, got {lambda}"
                    )))
                }
            }
            FilterSpec::Tsvd { threshold } => positive("threshold", threshold),
            FilterSpec::Landweber { eta, .. } => {
                positive("eta", eta)?;
                if eta * kappa_sq > 1.0 + 1e-12 {
                    return Err(KmseError::Config(format!(
                        "landweber: eta * kappa^2 = {} exceeds 1",
                        eta * kappa_sq
                    )));
                }
                Ok(())
            }
            FilterSpec::NuMethod { nu, step, .. } => {
                positive("nu", nu)?;
                positive("step", step)?;
                if step * kappa_sq > 1.0 + 1e-12 {
                    return Err(KmseError::Config(format!(
                        "nu-method: step * kappa^2 = {} exceeds 1",
                        step * kappa_sq
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Momentum `ω_t` and step multiplier `κ_t` of the ν-method at step `t ≥ 1`.
pub fn nu_coefficients(t: usize, nu: f64) -> (f64, f64) {
    if t <= 1 {
        return (0.0, (4.0 * nu + 2.0) / (4.0 * nu + 1.0));
    }
    let t = t as f64;
    let omega = (t - 1.0) * (2.0 * t - 3.0) * (2.0 * t + 2.0 * nu - 1.0)
        / ((t + 2.0 * nu - 1.0) * (2.0 * t + 4.0 * nu - 1.0) * (2.0 * t + 2.0 * nu - 3.0));
    let kappa = 4.0 * (2.0 * t + 2.0 * nu - 1.0) * (t + nu - 1.0)
        / ((t + 2.0 * nu - 1.0) * (2.0 * t + 4.0 * nu - 1.0));
    (omega, kappa)
}

// p_t(γ) from the ν-method recursion started at p_0 = 0.
fn nu_polynomial(iters: usize, nu: f64, step: f64, gamma: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 0.0);
    for t in 1..=iters {
        let (omega, kappa) = nu_coefficients(t, nu);
        let next = cur + omega * (cur - prev) + kappa * step * (1.0 - gamma * cur);
        prev = cur;
        cur = next;
    }
    cur
}

// 1 − (1 − x)^t, accurate for small x.
fn one_minus_pow(x: f64, t: usize) -> f64 {
    if x < 1.0 {
        -((t as f64) * (-x).ln_1p()).exp_m1()
    } else {
        1.0 - (1.0 - x).powi(t as i32)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(KmseError::Input(format!(
            "filter argument must be finite and non-negative, got {gamma}"
        )))
    }
}

/// The filter function `g_λ(γ)`.
///
/// S-KMSE has no finite value at `γ = 0`; it returns 0 there, which
/// leaves the null space of `K̄` untouched.
pub fn scalar_filter(spec: &FilterSpec, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(match *spec {
        FilterSpec::Tikhonov { lambda } => 1.0 / (gamma + lambda),
        FilterSpec::Landweber { iters, eta } => {
            if gamma == 0.0 {
                eta * iters as f64
            } else {
                one_minus_pow(eta * gamma, iters) / gamma
            }
        }
        FilterSpec::NuMethod { iters, nu, step } => nu_polynomial(iters, nu, step, gamma),
        FilterSpec::IteratedTikhonov { iters, lambda } => {
            if gamma == 0.0 {
                iters as f64 / lambda
            } else {
                one_minus_pow(gamma / (gamma + lambda), iters) / gamma
            }
        }
        FilterSpec::Tsvd { threshold } => {
            if gamma >= threshold {
                1.0 / gamma
            } else {
                0.0
            }
        }
        FilterSpec::Skmse { lambda } => {
            if gamma > 0.0 {
                1.0 / ((1.0 + lambda) * gamma)
            } else {
                0.0
            }
        }
    })
}

/// `γ·g_λ(γ)`, the factor applied to the spectral component at `γ`.
pub fn shrinkage_factor(spec: &FilterSpec, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(match *spec {
        FilterSpec::Tikhonov { lambda } => gamma / (gamma + lambda),
        FilterSpec::Landweber { iters, eta } => one_minus_pow(eta * gamma, iters),
        FilterSpec::NuMethod { iters, nu, step } => gamma * nu_polynomial(iters, nu, step, gamma),
        FilterSpec::IteratedTikhonov { iters, lambda } => {
            one_minus_pow(gamma / (gamma + lambda), iters)
        }
        FilterSpec::Tsvd { threshold } => {
            if gamma >= threshold && gamma > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        FilterSpec::Skmse { lambda } => {
            if gamma > 0.0 {
                1.0 / (1.0 + lambda)
            } else {
                0.0
            }
        }
    })
}

/// `r_λ(γ) = 1 − γ·g_λ(γ)`.
pub fn residual(spec: &FilterSpec, gamma: f64) -> Result<f64> {
    Ok(1.0 - shrinkage_factor(spec, gamma)?)
}

/// Log-spaced grid from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// Default λ grid for selection: 30 log-spaced points over `[1e−6, 1e2]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-6, 1e2, 30)
}

/// Numeric estimates of the admissibility constants of a filter on
/// `[0, κ²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub filter: FilterSpec,
    pub lambda: f64,
    pub kappa_sq: f64,
    /// Estimate of B: `sup |γ g_λ(γ)|`.
    pub sup_gamma_g: f64,
    /// Estimate of C: `sup |r_λ(γ)|`.
    pub sup_residual: f64,
    /// Estimates of D: `(η, sup |r_λ(γ)| γ^η / λ^η)`.
    pub residual_eta_bounds: Vec<(f64, f64)>,
    pub grid_size: usize,
}

/// Evaluates the three suprema on a uniform grid of `grid_size` points over
/// `[0, κ²]`, plus the point `γ = λ` when it lies inside the domain.
pub fn check_admissibility(
    spec: &FilterSpec,
    kappa_sq: f64,
    grid_size: usize,
    eta_list: &[f64],
) -> Result<AdmissibilityReport> {
    if grid_size < 100 {
        return Err(KmseError::Config(format!(
            "admissibility grid needs at least 100 points, got {grid_size}"
        )));
    }
    if !(kappa_sq > 0.0 && kappa_sq.is_finite()) {
        return Err(KmseError::Config(format!("invalid kappa^2 {kappa_sq}")));
    }
    if let Some(eta) = eta_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(KmseError::Config(format!("qualification order must be positive, got {eta}")));
    }
    spec.validate(kappa_sq)?;
    let lambda = spec.shrinkage_parameter();

    let mut grid: Vec<f64> = (0..grid_size)
        .map(|i| kappa_sq * i as f64 / (grid_size - 1) as f64)
        .collect();
    if lambda <= kappa_sq {
        grid.push(lambda);
    }

    let mut sup_gamma_g = 0.0_f64;
    let mut sup_residual = 0.0_f64;
    let mut eta_sups = vec![0.0_f64; eta_list.len()];
    for &gamma in &grid {
        let phi = shrinkage_factor(spec, gamma)?;
        let r = 1.0 - phi;
        sup_gamma_g = sup_gamma_g.max(phi.abs());
        sup_residual = sup_residual.max(r.abs());
        for (sup, &eta) in eta_sups.iter_mut().zip(eta_list) {
            *sup = sup.max(r.abs() * (gamma / lambda).powf(eta));
        }
    }
    Ok(AdmissibilityReport {
        filter: *spec,
        lambda,
        kappa_sq,
        sup_gamma_g,
        sup_residual,
        residual_eta_bounds: eta_list.iter().copied().zip(eta_sups).collect(),
        grid_size,
    })
}
