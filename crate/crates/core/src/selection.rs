//! Choosing the shrinkage parameter: leave-one-out cross-validation by
//! direct refitting, and generalised cross-validation for the spectral
//! cut-off.
//!
//! The leave-one-out score of a candidate is the mean over folds of
//! `‖μ̂⁽⁻ⁱ⁾ − k(xᵢ, ·)‖²`, expanded as
//! `βᵀK₋ᵢβ − 2βᵀk₋ᵢ(xᵢ) + k(xᵢ, xᵢ)` where `β` is fitted without `xᵢ`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{KmseError, Result};
use crate::estimators::{fit_weights, landweber_path, nu_method_path};
use crate::filters::FilterSpec;
use crate::kernels::{gram_matrix, GramMatrix, KernelSpec, NormalizedGram};
use crate::linalg::SymMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Loocv,
    Gcv,
    /// The true loss, available only in simulations.
    Oracle,
}

/// The selected filter with the score of every candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: FilterSpec,
    /// `(parameter, score)` in candidate order: `t` for iterations, `λ` for
    /// grids, `m` for truncation levels.
    pub score_path: Vec<(f64, f64)>,
    pub score_kind: ScoreKind,
}

/// Iterative algorithms whose whole regularisation path comes from one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterativeAlgorithm {
    Landweber,
    NuMethod { nu: f64 },
}

/// Filter families indexed by a single λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaFamily {
    Tikhonov,
    Skmse,
    IteratedTikhonov { iters: usize },
    /// The cut-off threshold plays the role of λ.
    Tsvd,
}

impl LambdaFamily {
    pub fn with_lambda(&self, lambda: f64) -> FilterSpec {
        match *self {
            LambdaFamily::Tikhonov => FilterSpec::Tikhonov { lambda },
            LambdaFamily::Skmse => FilterSpec::Skmse { lambda },
            LambdaFamily::IteratedTikhonov { iters } => FilterSpec::IteratedTikhonov { iters, lambda },
            LambdaFamily::Tsvd => FilterSpec::Tsvd { threshold: lambda },
        }
    }
}

/// Index of the first minimum; NaN scores never win.
pub(crate) fn argmin_first(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some(b) if scores[b] <= s => {}
            _ => best = Some(i),
        }
    }
    best
}

// Data needed to score weights fitted with fold `i` held out.
struct Fold {
    kbar: NormalizedGram,
    raw: SymMatrix,
    cross: DVector<f64>,
    self_kernel: f64,
}

impl Fold {
    fn new(gram: &GramMatrix, i: usize) -> Result<Self> {
        let kbar = NormalizedGram::leave_one_out(gram, i)?;
        let raw = gram.raw().without_index(i)?;
        let n = gram.n();
        let cross = DVector::from_iterator(
            n - 1,
            (0..n).filter(|&j| j != i).map(|j| gram.raw().get(i, j)),
        );
        Ok(Fold {
            kbar,
            raw,
            cross,
            self_kernel: gram.raw().get(i, i),
        })
    }

    fn score(&self, beta: &DVector<f64>) -> f64 {
        beta.dot(&self.raw.mul_vec(beta)) - 2.0 * beta.dot(&self.cross) + self.self_kernel
    }
}

fn check_loocv_input(gram: &GramMatrix) -> Result<()> {
    if gram.n() < 3 {
        return Err(KmseError::Input(format!(
            "leave-one-out selection needs at least 3 points, got {}",
            gram.n()
        )));
    }
    Ok(())
}

// Runs `per_fold` on every fold in parallel and averages the score vectors
// in fold order, so the result does not depend on scheduling.
fn average_over_folds(
    gram: &GramMatrix,
    width: usize,
    per_fold: impl Fn(&Fold) -> Result<Vec<f64>> + Sync,
) -> Result<Vec<f64>> {
    let n = gram.n();
    let per: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| Fold::new(gram, i).and_then(|f| per_fold(&f)))
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; width];
    for scores in &per {
        for (t, s) in total.iter_mut().zip(scores) {
            *t += s;
        }
    }
    Ok(total.into_iter().map(|s| s / n as f64).collect())
}

/// Leave-one-out score of every iteration count `1..=t_max` on a Gram
/// matrix. Step size is `1/κ²`.
pub fn loocv_iteration_scores(
    gram: &GramMatrix,
    algo: IterativeAlgorithm,
    t_max: usize,
) -> Result<Vec<f64>> {
    check_loocv_input(gram)?;
    if t_max == 0 {
        return Err(KmseError::Config("t_max must be at least 1".into()));
    }
    let step = 1.0 / gram.kernel().kappa_sq();
    average_over_folds(gram, t_max, |fold| {
        let mut scores = Vec::with_capacity(t_max);
        let visit = |_: usize, beta: &DVector<f64>| scores.push(fold.score(beta));
        match algo {
            IterativeAlgorithm::Landweber => landweber_path(&fold.kbar, t_max, step, visit)?,
            IterativeAlgorithm::NuMethod { nu } => nu_method_path(&fold.kbar, t_max, nu, step, visit)?,
        };
        Ok(scores)
    })
}

/// Chooses the Landweber or ν-method iteration count by leave-one-out
/// cross-validation.
pub fn loocv_select_iterations(
    points: &Dataset,
    spec: &KernelSpec,
    algo: IterativeAlgorithm,
    t_max: usize,
) -> Result<SelectionResult> {
    let gram = gram_matrix(points, spec)?;
    select_iterations_on_gram(&gram, algo, t_max)
}

pub fn select_iterations_on_gram(
    gram: &GramMatrix,
    algo: IterativeAlgorithm,
    t_max: usize,
) -> Result<SelectionResult> {
    let scores = loocv_iteration_scores(gram, algo, t_max)?;
    let best = argmin_first(&scores)
        .ok_or_else(|| KmseError::Input("all leave-one-out scores are NaN".into()))?;
    let kappa_sq = gram.kernel().kappa_sq();
    let chosen = match algo {
        IterativeAlgorithm::Landweber => FilterSpec::landweber(best + 1, kappa_sq),
        IterativeAlgorithm::NuMethod { nu } => FilterSpec::nu_method(best + 1, nu, kappa_sq),
    };
    Ok(SelectionResult {
        chosen,
        score_path: scores
            .into_iter()
            .enumerate()
            .map(|(t, s)| ((t + 1) as f64, s))
            .collect(),
        score_kind: ScoreKind::Loocv,
    })
}

/// Leave-one-out score of each λ in `grid`.
pub fn loocv_lambda_scores(gram: &GramMatrix, family: LambdaFamily, grid: &[f64]) -> Result<Vec<f64>> {
    check_loocv_input(gram)?;
    if grid.is_empty() {
        return Err(KmseError::Config("empty lambda grid".into()));
    }
    average_over_folds(gram, grid.len(), |fold| {
        grid.iter()
            .map(|&lambda| Ok(fold.score(&fit_weights(&fold.kbar, &family.with_lambda(lambda))?.weights)))
            .collect()
    })
}

pub fn select_lambda_on_gram(gram: &GramMatrix, family: LambdaFamily, grid: &[f64]) -> Result<SelectionResult> {
    let scores = loocv_lambda_scores(gram, family, grid)?;
    let best = argmin_first(&scores)
        .ok_or_else(|| KmseError::Input("all leave-one-out scores are NaN".into()))?;
    Ok(SelectionResult {
        chosen: family.with_lambda(grid[best]),
        score_path: grid.iter().copied().zip(scores).collect(),
        score_kind: ScoreKind::Loocv,
    })
}

/// Chooses λ for a one-parameter family by leave-one-out refitting.
pub fn loocv_select_lambda(
    points: &Dataset,
    spec: &KernelSpec,
    family: LambdaFamily,
    lambda_grid: &[f64],
) -> Result<SelectionResult> {
    let gram = gram_matrix(points, spec)?;
    select_lambda_on_gram(&gram, family, lambda_grid)
}

/// Tikhonov (F-KMSE) λ by leave-one-out refitting.
pub fn loocv_select_lambda_tikhonov(
    points: &Dataset,
    spec: &KernelSpec,
    lambda_grid: &[f64],
) -> Result<SelectionResult> {
    loocv_select_lambda(points, spec, LambdaFamily::Tikhonov, lambda_grid)
}

/// GCV score of every truncation level `m = 1..=n`:
/// `‖(I − H_m)K̄1_n‖² / (1 − m/n)²`, with level `n` scored `+∞`.
pub fn gcv_scores(kbar: &NormalizedGram) -> Result<Vec<f64>> {
    let n = kbar.n();
    if n < 2 {
        return Err(KmseError::Input(format!("GCV needs at least 2 points, got {n}")));
    }
    let eig = kbar.spectrum()?;
    let coeffs = eig.eigenvectors.tr_mul(&kbar.mean_embedding_rhs());
    // tail[m] = Σ_{i ≥ m} c_i², summed from the small end for accuracy
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + coeffs[i] * coeffs[i];
    }
    Ok((1..=n)
        .map(|m| {
            if m == n {
                f64::INFINITY
            } else {
                let dof = 1.0 - m as f64 / n as f64;
                tail[m] / (dof * dof)
            }
        })
        .collect())
}

/// Chooses the cut-off level by GCV and returns the spectral threshold
/// `γ_m` of the winning level.
pub fn gcv_select_tsvd(kbar: &NormalizedGram) -> Result<SelectionResult> {
    let scores = gcv_scores(kbar)?;
    let best = argmin_first(&scores).unwrap_or(0);
    let gamma = kbar.spectrum()?.eigenvalues[best];
    // a zero eigenvalue cannot serve as threshold; keep strictly positive
    let threshold = if gamma > 0.0 { gamma } else { f64::MIN_POSITIVE };
    Ok(SelectionResult {
        chosen: FilterSpec::Tsvd { threshold },
        score_path: scores
            .into_iter()
            .enumerate()
            .map(|(m, s)| ((m + 1) as f64, s))
            .collect(),
        score_kind: ScoreKind::Gcv,
    })
}
