//! Dense symmetric linear algebra: eigendecomposition and SPD solves.
//!
//! Small and medium matrices go through a cyclic Jacobi eigensolver, which
//! is accurate to working precision and has no dependence on a LAPACK
//! backend. Above [`JACOBI_MAX_DIM`] the cubic per-sweep cost of Jacobi
//! dominates, so those inputs are handed to nalgebra's Householder
//! tridiagonalisation followed by implicit QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{KmseError, Result};

/// Largest dimension handled by the Jacobi solver in [`sym_eigendecompose`].
pub const JACOBI_MAX_DIM: usize = 256;

/// Off-diagonal Frobenius norm, relative to `‖M‖_F`, at which Jacobi stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

/// Sweep limit for the Jacobi solver.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// A dense real symmetric matrix.
///
/// Construction symmetrises the input as `(M + Mᵀ)/2`, so `get(i, j)` and
/// `get(j, i)` are bitwise equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(KmseError::Input("matrix must have dimension >= 1".into()));
        }
        if m.ncols() != n {
            return Err(KmseError::DimensionMismatch {
                expected: n,
                found: m.ncols(),
            });
        }
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
        Ok(SymMatrix(sym))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> SymMatrix {
        SymMatrix(&self.0 * factor)
    }

    /// Returns `M + shift·I`.
    pub fn shifted(&self, shift: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        SymMatrix(m)
    }

    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.0 * v
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Principal submatrix with row/column `skip` removed.
    pub fn without_index(&self, skip: usize) -> Result<SymMatrix> {
        let n = self.dim();
        if n < 2 || skip >= n {
            return Err(KmseError::Input(format!(
                "cannot remove index {skip} from a {n}x{n} matrix"
            )));
        }
        let idx = |k: usize| if k < skip { k } else { k + 1 };
        Ok(SymMatrix(DMatrix::from_fn(n - 1, n - 1, |i, j| {
            self.0[(idx(i), idx(j))]
        })))
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted in non-increasing
/// order; column `i` of `eigenvectors` belongs to `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_abs_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// Replaces negative eigenvalues by zero.
    pub fn clamp_nonnegative(mut self) -> Self {
        for g in self.eigenvalues.iter_mut() {
            if *g < 0.0 {
                *g = 0.0;
            }
        }
        self
    }

    /// `U·diag(f(γ))·Uᵀ`.
    pub fn matrix_function(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &g) in self.eigenvalues.iter().enumerate() {
            let w = f(g);
            scaled.column_mut(j).scale_mut(w);
        }
        scaled * self.eigenvectors.transpose()
    }

    /// `U·diag(f(γ))·Uᵀ·v` without forming the matrix.
    pub fn apply_function(&self, f: impl Fn(f64) -> f64, v: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = self.eigenvectors.tr_mul(v);
        for (c, &g) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= f(g);
        }
        &self.eigenvectors * coeffs
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.matrix_function(|g| g)
    }

    /// `‖UᵀU − I‖_max`.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim();
        let gram = self.eigenvectors.tr_mul(&self.eigenvectors);
        let mut err = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err
    }

    /// `‖U·diag(γ)·Uᵀ − M‖_max`.
    pub fn reconstruction_error(&self, m: &SymMatrix) -> f64 {
        (self.reconstruct() - m.as_matrix()).amax()
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// Uses cyclic Jacobi up to [`JACOBI_MAX_DIM`] and tridiagonal QR beyond.
pub fn sym_eigendecompose(m: &SymMatrix) -> Result<EigenDecomposition> {
    if m.dim() <= JACOBI_MAX_DIM {
        jacobi_eigen(m)
    } else {
        tridiagonal_eigen(m)
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal Frobenius norm is
/// at most `JACOBI_TOLERANCE·‖M‖_F`, failing after `JACOBI_MAX_SWEEPS`.
pub fn jacobi_eigen(m: &SymMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(KmseError::Input("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    // row-major working copy; `vt` holds eigenvectors as rows
    let mut a: Vec<f64> = (0..n * n).map(|k| m.get(k / n, k % n)).collect();
    let mut vt = vec![0.0; n * n];
    for i in 0..n {
        vt[i * n + i] = 1.0;
    }

    let target = JACOBI_TOLERANCE * m.frobenius_norm();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut off = off_norm(&a);
    let mut sweeps = 0;
    while off > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(KmseError::Convergence {
                sweeps,
                residual: off,
            });
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    // |theta| overflowed: the rotation angle is ~1/(2θ)
                    0.5 / theta
                };
                if t == 0.0 {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    a[k * n + p] = new_kp;
                    a[p * n + k] = new_kp;
                    a[k * n + q] = new_kq;
                    a[q * n + k] = new_kq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                let (head, tail) = vt.split_at_mut(q * n);
                let row_p = &mut head[p * n..(p + 1) * n];
                let row_q = &mut tail[..n];
                for (vp, vq) in row_p.iter_mut().zip(row_q.iter_mut()) {
                    let x = *vp;
                    let y = *vq;
                    *vp = c * x - s * y;
                    *vq = s * x + c * y;
                }
            }
        }
        sweeps += 1;
        off = off_norm(&a);
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    Ok(sorted_decomposition(&diag, |i, k| vt[i * n + k]))
}

/// Householder tridiagonalisation plus implicit symmetric QR (nalgebra).
pub fn tridiagonal_eigen(m: &SymMatrix) -> Result<EigenDecomposition> {
    if !m.is_finite() {
        return Err(KmseError::Input("matrix has non-finite entries".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(m.as_matrix().clone());
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let vecs = eig.eigenvectors;
    Ok(sorted_decomposition(&vals, |i, k| vecs[(k, i)]))
}

// `vector(i, k)` is component k of the eigenvector paired with `values[i]`.
fn sorted_decomposition(
    values: &[f64],
    vector: impl Fn(usize, usize) -> f64,
) -> EigenDecomposition {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let eigenvectors = DMatrix::from_fn(n, n, |k, col| vector(order[col], k));
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Cholesky factor of a symmetric positive definite matrix, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        if !m.is_finite() {
            return Err(KmseError::Input("matrix has non-finite entries".into()));
        }
        nalgebra::Cholesky::new(m.as_matrix().clone())
            .map(|chol| SpdFactor { chol })
            .ok_or(KmseError::NotPositiveDefinite)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        if b.len() != self.dim() {
            return Err(KmseError::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        Ok(self.chol.solve(b))
    }
}

/// Solves `M x = b` for symmetric positive definite `M`.
pub fn solve_spd(m: &SymMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != m.dim() {
        return Err(KmseError::DimensionMismatch {
            expected: m.dim(),
            found: b.len(),
        });
    }
    SpdFactor::new(m)?.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rank: usize, rng: &mut impl Rng) -> SymMatrix {
        let g = DMatrix::<f64>::from_fn(n, rank, |_, _| rng.gen_range(-1.0..1.0));
        let m = &g * g.transpose();
        let scale = 10.0 / m.amax().max(1e-300);
        SymMatrix::new(m * scale).unwrap()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eigendecompose(&SymMatrix::identity(3).unwrap()).unwrap();
        for g in eig.eigenvalues.iter() {
            assert_eq!(*g, 1.0);
        }
        assert!(eig.orthogonality_error() <= 1e-12);
    }

    #[test]
    fn two_by_two_matches_characteristic_polynomial() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let eig = jacobi_eigen(&m).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((eig.eigenvalues[1] - 1.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = eig.eigenvectors.column(0);
        let u1 = eig.eigenvectors.column(1);
        assert!((u0[0].abs() - s).abs() < 1e-14 && (u0[0] - u0[1]).abs() < 1e-14);
        assert!((u1[0].abs() - s).abs() < 1e-14 && (u1[0] + u1[1]).abs() < 1e-14);
    }

    #[test]
    fn random_symmetric_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SymMatrix::from_fn(10, |_, _| rng.gen_range(-10.0..10.0)).unwrap();
        let eig = sym_eigendecompose(&m).unwrap();
        assert!(eig.reconstruction_error(&m) <= 1e-8 * (1.0 + eig.max_abs_eigenvalue()));
        assert!(eig.orthogonality_error() <= 1e-10);
        assert!(eig
            .eigenvalues
            .as_slice()
            .windows(2)
            .all(|w| w[0] >= w[1]));
    }

    #[test]
    fn psd_invariants_over_many_seeds() {
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=50);
            let rank = rng.gen_range(1..=n);
            let m = random_psd(n, rank, &mut rng);
            let eig = sym_eigendecompose(&m).unwrap();
            let scale = eig.max_abs_eigenvalue();
            assert!(eig.reconstruction_error(&m) <= 1e-8 * (1.0 + scale), "seed {seed}");
            assert!(eig.orthogonality_error() <= 1e-10, "seed {seed}");
            assert!(eig.eigenvalues.min() >= -1e-10 * scale.max(1.0), "seed {seed}");
        }
    }

    #[test]
    fn tridiagonal_path_agrees_with_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_psd(40, 40, &mut rng);
        let a = jacobi_eigen(&m).unwrap();
        let b = tridiagonal_eigen(&m).unwrap();
        assert!((&a.eigenvalues - &b.eigenvalues).amax() < 1e-10);
        assert!(b.orthogonality_error() <= 1e-10);
        assert!(b.reconstruction_error(&m) <= 1e-8 * (1.0 + b.max_abs_eigenvalue()));
    }

    #[test]
    fn large_matrix_uses_tridiagonal_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_psd(JACOBI_MAX_DIM + 20, 30, &mut rng);
        let eig = sym_eigendecompose(&m).unwrap();
        assert!(eig.orthogonality_error() <= 1e-10);
        assert!(eig.reconstruction_error(&m) <= 1e-8 * (1.0 + eig.max_abs_eigenvalue()));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 1.0]))
            .unwrap();
        assert!(matches!(sym_eigendecompose(&m), Err(KmseError::Input(_))));
    }

    #[test]
    fn zero_matrix_converges_immediately() {
        let m = SymMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        let eig = jacobi_eigen(&m).unwrap();
        assert_eq!(eig.eigenvalues.amax(), 0.0);
    }

    #[test]
    fn symmetrises_on_construction() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 1.0])).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn spd_solve_examples() {
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_spd(&SymMatrix::identity(2).unwrap(), &b).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);

        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0])).unwrap();
        let x = solve_spd(&m, &DVector::from_vec(vec![2.0, 4.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);

        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let x = solve_spd(&m, &DVector::from_vec(vec![3.0, 3.0])).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spd_solve_errors() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_spd(&m, &b), Err(KmseError::NotPositiveDefinite)));
        let b3 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            solve_spd(&SymMatrix::identity(2).unwrap(), &b3),
            Err(KmseError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spd_solve_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let n = rng.gen_range(1..30);
            let m = random_psd(n, n, &mut rng).shifted(0.1);
            let b = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
            let x = solve_spd(&m, &b).unwrap();
            let r = m.mul_vec(&x) - &b;
            assert!(r.norm() <= 1e-8 * b.norm());
        }
    }
}
