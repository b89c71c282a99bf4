//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Largest absolute entry; zero for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// `(a + a') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Rebuilds `V f(Λ) V'` from a symmetric eigendecomposition.
pub fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mapped = eig.eigenvalues.map(f);
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&mapped);
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are clipped.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |l| l.max(0.0).sqrt())
}

/// Projection onto the PSD cone in Frobenius norm (eigenvalue clipping).
pub fn clip_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |l| l.max(0.0))
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix; eigenvalues below
/// `rel_tol * max|eigenvalue|` are treated as zero.
pub fn sym_pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = rel_tol * scale;
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cut && l != 0.0 { 1.0 / l } else { 0.0 });
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&inv);
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `Σ_{jk} = rho^{|j-k|}`.
pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, k| rho.powi((j as i32 - k as i32).abs()))
}

/// Column means of `m`.
pub fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Rows of `m` selected by `idx`, in order.
pub fn select_rows<T: nalgebra::Scalar + Copy>(m: &DMatrix<T>, idx: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Frobenius inner product `tr(a'b)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
