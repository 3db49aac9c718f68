//! Small dense linear-algebra helpers shared by the solvers and tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, UlcaError};

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue. The
/// input is symmetrized first.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = a.nrows();
    if d != a.ncols() {
        return Err(UlcaError::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            d,
            a.ncols()
        )));
    }
    let eig = symmetrize(a)
        .try_symmetric_eigen(f64::EPSILON, 1000 * d.max(1))
        .ok_or(UlcaError::EigenFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(UlcaError::EigenFailure);
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `tr(MᵀAM)`.
pub fn trace_quad(m: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    (a * m).component_mul(m).sum()
}

/// Sum of absolute diagonal entries.
pub fn abs_trace(a: &DMatrix<f64>) -> f64 {
    a.diagonal().iter().map(|v| v.abs()).sum()
}

/// `max |MᵀM − I|`.
pub fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let k = g.nrows();
    (g - DMatrix::<f64>::identity(k, k)).amax()
}

/// Thin Q factor of a tall matrix.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Haar-ish random `d × k` matrix with orthonormal columns.
pub fn random_orthonormal<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(&g)
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal matrices with equal column count. Computed from sines, which
/// stays accurate for tiny angles.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let residual = b - a * (a.transpose() * b);
    let s = residual.singular_values().amax();
    s.min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eigen_is_sorted_descending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&a).unwrap();
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        assert!((vecs[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((vecs[(2, 1)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn principal_angle_detects_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_orthonormal(6, 2, &mut rng);
        let q = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]);
        assert!(max_principal_angle(&m, &(&m * q)) < 1e-12);
        let e1 = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let tilted = DMatrix::from_row_slice(2, 1, &[0.1f64.cos(), 0.1f64.sin()]);
        assert!((max_principal_angle(&e1, &tilted) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn trace_quad_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_orthonormal(5, 2, &mut rng);
        let a = symmetrize(&DMatrix::from_fn(5, 5, |i, j| (i * 5 + j) as f64));
        let direct = (m.transpose() * &a * &m).trace();
        assert!((trace_quad(&m, &a) - direct).abs() < 1e-10);
        assert!(orthonormality_error(&m) < 1e-12);
    }
}
