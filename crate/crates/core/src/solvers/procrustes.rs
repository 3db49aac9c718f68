use nalgebra::DMatrix;

use crate::error::{Result, UlcaError};

#[derive(Debug, Clone)]
pub struct ProcrustesAlignment {
    /// `Z_new · R`.
    pub aligned: DMatrix<f64>,
    /// Orthogonal `d′ × d′`; reflections are allowed.
    pub rotation: DMatrix<f64>,
    /// Set when `Z_newᵀ Z_prev` vanished and `R = I` was returned.
    pub degenerate: bool,
}

/// Orthogonal `R` minimizing `‖Z_prev − Z_new·R‖_F`, from the SVD
/// `Z_newᵀ Z_prev = U Σ Vᵀ` as `R = U Vᵀ`.
pub fn procrustes_align(
    z_prev: &DMatrix<f64>,
    z_new: &DMatrix<f64>,
) -> Result<ProcrustesAlignment> {
    if z_prev.shape() != z_new.shape() || z_new.ncols() == 0 {
        return Err(UlcaError::DimensionMismatch(format!(
            "cannot align {:?} to {:?}",
            z_new.shape(),
            z_prev.shape()
        )));
    }
    let k = z_new.ncols();
    let cross = z_new.transpose() * z_prev;
    if cross.amax() == 0.0 {
        return Ok(ProcrustesAlignment {
            aligned: z_new.clone(),
            rotation: DMatrix::identity(k, k),
            degenerate: true,
        });
    }
    let svd = cross.svd(true, true);
    let rotation = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    Ok(ProcrustesAlignment {
        aligned: z_new * &rotation,
        rotation,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_error, random_orthonormal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn recovers_exact_rotation_and_reflection() {
        let z = cloud(50, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_orthonormal(2, 2, &mut rng);
        let reflect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        for t in [q.clone(), &q * reflect] {
            let out = procrustes_align(&z, &(&z * t)).unwrap();
            assert!((&out.aligned - &z).norm() < 1e-10);
            assert!(orthonormality_error(&out.rotation) < 1e-12);
        }
    }

    #[test]
    fn identical_inputs_give_identity() {
        let z = cloud(20, 3, 3);
        let out = procrustes_align(&z, &z).unwrap();
        assert!((out.rotation - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn small_perturbation_residual_bound() {
        let n = 40;
        let z = cloud(n, 2, 4);
        let mut pert = z.clone();
        pert[(7, 0)] += 1e-3;
        let out = procrustes_align(&z, &pert).unwrap();
        let residual = (&z - &out.aligned).norm();
        assert!(residual <= 1e-3 * (n as f64).sqrt() + 1e-9);
        // Never worse than leaving the new embedding as is.
        assert!(residual <= (&z - &pert).norm() + 1e-15);
    }

    #[test]
    fn zero_cross_product_is_degenerate() {
        let z = DMatrix::<f64>::zeros(5, 2);
        let out = procrustes_align(&cloud(5, 2, 5), &z).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.rotation, DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(procrustes_align(&cloud(5, 2, 6), &cloud(4, 2, 7)).is_err());
    }
}
