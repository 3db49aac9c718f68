use nalgebra::DMatrix;

const VARIMAX_GAIN_TOL: f64 = 1e-10;
const VARIMAX_MAX_SWEEPS: usize = 200;

/// Sum over columns of the variance of squared loadings.
pub fn varimax_criterion(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows() as f64;
    m.column_iter()
        .map(|col| {
            let sq_mean = col.iter().map(|v| v * v).sum::<f64>() / p;
            let quad_mean = col.iter().map(|v| v.powi(4)).sum::<f64>() / p;
            quad_mean - sq_mean * sq_mean
        })
        .sum()
}

/// Rotates the columns of `m` to maximize [`varimax_criterion`] using
/// Kaiser's pairwise planar rotations. Returns `m · R` for an orthogonal `R`.
pub fn varimax(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let mut out = m.clone();
    if k < 2 {
        return out;
    }
    let p = m.nrows() as f64;
    let mut current = varimax_criterion(&out);
    for _ in 0..VARIMAX_MAX_SWEEPS {
        for i in 0..k {
            for j in (i + 1)..k {
                let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
                for (x, y) in out.column(i).iter().zip(out.column(j).iter()) {
                    let u = x * x - y * y;
                    let v = 2.0 * x * y;
                    a += u;
                    b += v;
                    c += u * u - v * v;
                    d += 2.0 * u * v;
                }
                let num = d - 2.0 * a * b / p;
                let den = c - (a * a - b * b) / p;
                let phi = num.atan2(den) / 4.0;
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, co) = phi.sin_cos();
                for r in 0..out.nrows() {
                    let x = out[(r, i)];
                    let y = out[(r, j)];
                    out[(r, i)] = x * co + y * s;
                    out[(r, j)] = -x * s + y * co;
                }
            }
        }
        let next = varimax_criterion(&out);
        let gain = next - current;
        current = next;
        if gain < VARIMAX_GAIN_TOL {
            break;
        }
    }
    out
}

/// Fixes column signs (nonnegative column sums; a zero-sum column gets its
/// largest-magnitude entry positive) and sorts columns by descending maximum
/// entry. The sort is stable, so ties keep their original order.
pub fn canonicalize_axes(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut signed = m.clone();
    for mut col in signed.column_iter_mut() {
        let sum: f64 = col.sum();
        let l1: f64 = col.iter().map(|v| v.abs()).sum();
        let flip = if sum.abs() <= 1e-12 * l1.max(f64::MIN_POSITIVE) {
            let idx = col.iamax();
            col[idx] < 0.0
        } else {
            sum < 0.0
        };
        if flip {
            col.neg_mut();
        }
    }
    let col_max = |j: usize| signed.column(j).max();
    let mut order: Vec<usize> = (0..m.ncols()).collect();
    order.sort_by(|&a, &b| col_max(b).total_cmp(&col_max(a)));
    signed.select_columns(&order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_principal_angle, orthonormality_error, random_orthonormal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rotate2(m: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
        let (s, c) = t.sin_cos();
        m * DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    #[test]
    fn single_column_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_orthonormal(5, 1, &mut rng);
        assert_eq!(varimax(&m), m);
    }

    #[test]
    fn basis_columns_are_already_simple() {
        let m = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = varimax(&m);
        assert!((varimax_criterion(&v) - varimax_criterion(&m)).abs() < 1e-12);
        assert!(max_principal_angle(&m, &v) < 1e-12);
        let canon = canonicalize_axes(&v);
        for j in 0..2 {
            let col = canon.column(j);
            assert!((col.amax() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn varimax_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = random_orthonormal(8, 2, &mut rng);
        let v = varimax(&m);
        let best = varimax_criterion(&v);
        assert!(best >= varimax_criterion(&m) - 1e-15);
        for _ in 0..1000 {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            assert!(varimax_criterion(&rotate2(&m, t)) <= best + 1e-12);
        }
        assert!(orthonormality_error(&v) < 1e-12);
        assert!(max_principal_angle(&m, &v) < 1e-12);
    }

    #[test]
    fn varimax_three_columns_improves() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_orthonormal(10, 3, &mut rng);
        let v = varimax(&m);
        assert!(varimax_criterion(&v) >= varimax_criterion(&m));
        assert!(orthonormality_error(&v) < 1e-12);
        assert!(max_principal_angle(&m, &v) < 1e-12);
    }

    #[test]
    fn canonicalize_flips_negative_column() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let c = canonicalize_axes(&m);
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(canonicalize_axes(&c), c);
    }

    #[test]
    fn canonicalize_orders_by_max_entry() {
        let m = DMatrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        let c = canonicalize_axes(&m);
        assert_eq!(c.column(0), m.column(1));
        assert_eq!(c.column(1), m.column(0));
    }

    #[test]
    fn zero_sum_column_uses_largest_entry() {
        let m = DMatrix::from_row_slice(3, 1, &[0.25, -0.5, 0.25]);
        let c = canonicalize_axes(&m);
        assert!(c[(1, 0)] > 0.0);
    }
}
