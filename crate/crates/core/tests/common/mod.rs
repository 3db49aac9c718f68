//! Reference computations and invariant checks shared by the acceptance
//! target and the property tests. The oracles use nalgebra directly and
//! never call into the crate's solvers.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use ulca::backward::{cost_area, cost_dist};
use ulca::linalg::orthonormality_error;
use ulca::session::{Session, Snapshot};
use ulca::solvers::{canonicalize_axes, procrustes_align, varimax};

pub type Check = Result<(), String>;

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn gaussian<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Random orthonormal `d × k` from the QR of a Gaussian matrix.
pub fn orthonormal<R: Rng>(rng: &mut R, d: usize, k: usize) -> DMatrix<f64> {
    gaussian(rng, d, k).qr().q().columns(0, k).into_owned()
}

/// Population covariance of the rows of `x`.
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    centered.transpose() * centered / n
}

/// Top-`k` eigenvectors of a symmetric matrix.
pub fn top_eigvecs(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    DMatrix::from_fn(a.nrows(), k, |r, c| eig.eigenvectors[(r, order[c])])
}

/// Largest principal angle between two column spans, from the sine of the
/// residual so tiny angles stay accurate.
pub fn principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q().columns(0, a.ncols()).into_owned();
    let qb = b.clone().qr().q().columns(0, b.ncols()).into_owned();
    let residual = &qb - &qa * (qa.transpose() * &qb);
    residual.singular_values().amax().min(1.0).asin()
}

fn trace_quad(m: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    (m.transpose() * a * m).trace()
}

/// Trace-ratio maximizer by plain Dinkelbach iteration.
pub fn trace_ratio_oracle(c0: &DMatrix<f64>, c1: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, f64) {
    let mut alpha = 0.0;
    let mut m = top_eigvecs(c0, k);
    for _ in 0..500 {
        m = top_eigvecs(&(c0 - c1 * alpha), k);
        let next = trace_quad(&m, c0) / trace_quad(&m, c1);
        if (next - alpha).abs() <= 1e-15 * next.abs().max(1.0) {
            alpha = next;
            break;
        }
        alpha = next;
    }
    (m, alpha)
}

pub fn check_orthonormal(m: &DMatrix<f64>, tol: f64) -> Check {
    let e = orthonormality_error(m);
    ensure(e <= tol, || format!("‖MᵀM − I‖ = {e:e}"))
}

/// Varimax keeps the span and orthonormality.
pub fn check_varimax(m: &DMatrix<f64>) -> Check {
    let r = varimax(m);
    check_orthonormal(&r, 1e-12)?;
    let angle = principal_angle(m, &r);
    ensure(angle <= 1e-7, || {
        format!("varimax moved the span by {angle:e} rad")
    })?;
    let g = m.transpose() * &r;
    let e = orthonormality_error(&g);
    ensure(e <= 1e-12, || {
        format!("varimax rotation not orthogonal: {e:e}")
    })
}

/// Canonicalization is `M · P · S`: a permutation with sign flips.
pub fn check_canonicalize(m: &DMatrix<f64>) -> Check {
    let c = canonicalize_axes(m);
    let ps = m.transpose() * &c;
    let k = m.ncols();
    for i in 0..k {
        let row_ones = (0..k)
            .filter(|&j| (ps[(i, j)].abs() - 1.0).abs() < 1e-12)
            .count();
        let col_ones = (0..k)
            .filter(|&j| (ps[(j, i)].abs() - 1.0).abs() < 1e-12)
            .count();
        ensure(row_ones == 1 && col_ones == 1, || {
            format!("Mᵀ·canon(M) is not a signed permutation: {ps}")
        })?;
    }
    let zeros = ps.iter().filter(|v| v.abs() < 1e-12).count();
    ensure(zeros == k * k - k, || format!("stray entries in {ps}"))?;
    for col in c.column_iter() {
        let s: f64 = col.sum();
        ensure(s >= -1e-12, || format!("column sum {s} is negative"))?;
    }
    ensure(canonicalize_axes(&c) == c, || {
        "canonicalize is not idempotent".into()
    })
}

/// Procrustes rotation beats random orthogonal competitors.
pub fn check_procrustes<R: Rng>(z_prev: &DMatrix<f64>, z_new: &DMatrix<f64>, rng: &mut R) -> Check {
    let a = procrustes_align(z_prev, z_new).map_err(|e| e.to_string())?;
    check_orthonormal(&a.rotation, 1e-10)?;
    let best = (z_prev - &a.aligned).norm();
    for _ in 0..20 {
        let q = orthonormal(rng, z_new.ncols(), z_new.ncols());
        let other = (z_prev - z_new * q).norm();
        ensure(best <= other + 1e-9 * (1.0 + other), || {
            format!("rotation residual {best} exceeds competitor {other}")
        })?;
    }
    Ok(())
}

/// Distance and area costs stay in `[0, 1]`.
pub fn check_cost_range<R: Rng>(rng: &mut R, c: usize) -> Check {
    let mut sym = |scale: f64| {
        let mut l = vec![vec![0.0; c]; c];
        for i in 0..c {
            for j in (i + 1)..c {
                let v = scale * rng.random::<f64>().powi(3);
                l[i][j] = v;
                l[j][i] = v;
            }
        }
        l
    };
    let ideal = sym(10.0);
    let new = sym(10.0);
    let dist = cost_dist(&ideal, &new).map_err(|e| e.to_string())?;
    ensure((0.0..=1.0).contains(&dist.value), || {
        format!("distance cost {} out of range", dist.value)
    })?;
    let areas = |rng: &mut R| {
        (0..c)
            .map(|_| 1e-6 + 10.0 * rng.random::<f64>())
            .collect::<Vec<_>>()
    };
    let (ai, an) = (areas(rng), areas(rng));
    let k = rng.random_range(0..c);
    let area = cost_area(k, &ai, &an).map_err(|e| e.to_string())?;
    ensure((0.0..=1.0).contains(&area.value), || {
        format!("area cost {} out of range", area.value)
    })
}

/// Snapshot survives JSON bit-for-bit and restores the same view.
pub fn check_snapshot_round_trip(session: &mut Session) -> Check {
    let snap = session.snapshot();
    let text = snap.to_json();
    let back = Snapshot::from_json(&text).map_err(|e| e.to_string())?;
    ensure(back == snap, || "snapshot changed through JSON".into())?;
    let view = session.view();
    session.restore(&back).map_err(|e| e.to_string())?;
    ensure(session.view() == view, || "restored view differs".into())
}
