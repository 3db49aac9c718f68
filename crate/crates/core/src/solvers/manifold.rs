//! Riemannian trust-region (RTR) ascent on the Grassmann manifold.
//!
//! Points are represented by orthonormal `d × p` matrices; tangent vectors at
//! `M` satisfy `MᵀΞ = 0`. The retraction is the Q factor of `M + Ξ`. Inner
//! problems are solved with truncated conjugate gradients (Steihaug–Toint)
//! using the exact Riemannian Hessian of the trace objectives.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TraceObjective;
use crate::error::{Result, UlcaError};
use crate::linalg::{orthonormalize, random_orthonormal, trace_quad};

const INIT_SEED: u64 = 0x0005_eed0_u64;

#[derive(Debug, Clone)]
pub struct ManifoldOutcome {
    pub point: DMatrix<f64>,
    /// Objective value (to be maximized) at `point`.
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Orthogonal projection onto the horizontal space at `m`.
fn project(m: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    z - m * (m.transpose() * z)
}

fn retract(m: &DMatrix<f64>, xi: &DMatrix<f64>) -> DMatrix<f64> {
    orthonormalize(&(m + xi))
}

/// Euclidean quantities of the maximized objective at one point. Everything
/// downstream works with the negated (minimized) cost.
struct Local {
    value: f64,
    egrad: DMatrix<f64>,
    // Cached products for Hessian-vector evaluation.
    aux: Aux,
}

enum Aux {
    Difference,
    Ratio { den: f64, c1m: DMatrix<f64> },
}

impl TraceObjective<'_> {
    fn dim(&self) -> usize {
        match self {
            TraceObjective::Difference(a) => a.nrows(),
            TraceObjective::Ratio { c0, .. } => c0.nrows(),
        }
    }

    fn evaluate(&self, m: &DMatrix<f64>) -> Result<Local> {
        match self {
            TraceObjective::Difference(a) => {
                let am = *a * m;
                let value = am.component_mul(m).sum();
                Ok(Local {
                    value,
                    egrad: am * 2.0,
                    aux: Aux::Difference,
                })
            }
            TraceObjective::Ratio { c0, c1 } => {
                let c0m = *c0 * m;
                let c1m = *c1 * m;
                let num = c0m.component_mul(m).sum();
                let den = c1m.component_mul(m).sum();
                if den <= f64::EPSILON * c1.amax().max(f64::MIN_POSITIVE) {
                    return Err(UlcaError::SingularDenominator);
                }
                let value = num / den;
                let egrad = (c0m - &c1m * value) * (2.0 / den);
                Ok(Local {
                    value,
                    egrad,
                    aux: Aux::Ratio { den, c1m },
                })
            }
        }
    }

    fn value(&self, m: &DMatrix<f64>) -> Result<f64> {
        match self {
            TraceObjective::Difference(a) => Ok(trace_quad(m, a)),
            TraceObjective::Ratio { c0, c1 } => {
                let den = trace_quad(m, c1);
                if den <= f64::EPSILON * c1.amax().max(f64::MIN_POSITIVE) {
                    return Err(UlcaError::SingularDenominator);
                }
                Ok(trace_quad(m, c0) / den)
            }
        }
    }

    /// Euclidean Hessian of the maximized objective applied to `e`.
    fn ehess(&self, local: &Local, e: &DMatrix<f64>) -> DMatrix<f64> {
        match (self, &local.aux) {
            (TraceObjective::Difference(a), _) => (*a * e) * 2.0,
            (TraceObjective::Ratio { c0, c1 }, Aux::Ratio { den, c1m }) => {
                let f = local.value;
                let df = inner(&local.egrad, e);
                let dden = 2.0 * inner(c1m, e);
                let first = (*c0 * e - (*c1 * e) * f - c1m * df) * (2.0 / den);
                first - &local.egrad * (dden / den)
            }
            (TraceObjective::Ratio { .. }, Aux::Difference) => unreachable!(),
        }
    }

    /// Magnitude against which the gradient norm is judged.
    fn grad_scale(&self, local: &Local) -> f64 {
        let s = match (self, &local.aux) {
            (TraceObjective::Difference(a), _) => a.norm(),
            (TraceObjective::Ratio { c0, c1 }, Aux::Ratio { den, .. }) => {
                (c0.norm() + local.value.abs() * c1.norm()) / den
            }
            _ => unreachable!(),
        };
        s.max(f64::MIN_POSITIVE)
    }
}

/// Riemannian Hessian of the minimized cost (`−objective`) along `xi`.
fn rhess(
    obj: &TraceObjective<'_>,
    m: &DMatrix<f64>,
    local: &Local,
    xi: &DMatrix<f64>,
) -> DMatrix<f64> {
    let eh = obj.ehess(local, xi);
    let correction = xi * (m.transpose() * &local.egrad);
    // Negate: we minimize −f.
    -(project(m, &eh) - correction)
}

struct TcgStep {
    eta: DMatrix<f64>,
    heta: DMatrix<f64>,
    hit_boundary: bool,
}

/// Steihaug–Toint truncated CG for `min ⟨g,η⟩ + ½⟨Hη,η⟩, ‖η‖ ≤ Δ`.
fn truncated_cg(
    obj: &TraceObjective<'_>,
    m: &DMatrix<f64>,
    local: &Local,
    grad: &DMatrix<f64>,
    radius: f64,
    max_inner: usize,
) -> TcgStep {
    const KAPPA: f64 = 0.1;
    const THETA: f64 = 1.0;

    let (d, p) = m.shape();
    let mut eta = DMatrix::zeros(d, p);
    let mut heta = DMatrix::zeros(d, p);
    let mut r = grad.clone();
    let mut r_r = inner(&r, &r);
    let norm_r0 = r_r.sqrt();
    let mut delta = -r.clone();
    let mut e_pe = 0.0;
    let mut e_pd = 0.0;
    let mut d_pd = r_r;

    for _ in 0..max_inner.max(1) {
        let hd = rhess(obj, m, local, &delta);
        let d_hd = inner(&delta, &hd);
        let alpha = r_r / d_hd;
        let e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha * alpha * d_pd;
        if d_hd <= 0.0 || e_pe_new >= radius * radius {
            let tau = (-e_pd
                + (e_pd * e_pd + d_pd * (radius * radius - e_pe))
                    .max(0.0)
                    .sqrt())
                / d_pd;
            eta += &delta * tau;
            heta += &hd * tau;
            return TcgStep {
                eta,
                heta,
                hit_boundary: true,
            };
        }
        eta += &delta * alpha;
        heta += &hd * alpha;
        e_pe = e_pe_new;
        r += &hd * alpha;
        r = project(m, &r);
        let r_r_new = inner(&r, &r);
        let norm_r = r_r_new.sqrt();
        if norm_r <= norm_r0 * norm_r0.powf(THETA).min(KAPPA) {
            break;
        }
        let beta = r_r_new / r_r;
        delta = project(m, &(&delta * beta - &r));
        e_pd = beta * (e_pd + alpha * d_pd);
        d_pd = r_r_new + beta * beta * d_pd;
        r_r = r_r_new;
    }
    TcgStep {
        eta,
        heta,
        hit_boundary: false,
    }
}

/// Maximizes a trace objective over the Grassmann manifold of `p`-planes.
///
/// Starts from a fixed pseudo-random orthonormal point so results are
/// reproducible. Stops when the Riemannian gradient norm falls below
/// `tol` relative to the objective's scale, or after `max_iters` outer
/// iterations.
pub fn rtr_maximize(
    obj: &TraceObjective<'_>,
    p: usize,
    max_iters: usize,
    tol: f64,
) -> Result<ManifoldOutcome> {
    let d = obj.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(INIT_SEED);
    let mut m = random_orthonormal(d, p, &mut rng);

    let max_radius = std::f64::consts::FRAC_PI_2 * (p as f64).sqrt();
    let mut radius = max_radius / 8.0;
    let max_inner = (p * (d - p)).max(1);

    let mut local = obj.evaluate(&m)?;
    let mut grad = -project(&m, &local.egrad);
    let mut grad_norm = grad.norm();
    let mut iterations = 0;

    while iterations < max_iters {
        if grad_norm <= tol * obj.grad_scale(&local) {
            break;
        }
        iterations += 1;
        let step = truncated_cg(obj, &m, &local, &grad, radius, max_inner);
        let candidate = retract(&m, &step.eta);
        let cand_value = obj.value(&candidate)?;

        let f = -local.value;
        let f_new = -cand_value;
        let model_decrease = -(inner(&grad, &step.eta) + 0.5 * inner(&step.heta, &step.eta));
        let reg = 1e3 * f64::EPSILON * f.abs().max(1.0);
        let rho = (f - f_new + reg) / (model_decrease + reg);

        if rho < 0.25 || !rho.is_finite() {
            radius *= 0.25;
        } else if rho > 0.75 && step.hit_boundary {
            radius = (2.0 * radius).min(max_radius);
        }
        if rho > 0.1 && rho.is_finite() {
            m = candidate;
            local = obj.evaluate(&m)?;
            grad = -project(&m, &local.egrad);
            grad_norm = grad.norm();
        }
        if radius < 1e-14 {
            break;
        }
    }

    let scale = obj.grad_scale(&local);
    Ok(ManifoldOutcome {
        value: local.value,
        point: m,
        grad_norm,
        iterations,
        converged: grad_norm <= 10.0 * tol * scale,
    })
}
