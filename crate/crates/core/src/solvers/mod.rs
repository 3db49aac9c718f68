//! Trace-difference and trace-ratio solvers over orthonormal `d × d′`
//! matrices, plus the post-processing that makes their output reproducible
//! (varimax, sign/order canonicalization, Procrustes alignment).
//!
//! Two backends are available:
//!
//! * [`Backend::Evd`]: top-`d′` eigenvectors of `C0 − αC1`; trace-ratio
//!   problems run a Dinkelbach iteration on top of it.
//! * [`Backend::Manifold`]: Riemannian trust-region ascent on the Grassmann
//!   manifold, optimizing the difference or the ratio directly.
//!
//! Both backends solve the same problems and agree on the optimum value.

mod manifold;
mod procrustes;
mod rotation;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UlcaError};
use crate::linalg::{abs_trace, sym_eigen_desc, symmetrize, trace_quad};

pub use manifold::{rtr_maximize, ManifoldOutcome};
pub use procrustes::{procrustes_align, ProcrustesAlignment};
pub use rotation::{canonicalize_axes, varimax, varimax_criterion};

/// Floor on the default manifold iteration cap. From a generic start the
/// trust-region method needs 10–50 outer iterations for `d ≤ 20`, which a
/// cap of `d` alone would cut short.
pub const MIN_MANIFOLD_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Evd,
    Manifold,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "evd" => Ok(Backend::Evd),
            "manifold" | "man" => Ok(Backend::Manifold),
            other => Err(format!("unknown backend `{other}` (expected evd|manifold)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub backend: Backend,
    /// Outer iteration cap for the manifold backend; `None` means
    /// `max(d, MIN_MANIFOLD_ITERS)`.
    pub max_manifold_iters: Option<usize>,
    pub convergence_tol: f64,
    pub dinkelbach_max_iters: usize,
    pub dinkelbach_tol: f64,
    pub apply_varimax: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: Backend::Evd,
            max_manifold_iters: None,
            convergence_tol: 1e-8,
            dinkelbach_max_iters: 30,
            dinkelbach_tol: 1e-6,
            apply_varimax: true,
        }
    }
}

impl SolverConfig {
    pub fn with_backend(backend: Backend) -> Self {
        SolverConfig {
            backend,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let tol_ok = self.convergence_tol > 0.0 && self.dinkelbach_tol > 0.0;
        let caps_ok =
            self.dinkelbach_max_iters >= 1 && self.max_manifold_iters.is_none_or(|k| k >= 1);
        if tol_ok && caps_ok {
            Ok(())
        } else {
            Err(UlcaError::InvalidParams(
                "solver tolerances must be positive and iteration caps at least 1".into(),
            ))
        }
    }

    fn manifold_cap(&self, d: usize) -> usize {
        self.max_manifold_iters
            .unwrap_or(d.max(MIN_MANIFOLD_ITERS))
            .max(1)
    }
}

/// An orthonormal projection matrix with solver metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// `d × d′`, orthonormal columns.
    pub matrix: DMatrix<f64>,
    /// Final objective: `tr(Mᵀ(C0 − αC1)M)` for difference problems, the
    /// trace ratio for ratio problems.
    pub objective: f64,
    /// The contrast parameter at the solution (the converged ratio in
    /// trace-ratio mode).
    pub alpha_used: f64,
    pub backend: Backend,
    pub iterations: usize,
    /// False when an iteration cap was hit with the residual above ten times
    /// the requested tolerance. The best iterate is still returned.
    pub converged: bool,
}

/// The α sequence and certificates recorded by a Dinkelbach run.
#[derive(Debug, Clone, Default)]
pub struct DinkelbachLog {
    /// `α_0 = 0, α_1, …` in the order they were computed.
    pub alphas: Vec<f64>,
    /// `max tr(Mᵀ(C0 − α_t C1)M)` for each `α_t`.
    pub residuals: Vec<f64>,
    /// `tr|C0| + tr|C1|`, the scale residuals are compared against.
    pub scale: f64,
}

fn check_square(a: &DMatrix<f64>, name: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(UlcaError::DimensionMismatch(format!(
            "{name} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn check_dprime(d: usize, dprime: usize) -> Result<()> {
    if dprime == 0 || dprime > d {
        return Err(UlcaError::DimensionMismatch(format!(
            "target dimension {dprime} must lie in 1..={d}"
        )));
    }
    Ok(())
}

/// Top-`d′` eigenvectors and the sum of their eigenvalues.
fn top_eigenspace(a: &DMatrix<f64>, dprime: usize) -> Result<(DMatrix<f64>, f64)> {
    let (vals, vecs) = sym_eigen_desc(a)?;
    let m = vecs.columns(0, dprime).into_owned();
    let value = vals.rows(0, dprime).sum();
    Ok((m, value))
}

/// Maximizes `tr(MᵀAM)` over orthonormal `M`.
///
/// `alpha_used` is reported as 0; callers solving `C0 − αC1` overwrite it.
pub fn solve_trace_difference(
    a: &DMatrix<f64>,
    dprime: usize,
    cfg: &SolverConfig,
) -> Result<Projection> {
    let d = check_square(a, "A")?;
    check_dprime(d, dprime)?;
    cfg.validate()?;
    let a = symmetrize(a);
    match cfg.backend {
        Backend::Evd => {
            let (m, value) = top_eigenspace(&a, dprime)?;
            Ok(Projection {
                matrix: m,
                objective: value,
                alpha_used: 0.0,
                backend: Backend::Evd,
                iterations: 1,
                converged: true,
            })
        }
        Backend::Manifold => solve_manifold(&TraceObjective::Difference(&a), dprime, cfg),
    }
}

/// Maximizes `tr(MᵀC0M) / tr(MᵀC1M)` over orthonormal `M`.
pub fn solve_trace_ratio(
    c0: &DMatrix<f64>,
    c1: &DMatrix<f64>,
    dprime: usize,
    cfg: &SolverConfig,
) -> Result<Projection> {
    match cfg.backend {
        Backend::Evd => dinkelbach(c0, c1, dprime, cfg).map(|(p, _)| p),
        Backend::Manifold => {
            let d = check_square(c0, "C0")?;
            if check_square(c1, "C1")? != d {
                return Err(UlcaError::DimensionMismatch(
                    "C0 and C1 differ in size".into(),
                ));
            }
            check_dprime(d, dprime)?;
            cfg.validate()?;
            let (c0, c1) = (symmetrize(c0), symmetrize(c1));
            solve_manifold(&TraceObjective::Ratio { c0: &c0, c1: &c1 }, dprime, cfg)
        }
    }
}

/// Dinkelbach iteration with EVD inner solves, returning the α history.
///
/// Starting from `α_0 = 0`, each step takes the top-`d′` eigenspace of
/// `C0 − α_t C1` and sets `α_{t+1}` to the trace ratio on that subspace.
/// Stops once the trace-difference optimum for the current α is within
/// `dinkelbach_tol · (tr|C0| + tr|C1|)` of zero.
pub fn dinkelbach(
    c0: &DMatrix<f64>,
    c1: &DMatrix<f64>,
    dprime: usize,
    cfg: &SolverConfig,
) -> Result<(Projection, DinkelbachLog)> {
    let d = check_square(c0, "C0")?;
    if check_square(c1, "C1")? != d {
        return Err(UlcaError::DimensionMismatch(
            "C0 and C1 differ in size".into(),
        ));
    }
    check_dprime(d, dprime)?;
    cfg.validate()?;
    let c0 = symmetrize(c0);
    let c1 = symmetrize(c1);
    let scale = (abs_trace(&c0) + abs_trace(&c1)).max(f64::MIN_POSITIVE);
    let tol = cfg.dinkelbach_tol * scale;

    let mut log = DinkelbachLog {
        alphas: vec![0.0],
        residuals: Vec::new(),
        scale,
    };
    let mut alpha = 0.0;
    let mut best: Option<(DMatrix<f64>, f64)> = None;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.dinkelbach_max_iters {
        iterations += 1;
        let (m, value) = top_eigenspace(&(&c0 - &c1 * alpha), dprime)?;
        log.residuals.push(value);
        let den = trace_quad(&m, &c1);
        if den <= f64::EPSILON * scale {
            return Err(UlcaError::SingularDenominator);
        }
        let ratio = trace_quad(&m, &c0) / den;
        let improved = best.as_ref().is_none_or(|(_, r)| ratio >= *r);
        if improved {
            best = Some((m, ratio));
        }
        if value.abs() < tol {
            converged = true;
            break;
        }
        // The ratio can only grow; guard against rounding pushing it back.
        alpha = ratio.max(alpha);
        log.alphas.push(alpha);
    }

    let (m, ratio) = best.expect("at least one iteration");
    if !converged {
        let last = log.residuals.last().copied().unwrap_or(0.0).abs();
        converged = last < 10.0 * tol;
    }
    Ok((
        Projection {
            matrix: m,
            objective: ratio,
            alpha_used: ratio,
            backend: Backend::Evd,
            iterations,
            converged,
        },
        log,
    ))
}

/// Objective handed to the manifold backend.
#[derive(Debug, Clone, Copy)]
pub enum TraceObjective<'a> {
    /// Maximize `tr(MᵀAM)`.
    Difference(&'a DMatrix<f64>),
    /// Maximize `tr(MᵀC0M) / tr(MᵀC1M)`.
    Ratio {
        c0: &'a DMatrix<f64>,
        c1: &'a DMatrix<f64>,
    },
}

/// Riemannian trust-region solve on the Grassmann manifold.
pub fn solve_manifold(
    objective: &TraceObjective<'_>,
    dprime: usize,
    cfg: &SolverConfig,
) -> Result<Projection> {
    let d = match objective {
        TraceObjective::Difference(a) => check_square(a, "A")?,
        TraceObjective::Ratio { c0, c1 } => {
            let d = check_square(c0, "C0")?;
            if check_square(c1, "C1")? != d {
                return Err(UlcaError::DimensionMismatch(
                    "C0 and C1 differ in size".into(),
                ));
            }
            d
        }
    };
    check_dprime(d, dprime)?;
    cfg.validate()?;
    let out = rtr_maximize(objective, dprime, cfg.manifold_cap(d), cfg.convergence_tol)?;
    let alpha_used = match objective {
        TraceObjective::Difference(_) => 0.0,
        TraceObjective::Ratio { .. } => out.value,
    };
    Ok(Projection {
        matrix: out.point,
        objective: out.value,
        alpha_used,
        backend: Backend::Manifold,
        iterations: out.iterations,
        converged: out.converged,
    })
}
