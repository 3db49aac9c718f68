//! The ULCA model: weighted covariance assembly, solver dispatch, and the
//! embedding `Z = XM`.
//!
//! ```text
//! C0 = Σ_j w_tg[j]·Cwi_j + Σ_j w_bw[j]·Cbw_j + γ0·I
//! C1 = Σ_j w_bg[j]·Cwi_j + γ1·I
//! ```
//!
//! With `alpha == None` the trace ratio `tr(MᵀC0M)/tr(MᵀC1M)` is maximized;
//! with `Some(α)` the relaxed problem `tr(Mᵀ(C0 − αC1)M)` is solved instead.
//! PCA, cPCA, ccPCA, and LDA are special weight settings, available as
//! constructors on [`UlcaParams`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, UlcaError};
use crate::group_stats::{compute_group_stats, GroupStats};
use crate::solvers::{
    canonicalize_axes, solve_trace_difference, solve_trace_ratio, varimax, Projection, SolverConfig,
};

/// Relative threshold below which a weighted covariance sum counts as zero.
pub const ZERO_SUM_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlcaParams {
    pub w_tg: Vec<f64>,
    pub w_bg: Vec<f64>,
    pub w_bw: Vec<f64>,
    /// Contrast parameter; `None` selects it automatically (trace-ratio mode).
    pub alpha: Option<f64>,
    pub gamma0: f64,
    pub gamma1: f64,
    pub dprime: usize,
}

impl UlcaParams {
    /// All weights zero, automatic α, `d′ = 2`.
    pub fn zeros(c: usize) -> Self {
        UlcaParams {
            w_tg: vec![0.0; c],
            w_bg: vec![0.0; c],
            w_bw: vec![0.0; c],
            alpha: None,
            gamma0: 0.0,
            gamma1: 0.0,
            dprime: 2,
        }
    }

    /// PCA on one group: only that group's within-class variance is
    /// maximized. With a single group this is ordinary PCA.
    pub fn pca(c: usize, target: usize) -> Self {
        let mut p = Self::zeros(c);
        p.w_tg[target] = 1.0;
        p
    }

    /// Contrastive PCA: `target` against every other group as background.
    pub fn cpca(c: usize, target: usize, alpha: Option<f64>) -> Self {
        let mut p = Self::zeros(c);
        p.w_tg[target] = 1.0;
        for j in (0..c).filter(|&j| j != target) {
            p.w_bg[j] = 1.0;
        }
        p.alpha = alpha;
        p
    }

    /// Contrastive PCA for cluster characterization: every group is target,
    /// every group except `target` is background.
    pub fn ccpca(c: usize, target: usize, alpha: Option<f64>) -> Self {
        let mut p = Self::cpca(c, target, alpha);
        p.w_tg = vec![1.0; c];
        p
    }

    /// Trace-ratio LDA with unit weights: between-class spread of every group
    /// over the plain sum of within-group covariances.
    pub fn lda(c: usize) -> Self {
        let mut p = Self::zeros(c);
        p.w_bg = vec![1.0; c];
        p.w_bw = vec![1.0; c];
        p
    }

    /// LDA whose weights are the group proportions `n_j / n`, reproducing the
    /// count-averaged within/between covariances of classical LDA exactly.
    pub fn lda_count_weighted(stats: &GroupStats) -> Self {
        let mut p = Self::zeros(stats.c());
        let w = stats.count_weights();
        p.w_bg = w.clone();
        p.w_bw = w;
        p
    }

    pub fn with_dprime(mut self, dprime: usize) -> Self {
        self.dprime = dprime;
        self
    }

    pub fn with_alpha(mut self, alpha: Option<f64>) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn c(&self) -> usize {
        self.w_tg.len()
    }

    pub fn validate(&self, c: usize, d: usize) -> Result<()> {
        for (name, w) in [
            ("w_tg", &self.w_tg),
            ("w_bg", &self.w_bg),
            ("w_bw", &self.w_bw),
        ] {
            if w.len() != c {
                return Err(UlcaError::DimensionMismatch(format!(
                    "{name} has {} entries for {c} groups",
                    w.len()
                )));
            }
            if let Some(v) = w.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(UlcaError::InvalidParams(format!(
                    "{name} entry {v} outside [0, 1]"
                )));
            }
        }
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if self.alpha.is_some_and(|a| !nonneg(a)) {
            return Err(UlcaError::InvalidParams(
                "alpha must be a finite nonnegative number".into(),
            ));
        }
        if !nonneg(self.gamma0) || !nonneg(self.gamma1) {
            return Err(UlcaError::InvalidParams(
                "gamma0 and gamma1 must be nonnegative".into(),
            ));
        }
        if self.dprime == 0 || self.dprime > d {
            return Err(UlcaError::DimensionMismatch(format!(
                "dprime {} must lie in 1..={d}",
                self.dprime
            )));
        }
        Ok(())
    }
}

/// `C0`, `C1` and the regularizers actually applied.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub c0: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub gamma0_eff: f64,
    pub gamma1_eff: f64,
}

pub fn assemble_c0_c1(stats: &GroupStats, params: &UlcaParams) -> Result<Assembled> {
    let c = stats.c();
    let d = stats.d();
    for (name, w) in [
        ("w_tg", &params.w_tg),
        ("w_bg", &params.w_bg),
        ("w_bw", &params.w_bw),
    ] {
        if w.len() != c {
            return Err(UlcaError::DimensionMismatch(format!(
                "{name} has {} entries for {c} groups",
                w.len()
            )));
        }
    }
    let mut c0 = DMatrix::zeros(d, d);
    let mut c1 = DMatrix::zeros(d, d);
    for j in 0..c {
        if params.w_tg[j] != 0.0 {
            c0 += &stats.within[j] * params.w_tg[j];
        }
        if params.w_bw[j] != 0.0 {
            c0 += &stats.between[j] * params.w_bw[j];
        }
        if params.w_bg[j] != 0.0 {
            c1 += &stats.within[j] * params.w_bg[j];
        }
    }
    let zero_tol = ZERO_SUM_EPS * stats.scale();
    let effective = |sum: &DMatrix<f64>, user: f64| {
        if user == 0.0 && sum.amax() <= zero_tol {
            1.0
        } else {
            user
        }
    };
    let gamma0_eff = effective(&c0, params.gamma0);
    let gamma1_eff = effective(&c1, params.gamma1);
    for i in 0..d {
        c0[(i, i)] += gamma0_eff;
        c1[(i, i)] += gamma1_eff;
    }
    Ok(Assembled {
        c0,
        c1,
        gamma0_eff,
        gamma1_eff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    TraceRatio,
    Relaxed,
}

#[derive(Debug, Clone)]
pub struct UlcaFit {
    pub projection: Projection,
    /// Parameters with effective γ's and the α actually used filled in.
    pub params_used: UlcaParams,
    pub mode: FitMode,
    /// `n × d′` embedding, `X·M`.
    pub embedding: DMatrix<f64>,
}

impl UlcaFit {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.projection.matrix
    }
}

pub fn fit(data: &Dataset, params: &UlcaParams, cfg: &SolverConfig) -> Result<UlcaFit> {
    let stats = compute_group_stats(data)?;
    fit_with_stats(data, &stats, params, cfg)
}

/// Solves for the projection only; no varimax, canonicalization, or
/// embedding.
pub fn solve_projection(
    stats: &GroupStats,
    params: &UlcaParams,
    cfg: &SolverConfig,
) -> Result<(Projection, Assembled)> {
    params.validate(stats.c(), stats.d())?;
    let asm = assemble_c0_c1(stats, params)?;
    let projection = match params.alpha {
        None => solve_trace_ratio(&asm.c0, &asm.c1, params.dprime, cfg)?,
        Some(alpha) => {
            let a = &asm.c0 - &asm.c1 * alpha;
            let mut p = solve_trace_difference(&a, params.dprime, cfg)?;
            p.alpha_used = alpha;
            p
        }
    };
    Ok((projection, asm))
}

/// Fit using precomputed statistics of `data`.
pub fn fit_with_stats(
    data: &Dataset,
    stats: &GroupStats,
    params: &UlcaParams,
    cfg: &SolverConfig,
) -> Result<UlcaFit> {
    if stats.d() != data.d() || stats.c() != data.c() {
        return Err(UlcaError::DimensionMismatch(
            "statistics were computed for a different dataset".into(),
        ));
    }
    let (mut projection, asm) = solve_projection(stats, params, cfg)?;
    if cfg.apply_varimax {
        projection.matrix = varimax(&projection.matrix);
    }
    projection.matrix = canonicalize_axes(&projection.matrix);

    let embedding = data.x() * &projection.matrix;
    let mode = if params.alpha.is_some() {
        FitMode::Relaxed
    } else {
        FitMode::TraceRatio
    };
    let params_used = UlcaParams {
        alpha: Some(projection.alpha_used),
        gamma0: asm.gamma0_eff,
        gamma1: asm.gamma1_eff,
        ..params.clone()
    };
    Ok(UlcaFit {
        projection,
        params_used,
        mode,
        embedding,
    })
}

/// Projects new rows with the fitted matrix.
pub fn transform(fit: &UlcaFit, x_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = fit.matrix();
    if x_new.ncols() != m.nrows() {
        return Err(UlcaError::DimensionMismatch(format!(
            "expected {} columns, got {}",
            m.nrows(),
            x_new.ncols()
        )));
    }
    Ok(x_new * m)
}

/// Attribute loadings of a direction `v` in embedding space: `Mv / ‖v‖`.
pub fn project_axis(fit: &UlcaFit, v: &DVector<f64>) -> Result<DVector<f64>> {
    project_axis_matrix(fit.matrix(), v)
}

pub(crate) fn project_axis_matrix(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != m.ncols() {
        return Err(UlcaError::DimensionMismatch(format!(
            "axis has {} components for a {}-dimensional embedding",
            v.len(),
            m.ncols()
        )));
    }
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(UlcaError::ZeroVector);
    }
    Ok(m * v / norm)
}
