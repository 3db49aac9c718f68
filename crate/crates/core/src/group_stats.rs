//! Per-group first and second moments of a labeled dataset.
//!
//! All covariances use the population divisor (`n_j`). The statistics do not
//! depend on any model parameter, so they are computed once per dataset and
//! shared by every subsequent fit.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GroupStats {
    /// Global column means.
    pub mean: DVector<f64>,
    /// Per-group column means, one row per group (`c × d`).
    pub group_means: DMatrix<f64>,
    pub counts: Vec<usize>,
    /// Within-group covariance of each group about its own mean.
    pub within: Vec<DMatrix<f64>>,
    /// Rank-one between-group covariance `(μ_j − μ)(μ_j − μ)ᵀ` of each group.
    pub between: Vec<DMatrix<f64>>,
}

impl GroupStats {
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn c(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Weights `n_j / n`.
    pub fn count_weights(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&k| k as f64 / n).collect()
    }

    /// Largest absolute entry over every stored covariance; the reference
    /// scale for "numerically zero" checks.
    pub fn scale(&self) -> f64 {
        self.within
            .iter()
            .chain(&self.between)
            .map(|m| m.amax())
            .fold(0.0, f64::max)
    }
}

pub fn compute_group_stats(data: &Dataset) -> Result<GroupStats> {
    let x = data.x();
    let (n, d) = x.shape();
    let c = data.c();
    let rows = data.group_rows();
    let mean = DVector::from_iterator(d, x.column_iter().map(|col| col.sum() / n as f64));

    let mut group_means = DMatrix::zeros(c, d);
    let mut within = Vec::with_capacity(c);
    let mut between = Vec::with_capacity(c);
    let mut counts = Vec::with_capacity(c);
    for (j, idx) in rows.iter().enumerate() {
        // `Dataset` guarantees nonempty groups.
        let nj = idx.len();
        let mut centered = x.select_rows(idx);
        let mu_j =
            DVector::from_iterator(d, centered.column_iter().map(|col| col.sum() / nj as f64));
        for (mut col, m) in centered.column_iter_mut().zip(mu_j.iter()) {
            col.add_scalar_mut(-m);
        }
        let mut cov = centered.transpose() * &centered;
        cov /= nj as f64;
        within.push(crate::linalg::symmetrize(&cov));

        let delta = &mu_j - &mean;
        between.push(&delta * delta.transpose());
        group_means.set_row(j, &mu_j.transpose());
        counts.push(nj);
    }

    Ok(GroupStats {
        mean,
        group_means,
        counts,
        within,
        between,
    })
}
