//! Confidence ellipses, centroid distances, and ellipse areas of groups in a
//! 2-D embedding.
//!
//! An ellipse at confidence `q` is the level set of the fitted Gaussian
//! containing mass `q`: semi-axes are `sqrt(λ_i · χ²₂(q))` with
//! `χ²₂(q) = −2·ln(1 − q)`. Covariances use the population divisor.
//! Degenerate directions are floored at `1e-6` times the bounding-box
//! diagonal of the whole embedding (or of the points, when used alone).

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UlcaError};

pub const DEFAULT_CONFIDENCE: f64 = 0.5;
const FLOOR_RATIO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipse {
    pub center: [f64; 2],
    /// Principal directions scaled by their semi-axis lengths, major first.
    pub axes: [[f64; 2]; 2],
    pub confidence: f64,
    pub area: f64,
}

impl ConfidenceEllipse {
    pub fn semi_axes(&self) -> [f64; 2] {
        self.axes.map(|a| a[0].hypot(a[1]))
    }

    /// Whether `p` lies inside (or on) the ellipse.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let mut s = 0.0;
        for axis in &self.axes {
            let len2 = axis[0] * axis[0] + axis[1] * axis[1];
            let proj = (dx * axis[0] + dy * axis[1]) / len2;
            s += proj * proj;
        }
        s <= 1.0
    }
}

pub fn chi2_2dof_quantile(confidence: f64) -> f64 {
    -2.0 * (1.0 - confidence).ln()
}

fn bbox_diagonal<'a>(points: impl Iterator<Item = [f64; 2]> + 'a) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if lo[0].is_finite() {
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    } else {
        0.0
    }
}

fn floor_for(diag: f64) -> f64 {
    FLOOR_RATIO * if diag > 0.0 { diag } else { 1.0 }
}

fn rows2(points: &DMatrix<f64>) -> impl Iterator<Item = [f64; 2]> + Clone + '_ {
    points.row_iter().map(|r| [r[0], r[1]])
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(UlcaError::InvalidParams(format!(
            "confidence {confidence} must lie in (0, 1)"
        )))
    }
}

fn ellipse_from_points(
    points: impl Iterator<Item = [f64; 2]> + Clone,
    confidence: f64,
    floor: f64,
) -> ConfidenceEllipse {
    let mut m = 0usize;
    let mut mean = Vector2::zeros();
    for p in points.clone() {
        mean += Vector2::new(p[0], p[1]);
        m += 1;
    }
    mean /= m as f64;
    let mut cov = Matrix2::zeros();
    for p in points {
        let dv = Vector2::new(p[0], p[1]) - mean;
        cov += dv * dv.transpose();
    }
    cov /= m as f64;

    let eig = SymmetricEigen::new(cov);
    let order = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
        [0, 1]
    } else {
        [1, 0]
    };
    let q = chi2_2dof_quantile(confidence);
    let mut axes = [[0.0; 2]; 2];
    let mut lengths = [0.0; 2];
    for (slot, &i) in order.iter().enumerate() {
        let len = (eig.eigenvalues[i].max(0.0) * q).sqrt().max(floor);
        let dir = eig.eigenvectors.column(i);
        axes[slot] = [dir[0] * len, dir[1] * len];
        lengths[slot] = len;
    }
    ConfidenceEllipse {
        center: [mean[0], mean[1]],
        axes,
        confidence,
        area: std::f64::consts::PI * lengths[0] * lengths[1],
    }
}

/// Confidence ellipse of an `m × 2` point set.
pub fn confidence_ellipse(points: &DMatrix<f64>, confidence: f64) -> Result<ConfidenceEllipse> {
    check_confidence(confidence)?;
    if points.ncols() != 2 {
        return Err(UlcaError::DimensionMismatch(format!(
            "ellipses need 2-D points, got {} columns",
            points.ncols()
        )));
    }
    if points.nrows() == 0 {
        return Err(UlcaError::InvalidDataset("no points".into()));
    }
    let floor = floor_for(bbox_diagonal(rows2(points)));
    Ok(ellipse_from_points(rows2(points), confidence, floor))
}

/// Ellipses and centroid distances of every group in a 2-D embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGeometry {
    pub ellipses: Vec<ConfidenceEllipse>,
    /// `c × c`, symmetric with zero diagonal, row-major.
    pub distances: Vec<Vec<f64>>,
}

impl GroupGeometry {
    pub fn c(&self) -> usize {
        self.ellipses.len()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.ellipses.iter().map(|e| e.area).collect()
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.ellipses.iter().map(|e| e.center).collect()
    }
}

pub fn centroid_distances(centers: &[[f64; 2]]) -> Vec<Vec<f64>> {
    let c = centers.len();
    let mut dist = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in (i + 1)..c {
            let v = (centers[i][0] - centers[j][0]).hypot(centers[i][1] - centers[j][1]);
            dist[i][j] = v;
            dist[j][i] = v;
        }
    }
    dist
}

pub fn group_geometry(
    z: &DMatrix<f64>,
    labels: &[usize],
    c: usize,
    confidence: f64,
) -> Result<GroupGeometry> {
    check_confidence(confidence)?;
    if z.ncols() != 2 {
        return Err(UlcaError::DimensionMismatch(format!(
            "group geometry needs a 2-D embedding, got {} columns",
            z.ncols()
        )));
    }
    if labels.len() != z.nrows() {
        return Err(UlcaError::DimensionMismatch(
            "labels do not match rows".into(),
        ));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        if l >= c {
            return Err(UlcaError::InvalidDataset(format!("label {l} out of range")));
        }
        members[l].push(i);
    }
    let floor = floor_for(bbox_diagonal(rows2(z)));
    let mut ellipses = Vec::with_capacity(c);
    for (j, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            return Err(UlcaError::EmptyGroup(j));
        }
        let pts = idx.iter().map(|&i| [z[(i, 0)], z[(i, 1)]]);
        ellipses.push(ellipse_from_points(pts, confidence, floor));
    }
    let distances = centroid_distances(&ellipses.iter().map(|e| e.center).collect::<Vec<_>>());
    Ok(GroupGeometry {
        ellipses,
        distances,
    })
}

/// Mean distance of a group's points from their centroid.
pub fn mean_radius(z: &DMatrix<f64>, labels: &[usize], group: usize) -> f64 {
    let pts: Vec<[f64; 2]> = labels
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l == group)
        .map(|(i, _)| [z[(i, 0)], z[(i, 1)]])
        .collect();
    let m = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / m;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / m;
    pts.iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .sum::<f64>()
        / m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_cloud(m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, 2, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn standard_normal_half_mass() {
        let pts = normal_cloud(10_000, 8);
        let e = confidence_ellipse(&pts, 0.5).unwrap();
        let expect = (2.0f64 * 2.0f64.ln()).sqrt();
        assert!((expect - 1.1774).abs() < 1e-4);
        for s in e.semi_axes() {
            assert!((s - expect).abs() < 0.05, "{s}");
        }
        let inside = rows2(&pts).filter(|p| e.contains(*p)).count() as f64 / 10_000.0;
        assert!((inside - 0.5).abs() <= 0.05, "{inside}");
    }

    #[test]
    fn identical_points_get_floor() {
        let pts = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let e = confidence_ellipse(&pts, 0.5).unwrap();
        assert_eq!(e.center, [1.0, 2.0]);
        assert_eq!(e.semi_axes(), [1e-6, 1e-6]);
        assert!(e.area > 0.0);
    }

    #[test]
    fn collinear_points_have_one_floored_axis() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, 2.0, 2.0]);
        let e = confidence_ellipse(&pts, 0.5).unwrap();
        let [major, minor] = e.semi_axes();
        assert!(major > 0.5);
        assert!((minor - 1e-6 * 8.0f64.sqrt()).abs() < 1e-12);
        let a = e.axes;
        assert!((a[0][0] * a[1][0] + a[0][1] * a[1][1]).abs() < 1e-8);
    }

    #[test]
    fn mirrored_groups_distance() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 1.0, -0.5, -1.0, 0.5, -1.0, -0.5]);
        let g = group_geometry(&z, &[0, 0, 1, 1], 2, 0.5).unwrap();
        assert!((g.distances[0][1] - 2.0).abs() < 1e-15);
        assert_eq!(g.distances[0][0], 0.0);
        assert_eq!(g.distances[1][0], g.distances[0][1]);
    }

    #[test]
    fn translated_copy_has_equal_area() {
        let a = normal_cloud(200, 3);
        let mut z = DMatrix::zeros(400, 2);
        let mut labels = vec![0; 200];
        labels.extend(vec![1; 200]);
        for i in 0..200 {
            z[(i, 0)] = a[(i, 0)];
            z[(i, 1)] = a[(i, 1)];
            z[(200 + i, 0)] = a[(i, 0)] + 3.0;
            z[(200 + i, 1)] = a[(i, 1)] - 4.0;
        }
        let g = group_geometry(&z, &labels, 2, 0.5).unwrap();
        assert!((g.ellipses[0].area - g.ellipses[1].area).abs() < 1e-9 * g.ellipses[0].area);
        assert!((g.distances[0][1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let z = normal_cloud(4, 1);
        assert!(matches!(
            group_geometry(&z, &[0, 0, 0, 0], 2, 0.5),
            Err(UlcaError::EmptyGroup(1))
        ));
        assert!(confidence_ellipse(&z, 1.0).is_err());
        assert!(confidence_ellipse(&DMatrix::zeros(3, 3), 0.5).is_err());
    }
}
