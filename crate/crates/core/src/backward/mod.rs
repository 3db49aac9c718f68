//! Backward parameter selection: find ULCA weights and α whose embedding
//! reproduces a gesture made on the current embedding.
//!
//! A gesture fixes ideal centroid distances `l′` and ellipse areas `a′`. The
//! cost of a candidate θ is `r_dist·J_dist + r_area·J_area` measured on the
//! relaxed fit with that θ, and it is minimized with [`cobyla::minimize_box`]
//! over `[0,1]^(3c+1)`: the three weight vectors plus `u = (log10 α + 3)/6`.

pub mod cobyla;
pub mod eval;

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, UlcaError};
use crate::geometry::{centroid_distances, group_geometry, GroupGeometry};
use crate::group_stats::GroupStats;
use crate::model::{solve_projection, UlcaParams};
use crate::solvers::{Backend, SolverConfig};
use cobyla::{minimize_box, BoxOptions, StopReason};

pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 1e3;
/// Progress callbacks fire after this many evaluations.
pub const PROGRESS_EVERY: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    MoveCentroid,
    ScaleEllipse,
}

/// A raw gesture in display coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gesture {
    Move { group: usize, x: f64, y: f64 },
    Scale { group: usize, factor: f64 },
}

impl Gesture {
    pub fn group(&self) -> usize {
        match *self {
            Gesture::Move { group, .. } | Gesture::Scale { group, .. } => group,
        }
    }

    pub fn kind(&self) -> InteractionKind {
        match self {
            Gesture::Move { .. } => InteractionKind::MoveCentroid,
            Gesture::Scale { .. } => InteractionKind::ScaleEllipse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub kind: InteractionKind,
    pub target: usize,
    pub ideal_distances: Vec<Vec<f64>>,
    pub ideal_areas: Vec<f64>,
    /// Confidence level the ideal areas were measured at.
    pub confidence: f64,
}

impl InteractionSpec {
    /// Ideal geometry after applying `gesture` to `geom`.
    pub fn from_gesture(geom: &GroupGeometry, gesture: &Gesture) -> Result<Self> {
        let c = geom.c();
        let k = gesture.group();
        if k >= c {
            return Err(UlcaError::InvalidParams(format!(
                "group {k} out of range for {c} groups"
            )));
        }
        let mut centers = geom.centers();
        let mut areas = geom.areas();
        match *gesture {
            Gesture::Move { x, y, .. } => {
                if !x.is_finite() || !y.is_finite() {
                    return Err(UlcaError::InvalidParams(
                        "gesture target must be finite".into(),
                    ));
                }
                centers[k] = [x, y];
            }
            Gesture::Scale { factor, .. } => {
                if !(factor > 0.0) || !factor.is_finite() {
                    return Err(UlcaError::InvalidParams(format!(
                        "scale factor {factor} must be positive"
                    )));
                }
                areas[k] *= factor * factor;
            }
        }
        let spec = InteractionSpec {
            kind: gesture.kind(),
            target: k,
            ideal_distances: centroid_distances(&centers),
            ideal_areas: areas,
            confidence: geom.ellipses.first().map_or(0.5, |e| e.confidence),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn c(&self) -> usize {
        self.ideal_areas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.c();
        if self.target >= c {
            return Err(UlcaError::InvalidParams("target group out of range".into()));
        }
        if self.ideal_distances.len() != c || self.ideal_distances.iter().any(|r| r.len() != c) {
            return Err(UlcaError::DimensionMismatch(
                "ideal distances must be c × c".into(),
            ));
        }
        for i in 0..c {
            if self.ideal_distances[i][i] != 0.0 {
                return Err(UlcaError::InvalidParams(
                    "ideal distances need a zero diagonal".into(),
                ));
            }
            for j in 0..c {
                let v = self.ideal_distances[i][j];
                if !(v >= 0.0) || v != self.ideal_distances[j][i] {
                    return Err(UlcaError::InvalidParams(
                        "ideal distances must be symmetric and nonnegative".into(),
                    ));
                }
            }
        }
        if let Some(i) = self
            .ideal_areas
            .iter()
            .position(|a| !(*a > 0.0) || !a.is_finite())
        {
            return Err(UlcaError::NonPositiveArea(i));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackwardConfig {
    pub r_dist: f64,
    pub r_area: f64,
    /// Evaluation budget `m`.
    pub max_iters: usize,
    pub rho_init: f64,
    pub rho_final: f64,
}

impl BackwardConfig {
    pub fn for_kind(kind: InteractionKind) -> Self {
        let (r_dist, r_area) = match kind {
            InteractionKind::MoveCentroid => (0.8, 0.2),
            InteractionKind::ScaleEllipse => (0.2, 0.8),
        };
        BackwardConfig {
            r_dist,
            r_area,
            max_iters: 40,
            rho_init: 0.25,
            rho_final: 1e-4,
        }
    }

    pub fn with_max_iters(mut self, m: usize) -> Self {
        self.max_iters = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_dist >= 0.0 && self.r_area >= 0.0)
            || (self.r_dist + self.r_area - 1.0).abs() > 1e-12
        {
            return Err(UlcaError::InvalidParams(
                "r_dist and r_area must be nonnegative and sum to 1".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(UlcaError::InvalidParams(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.rho_init > 0.0
            && self.rho_final > 0.0
            && self.rho_final <= self.rho_init
            && self.rho_init <= 0.5)
        {
            return Err(UlcaError::InvalidParams(
                "need 0 < rho_final ≤ rho_init ≤ 0.5".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistCost {
    pub value: f64,
    pub raw: f64,
    /// Every ideal distance was zero; the cost is reported as 0.
    pub degenerate: bool,
}

/// Strain-style distance cost `√(Σ(l′−l̂)² / Σl′²)`, clamped to `[0, 1]`.
pub fn cost_dist(l_ideal: &[Vec<f64>], l_new: &[Vec<f64>]) -> Result<DistCost> {
    if l_ideal.len() != l_new.len() || l_ideal.iter().zip(l_new).any(|(a, b)| a.len() != b.len()) {
        return Err(UlcaError::DimensionMismatch(
            "distance matrices differ in shape".into(),
        ));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rb) in l_ideal.iter().zip(l_new) {
        for (a, b) in ra.iter().zip(rb) {
            num += (a - b) * (a - b);
            den += a * a;
        }
    }
    if den == 0.0 {
        return Ok(DistCost {
            value: 0.0,
            raw: 0.0,
            degenerate: true,
        });
    }
    let raw = (num / den).sqrt();
    Ok(DistCost {
        value: raw.min(1.0),
        raw,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaCost {
    pub value: f64,
    pub raw: f64,
}

/// Mean relative error of the target group's area ratios, clamped to `[0, 1]`.
pub fn cost_area(k: usize, a_ideal: &[f64], a_new: &[f64]) -> Result<AreaCost> {
    let c = a_ideal.len();
    if a_new.len() != c || k >= c {
        return Err(UlcaError::DimensionMismatch(
            "area vectors differ in shape".into(),
        ));
    }
    for (i, (a, b)) in a_ideal.iter().zip(a_new).enumerate() {
        if !(*a > 0.0) || !(*b > 0.0) {
            return Err(UlcaError::NonPositiveArea(i));
        }
    }
    let mut sum = 0.0;
    for i in 0..c {
        let ideal = a_ideal[k] / a_ideal[i];
        let new = a_new[k] / a_new[i];
        sum += (ideal - new).abs() / ideal;
    }
    let raw = sum / c as f64;
    Ok(AreaCost {
        value: raw.min(1.0),
        raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub dist: f64,
    pub area: f64,
    pub dist_raw: f64,
    pub area_raw: f64,
    /// The fit or geometry failed and the cost was set to 1.
    pub failed: bool,
}

impl CostBreakdown {
    fn failure() -> Self {
        CostBreakdown {
            total: 1.0,
            dist: 1.0,
            area: 1.0,
            dist_raw: f64::NAN,
            area_raw: f64::NAN,
            failed: true,
        }
    }
}

/// Solver settings used for every fit inside the search.
pub fn inner_solver_config() -> SolverConfig {
    SolverConfig {
        apply_varimax: false,
        ..SolverConfig::with_backend(Backend::Evd)
    }
}

/// Relaxed embedding for `theta` without varimax or canonicalization, which
/// leave distances and areas unchanged.
pub fn relaxed_embedding(
    data: &Dataset,
    stats: &GroupStats,
    theta: &UlcaParams,
) -> Result<DMatrix<f64>> {
    if theta.alpha.is_none() {
        return Err(UlcaError::InvalidParams(
            "backward selection needs a fixed alpha".into(),
        ));
    }
    let (projection, _) = solve_projection(stats, theta, &inner_solver_config())?;
    Ok(data.x() * projection.matrix)
}

/// Weighted cost of `theta` for `spec`. Failures are reported as cost 1.
pub fn total_cost(
    spec: &InteractionSpec,
    cfg: &BackwardConfig,
    theta: &UlcaParams,
    data: &Dataset,
    stats: &GroupStats,
) -> CostBreakdown {
    let evaluate = || -> Result<CostBreakdown> {
        let z = relaxed_embedding(data, stats, theta)?;
        if z.ncols() != 2 {
            return Err(UlcaError::DimensionMismatch(
                "gestures need a 2-D embedding".into(),
            ));
        }
        let geom = group_geometry(&z, data.labels(), data.c(), spec.confidence)?;
        let dist = cost_dist(&spec.ideal_distances, &geom.distances)?;
        let area = cost_area(spec.target, &spec.ideal_areas, &geom.areas())?;
        let total = (cfg.r_dist * dist.value + cfg.r_area * area.value).clamp(0.0, 1.0);
        Ok(CostBreakdown {
            total,
            dist: dist.value,
            area: area.value,
            dist_raw: dist.raw,
            area_raw: area.raw,
            failed: false,
        })
    };
    match evaluate() {
        Ok(b) if b.total.is_finite() => b,
        _ => CostBreakdown::failure(),
    }
}

/// Maps parameters to and from the unit box searched by the optimizer.
/// `γ0`, `γ1` and `d′` are carried over unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCodec {
    c: usize,
    template: UlcaParams,
}

impl ThetaCodec {
    pub fn new(template: &UlcaParams) -> Self {
        ThetaCodec {
            c: template.c(),
            template: template.clone(),
        }
    }

    pub fn len(&self) -> usize {
        3 * self.c + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// α is clamped into `[ALPHA_MIN, ALPHA_MAX]`; a missing α encodes as 1.
    pub fn encode(&self, p: &UlcaParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        for w in [&p.w_tg, &p.w_bg, &p.w_bw] {
            x.extend(w.iter().map(|v| v.clamp(0.0, 1.0)));
        }
        let alpha = p.alpha.unwrap_or(1.0).clamp(ALPHA_MIN, ALPHA_MAX);
        x.push(((alpha.log10() + 3.0) / 6.0).clamp(0.0, 1.0));
        x
    }

    pub fn decode(&self, x: &[f64]) -> UlcaParams {
        let c = self.c;
        let u = x[3 * c].clamp(0.0, 1.0);
        UlcaParams {
            w_tg: x[..c].to_vec(),
            w_bg: x[c..2 * c].to_vec(),
            w_bw: x[2 * c..3 * c].to_vec(),
            alpha: Some(10f64.powf(6.0 * u - 3.0)),
            ..self.template.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardResult {
    pub params: UlcaParams,
    pub cost: f64,
    pub cost_init: f64,
    /// Cost evaluations performed (each one is a fit).
    pub iterations: usize,
    /// Incumbent best `(θ, cost)` after each evaluation, in the unit box.
    pub trace: Vec<(Vec<f64>, f64)>,
    pub stop: StopReason,
}

impl BackwardResult {
    pub fn cancelled(&self) -> bool {
        self.stop == StopReason::Cancelled
    }
}

/// Minimizes `f` over θ starting from `theta0`.
pub fn cobyla_minimize(
    mut f: impl FnMut(&UlcaParams) -> f64,
    theta0: &UlcaParams,
    cfg: &BackwardConfig,
    control: &mut RunControl<'_>,
) -> Result<BackwardResult> {
    cfg.validate()?;
    let codec = ThetaCodec::new(theta0);
    let x0 = codec.encode(theta0);
    let opts = BoxOptions {
        rho_init: cfg.rho_init,
        rho_final: cfg.rho_final,
        max_evals: cfg.max_iters,
    };
    let cancel = control.cancel;
    let progress = &mut control.progress;
    let out = minimize_box(
        |x| f(&codec.decode(x)),
        &x0,
        0.0,
        1.0,
        &opts,
        || cancel.is_none_or(|c| !c.load(Ordering::Relaxed)),
        |evals, best| {
            if evals % PROGRESS_EVERY == 0 {
                if let Some(p) = progress.as_mut() {
                    p(Progress {
                        evaluations: evals,
                        best_cost: best,
                    });
                }
            }
        },
    );
    // Unchanged θ keeps the caller's exact values, including an α outside
    // the searched range.
    let params = if out.x == x0 {
        theta0.clone()
    } else {
        codec.decode(&out.x)
    };
    Ok(BackwardResult {
        params,
        cost: out.f,
        cost_init: out.f_init,
        iterations: out.evals,
        trace: out.trace,
        stop: out.stop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Progress {
    pub evaluations: usize,
    pub best_cost: f64,
}

/// Cancellation flag and progress sink for a run.
#[derive(Default)]
pub struct RunControl<'a> {
    pub cancel: Option<&'a AtomicBool>,
    pub progress: Option<Box<dyn FnMut(Progress) + Send + 'a>>,
}

/// Searches θ for the gesture `spec`, starting from `theta0` (which must
/// carry a fixed α, normally the one used by the displayed fit).
pub fn backward_select(
    spec: &InteractionSpec,
    data: &Dataset,
    stats: &GroupStats,
    theta0: &UlcaParams,
    cfg: &BackwardConfig,
    control: &mut RunControl<'_>,
) -> Result<BackwardResult> {
    spec.validate()?;
    if spec.c() != data.c() {
        return Err(UlcaError::DimensionMismatch(
            "gesture and dataset disagree on groups".into(),
        ));
    }
    theta0.validate(data.c(), data.d())?;
    if theta0.dprime != 2 {
        return Err(UlcaError::DimensionMismatch(
            "gestures need a 2-D embedding".into(),
        ));
    }
    let theta0 = UlcaParams {
        alpha: Some(theta0.alpha.unwrap_or(1.0)),
        ..theta0.clone()
    };
    cobyla_minimize(
        |t| total_cost(spec, cfg, t, data, stats).total,
        &theta0,
        cfg,
        control,
    )
}

/// `(e_init − e) / (e_init − e_opt)`, or `None` when no improvement was
/// possible.
pub fn accuracy(e_init: f64, e: f64, e_opt: f64) -> Option<f64> {
    let span = e_init - e_opt;
    if span <= cobyla::ZERO_COST {
        None
    } else {
        Some((e_init - e) / span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConfidenceEllipse;
    use crate::group_stats::compute_group_stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn square(c: usize, off: f64) -> Vec<Vec<f64>> {
        (0..c)
            .map(|i| (0..c).map(|j| if i == j { 0.0 } else { off }).collect())
            .collect()
    }

    #[test]
    fn dist_cost_examples() {
        assert_eq!(
            cost_dist(&square(3, 2.0), &square(3, 2.0)).unwrap().value,
            0.0
        );
        let at_bound = cost_dist(&square(2, 1.0), &square(2, 2.0)).unwrap();
        assert!((at_bound.value - 1.0).abs() < 1e-15);
        let half = cost_dist(&square(2, 1.0), &square(2, 0.5)).unwrap();
        assert!((half.value - 0.5).abs() < 1e-15);
        let over = cost_dist(&square(2, 1.0), &square(2, 3.0)).unwrap();
        assert_eq!(over.value, 1.0);
        assert!((over.raw - 2.0).abs() < 1e-15);
        let zero = cost_dist(&square(2, 0.0), &square(2, 1.0)).unwrap();
        assert!(zero.degenerate && zero.value == 0.0);
    }

    #[test]
    fn area_cost_examples() {
        assert_eq!(
            cost_area(1, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])
                .unwrap()
                .value,
            0.0
        );
        // k is the first group here (0-based).
        let v = cost_area(0, &[2.0, 1.0], &[1.0, 1.0]).unwrap().value;
        assert!((v - 0.25).abs() < 1e-15);
        let scaled = cost_area(1, &[1.0, 2.0, 4.0], &[3.0, 6.0, 12.0])
            .unwrap()
            .value;
        assert!(scaled.abs() < 1e-15);
        assert!(matches!(
            cost_area(0, &[1.0, 0.0], &[1.0, 1.0]),
            Err(UlcaError::NonPositiveArea(1))
        ));
    }

    #[test]
    fn codec_round_trip() {
        let p = UlcaParams {
            w_tg: vec![0.1, 0.9],
            w_bg: vec![0.0, 1.0],
            w_bw: vec![0.5, 0.25],
            alpha: Some(10.0),
            gamma0: 0.0,
            gamma1: 0.3,
            dprime: 2,
        };
        let codec = ThetaCodec::new(&p);
        let x = codec.encode(&p);
        assert_eq!(x.len(), 7);
        assert!((x[6] - 4.0 / 6.0).abs() < 1e-15);
        let back = codec.decode(&x);
        assert!((back.alpha.unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(back.w_bw, p.w_bw);
        assert_eq!(back.gamma1, 0.3);
        assert_eq!(codec.encode(&p.clone().with_alpha(Some(0.0)))[6], 0.0);
    }

    fn two_groups(seed: u64) -> (Dataset, GroupStats) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d) = (200, 5);
        let mut x = DMatrix::zeros(n, d);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        for i in 0..n {
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                let spread = if labels[i] == 0 {
                    1.0 + j as f64
                } else {
                    3.0 - 0.4 * j as f64
                };
                x[(i, j)] = z * spread + if labels[i] == 0 { 1.0 } else { -1.0 };
            }
        }
        let data = Dataset::from_parts(x, labels).unwrap();
        let stats = compute_group_stats(&data).unwrap();
        (data, stats)
    }

    fn start_params() -> UlcaParams {
        UlcaParams {
            w_tg: vec![0.7, 0.4],
            w_bg: vec![0.3, 0.6],
            w_bw: vec![0.5, 0.5],
            alpha: Some(1.0),
            gamma0: 0.0,
            gamma1: 0.0,
            dprime: 2,
        }
    }

    #[test]
    fn identity_gesture_is_fixed_point() {
        let (data, stats) = two_groups(1);
        let theta0 = start_params();
        let z = relaxed_embedding(&data, &stats, &theta0).unwrap();
        let geom = group_geometry(&z, data.labels(), 2, 0.5).unwrap();
        let spec = InteractionSpec::from_gesture(
            &geom,
            &Gesture::Scale {
                group: 1,
                factor: 1.0,
            },
        )
        .unwrap();
        let cfg = BackwardConfig::for_kind(spec.kind);
        let res = backward_select(
            &spec,
            &data,
            &stats,
            &theta0,
            &cfg,
            &mut RunControl::default(),
        )
        .unwrap();
        assert_eq!(res.cost_init, 0.0);
        assert_eq!(res.cost, 0.0);
        assert_eq!(res.params, theta0);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn scale_gesture_moves_ratio_toward_ideal() {
        let (data, stats) = two_groups(2);
        let theta0 = start_params();
        let z0 = relaxed_embedding(&data, &stats, &theta0).unwrap();
        let geom0 = group_geometry(&z0, data.labels(), 2, 0.5).unwrap();
        let k = 0;
        let spec = InteractionSpec::from_gesture(
            &geom0,
            &Gesture::Scale {
                group: k,
                factor: 2.0,
            },
        )
        .unwrap();
        let cfg = BackwardConfig::for_kind(spec.kind);
        let res = backward_select(
            &spec,
            &data,
            &stats,
            &theta0,
            &cfg,
            &mut RunControl::default(),
        )
        .unwrap();
        assert!(res.cost < res.cost_init);

        let z1 = relaxed_embedding(&data, &stats, &res.params).unwrap();
        let geom1 = group_geometry(&z1, data.labels(), 2, 0.5).unwrap();
        let ratio = |g: &GroupGeometry| g.ellipses[k].area / g.ellipses[1 - k].area;
        let ideal = (spec.ideal_areas[k] / spec.ideal_areas[1 - k]).ln();
        let before = (ratio(&geom0).ln() - ideal).abs();
        let after = (ratio(&geom1).ln() - ideal).abs();
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn trace_is_monotone_and_cost_in_range() {
        let (data, stats) = two_groups(3);
        let theta0 = start_params();
        let z = relaxed_embedding(&data, &stats, &theta0).unwrap();
        let geom = group_geometry(&z, data.labels(), 2, 0.5).unwrap();
        let c1 = geom.ellipses[1].center;
        let spec = InteractionSpec::from_gesture(
            &geom,
            &Gesture::Move {
                group: 0,
                x: c1[0] + 0.5,
                y: c1[1],
            },
        )
        .unwrap();
        let cfg = BackwardConfig::for_kind(spec.kind);
        let mut seen = Vec::new();
        let mut control = RunControl {
            cancel: None,
            progress: Some(Box::new(|p: Progress| seen.push(p.evaluations))),
        };
        let res = backward_select(&spec, &data, &stats, &theta0, &cfg, &mut control).unwrap();
        drop(control);
        assert!(res.trace.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!(res.cost <= res.cost_init + 1e-12);
        assert!(res.trace.iter().all(|t| (0.0..=1.0).contains(&t.1)));
        assert!(res.iterations <= 40);
        assert!(seen.iter().all(|e| e % PROGRESS_EVERY == 0) && !seen.is_empty());
    }

    #[test]
    fn random_theta_costs_stay_in_unit_interval() {
        let (data, stats) = two_groups(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = relaxed_embedding(&data, &stats, &start_params()).unwrap();
        let geom = group_geometry(&z, data.labels(), 2, 0.5).unwrap();
        for _ in 0..1000 {
            let gesture = if rng.random_bool(0.5) {
                Gesture::Move {
                    group: rng.random_range(0..2),
                    x: rng.random_range(-10.0..10.0),
                    y: rng.random_range(-10.0..10.0),
                }
            } else {
                Gesture::Scale {
                    group: rng.random_range(0..2),
                    factor: rng.random_range(0.1..10.0),
                }
            };
            let spec = InteractionSpec::from_gesture(&geom, &gesture).unwrap();
            let codec = ThetaCodec::new(&start_params());
            let x: Vec<f64> = (0..codec.len()).map(|_| rng.random::<f64>()).collect();
            let cfg = BackwardConfig::for_kind(spec.kind);
            let cost = total_cost(&spec, &cfg, &codec.decode(&x), &data, &stats);
            assert!((0.0..=1.0).contains(&cost.total), "{cost:?}");
        }
    }

    #[test]
    fn dist_only_weights_match_dist_cost() {
        let (data, stats) = two_groups(5);
        let theta = start_params();
        let z = relaxed_embedding(&data, &stats, &theta).unwrap();
        let geom = group_geometry(&z, data.labels(), 2, 0.5).unwrap();
        let spec = InteractionSpec::from_gesture(
            &geom,
            &Gesture::Move {
                group: 1,
                x: 0.0,
                y: 0.0,
            },
        )
        .unwrap();
        let cfg = BackwardConfig {
            r_dist: 1.0,
            r_area: 0.0,
            ..BackwardConfig::for_kind(InteractionKind::MoveCentroid)
        };
        let total = total_cost(&spec, &cfg, &theta, &data, &stats);
        let direct = cost_dist(&spec.ideal_distances, &geom.distances).unwrap();
        assert!((total.total - direct.value).abs() < 1e-12);
    }

    #[test]
    fn spec_from_move_rewrites_target_row() {
        let e = |x: f64| ConfidenceEllipse {
            center: [x, 0.0],
            axes: [[1.0, 0.0], [0.0, 1.0]],
            confidence: 0.5,
            area: std::f64::consts::PI,
        };
        let geom = GroupGeometry {
            ellipses: vec![e(0.0), e(1.0), e(3.0)],
            distances: centroid_distances(&[[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]]),
        };
        let spec = InteractionSpec::from_gesture(
            &geom,
            &Gesture::Move {
                group: 2,
                x: 0.0,
                y: 4.0,
            },
        )
        .unwrap();
        assert_eq!(spec.ideal_distances[0][2], 4.0);
        assert_eq!(spec.ideal_distances[2][1], 17f64.sqrt());
        assert_eq!(spec.ideal_distances[0][1], 1.0);
        let spec = InteractionSpec::from_gesture(
            &geom,
            &Gesture::Scale {
                group: 1,
                factor: 2.0,
            },
        )
        .unwrap();
        assert_eq!(spec.ideal_areas[1], 4.0 * std::f64::consts::PI);
        assert!(InteractionSpec::from_gesture(
            &geom,
            &Gesture::Scale {
                group: 1,
                factor: 0.0
            }
        )
        .is_err());
        assert!(InteractionSpec::from_gesture(
            &geom,
            &Gesture::Scale {
                group: 3,
                factor: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn accuracy_formula() {
        assert_eq!(accuracy(1.0, 0.5, 0.0), Some(0.5));
        assert_eq!(accuracy(0.3, 0.3, 0.3), None);
    }
}
