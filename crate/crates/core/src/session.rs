//! Live analysis state: dataset, displayed fit, geometry, drawn axes, and
//! named snapshots.
//!
//! Every parameter change refits, then rotates the new embedding onto the
//! previously displayed one with orthogonal Procrustes. The rotation is
//! folded into the stored projection so loadings match the displayed axes.

use std::sync::Arc;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::backward::{
    backward_select, BackwardConfig, BackwardResult, Gesture, InteractionSpec, RunControl,
};
use crate::dataset::Dataset;
use crate::error::{Result, UlcaError};
use crate::geometry::{group_geometry, GroupGeometry, DEFAULT_CONFIDENCE};
use crate::group_stats::{compute_group_stats, GroupStats};
use crate::model::{fit_with_stats, project_axis_matrix, FitMode, UlcaFit, UlcaParams};
use crate::solvers::{procrustes_align, Backend, Projection, SolverConfig};

pub const SNAPSHOT_FORMAT: &str = "ulca-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawnAxis {
    /// Direction in display coordinates.
    pub v: [f64; 2],
    /// `Mv/‖v‖` against the current projection.
    pub loading: Vec<f64>,
}

/// Outcome of the most recent backward selection, for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostInfo {
    pub cost: f64,
    pub cost_init: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChangeSummary {
    pub objective: f64,
    pub alpha_used: f64,
    /// `‖Z_new − Z_prev‖_F` in display coordinates.
    pub embedding_shift: f64,
    pub relative_shift: f64,
    pub alignment_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(UlcaError::BadSnapshot(format!(
                "matrix has {} values for shape {}×{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: Option<String>,
    pub content_hash: String,
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub attribute_names: Vec<String>,
    pub group_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub matrix: MatrixRecord,
    pub objective: f64,
    pub alpha_used: f64,
    pub backend: Backend,
    pub iterations: usize,
    pub converged: bool,
    pub mode: FitMode,
    /// Resolved parameters (effective γ's, α used).
    pub params_used: UlcaParams,
}

/// Everything needed to rebuild a session view on the same dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub dataset: DatasetRef,
    pub params: UlcaParams,
    pub solver: SolverConfig,
    pub projection: ProjectionRecord,
    pub display_rotation: MatrixRecord,
    pub drawn_axes: Vec<DrawnAxis>,
    pub confidence: f64,
    pub last_cost: Option<CostInfo>,
}

impl Snapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshots always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot =
            serde_json::from_str(s).map_err(|e| UlcaError::BadSnapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(UlcaError::BadSnapshot(format!(
                "unsupported format {} v{}",
                snap.format, snap.version
            )));
        }
        Ok(snap)
    }
}

/// On-disk collection of named snapshots, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotStore {
    pub snapshots: IndexMap<String, Snapshot>,
}

/// A prepared backward-selection run that does not borrow the session.
#[derive(Debug, Clone)]
pub struct BackwardJob {
    pub gesture: Gesture,
    pub spec: InteractionSpec,
    pub theta0: UlcaParams,
    pub config: BackwardConfig,
    /// Set for gestures that leave the geometry unchanged.
    pub identity: bool,
    data: Arc<Dataset>,
    stats: Arc<GroupStats>,
}

impl BackwardJob {
    pub fn run(&self, control: &mut RunControl<'_>) -> Result<BackwardResult> {
        if self.identity {
            return Ok(BackwardResult {
                params: self.theta0.clone(),
                cost: 0.0,
                cost_init: 0.0,
                iterations: 0,
                trace: Vec::new(),
                stop: crate::backward::cobyla::StopReason::ZeroCost,
            });
        }
        backward_select(
            &self.spec,
            &self.data,
            &self.stats,
            &self.theta0,
            &self.config,
            control,
        )
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    data: Arc<Dataset>,
    dataset_path: Option<String>,
    content_hash: String,
    stats: Arc<GroupStats>,
    params: UlcaParams,
    solver: SolverConfig,
    confidence: f64,
    fit: UlcaFit,
    rotation: DMatrix<f64>,
    geometry: Option<GroupGeometry>,
    drawn_axes: Vec<DrawnAxis>,
    last_cost: Option<CostInfo>,
    snapshots: IndexMap<String, Snapshot>,
}

impl Session {
    pub fn new(
        data: Dataset,
        dataset_path: Option<String>,
        params: UlcaParams,
        solver: SolverConfig,
    ) -> Result<Self> {
        solver.validate()?;
        let stats = compute_group_stats(&data)?;
        let fit = fit_with_stats(&data, &stats, &params, &solver)?;
        let k = fit.matrix().ncols();
        let mut s = Session {
            content_hash: data.content_hash(),
            data: Arc::new(data),
            dataset_path,
            stats: Arc::new(stats),
            params,
            solver,
            confidence: DEFAULT_CONFIDENCE,
            fit,
            rotation: DMatrix::identity(k, k),
            geometry: None,
            drawn_axes: Vec::new(),
            last_cost: None,
            snapshots: IndexMap::new(),
        };
        s.refresh_geometry()?;
        Ok(s)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn stats(&self) -> &GroupStats {
        &self.stats
    }

    pub fn params(&self) -> &UlcaParams {
        &self.params
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn fit(&self) -> &UlcaFit {
        &self.fit
    }

    /// Displayed projection (canonical fit rotated by the display rotation).
    pub fn projection(&self) -> &DMatrix<f64> {
        self.fit.matrix()
    }

    pub fn embedding(&self) -> &DMatrix<f64> {
        &self.fit.embedding
    }

    pub fn display_rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn geometry(&self) -> Option<&GroupGeometry> {
        self.geometry.as_ref()
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn drawn_axes(&self) -> &[DrawnAxis] {
        &self.drawn_axes
    }

    pub fn last_cost(&self) -> Option<&CostInfo> {
        self.last_cost.as_ref()
    }

    pub fn set_confidence(&mut self, confidence: f64) -> Result<()> {
        let prev = self.confidence;
        self.confidence = confidence;
        if let Err(e) = self.refresh_geometry() {
            self.confidence = prev;
            return Err(e);
        }
        Ok(())
    }

    fn refresh_geometry(&mut self) -> Result<()> {
        self.geometry = if self.fit.embedding.ncols() == 2 {
            Some(group_geometry(
                &self.fit.embedding,
                self.data.labels(),
                self.data.c(),
                self.confidence,
            )?)
        } else {
            None
        };
        Ok(())
    }

    fn refresh_axes(&mut self) -> Result<()> {
        let m = self.fit.matrix().clone();
        for axis in &mut self.drawn_axes {
            if m.ncols() == 2 {
                axis.loading = project_axis_matrix(&m, &DVector::from_row_slice(&axis.v))?
                    .iter()
                    .copied()
                    .collect();
            }
        }
        Ok(())
    }

    /// Refits with `new_params` and aligns the result to the current display.
    /// On error the session is left unchanged.
    pub fn update_params(&mut self, new_params: UlcaParams) -> Result<ChangeSummary> {
        let mut fit = fit_with_stats(&self.data, &self.stats, &new_params, &self.solver)?;
        let prev = &self.fit.embedding;
        let (rotation, degenerate) = if prev.shape() == fit.embedding.shape() {
            let al = procrustes_align(prev, &fit.embedding)?;
            fit.embedding = al.aligned;
            (al.rotation, al.degenerate)
        } else {
            let k = fit.embedding.ncols();
            (DMatrix::identity(k, k), false)
        };
        fit.projection.matrix = &fit.projection.matrix * &rotation;
        // Same product a restore computes, so snapshots reproduce Z exactly.
        fit.embedding = self.data.x() * &fit.projection.matrix;

        let shift = if prev.shape() == fit.embedding.shape() {
            (&fit.embedding - prev).norm()
        } else {
            f64::NAN
        };
        let norm = prev.norm();
        let geometry = if fit.embedding.ncols() == 2 {
            Some(group_geometry(
                &fit.embedding,
                self.data.labels(),
                self.data.c(),
                self.confidence,
            )?)
        } else {
            None
        };

        let summary = ChangeSummary {
            objective: fit.projection.objective,
            alpha_used: fit.projection.alpha_used,
            embedding_shift: shift,
            relative_shift: if norm > 0.0 { shift / norm } else { shift },
            alignment_degenerate: degenerate,
        };
        self.params = new_params;
        self.fit = fit;
        self.rotation = rotation;
        self.geometry = geometry;
        self.refresh_axes()?;
        Ok(summary)
    }

    /// Changes solver settings and refits. On error nothing changes.
    pub fn set_solver(&mut self, solver: SolverConfig) -> Result<ChangeSummary> {
        solver.validate()?;
        let prev = std::mem::replace(&mut self.solver, solver);
        let out = self.update_params(self.params.clone());
        if out.is_err() {
            self.solver = prev;
        }
        out
    }

    /// Builds the backward-selection job for a gesture on the current display.
    pub fn prepare_gesture(&self, gesture: Gesture) -> Result<BackwardJob> {
        let geom = self
            .geometry
            .as_ref()
            .ok_or_else(|| UlcaError::DimensionMismatch("gestures need a 2-D embedding".into()))?;
        let spec = InteractionSpec::from_gesture(geom, &gesture)?;
        let identity = match gesture {
            Gesture::Scale { factor, .. } => factor == 1.0,
            Gesture::Move { group, x, y } => geom.ellipses[group].center == [x, y],
        };
        let theta0 = UlcaParams {
            alpha: Some(self.fit.projection.alpha_used),
            ..self.params.clone()
        };
        Ok(BackwardJob {
            gesture,
            config: BackwardConfig::for_kind(spec.kind),
            spec,
            theta0,
            identity,
            data: Arc::clone(&self.data),
            stats: Arc::clone(&self.stats),
        })
    }

    /// Applies a finished run. Cancelled runs and identity gestures leave
    /// the parameters untouched.
    pub fn commit_backward(
        &mut self,
        job: &BackwardJob,
        result: &BackwardResult,
    ) -> Result<Option<ChangeSummary>> {
        if !Arc::ptr_eq(&job.data, &self.data) {
            return Err(UlcaError::DatasetMismatch);
        }
        if result.cancelled() {
            return Err(UlcaError::Cancelled);
        }
        let summary = if job.identity {
            None
        } else {
            Some(self.update_params(result.params.clone())?)
        };
        self.last_cost = Some(CostInfo {
            cost: result.cost,
            cost_init: result.cost_init,
            evaluations: result.iterations,
        });
        Ok(summary)
    }

    /// Runs backward selection for `gesture` and applies the result.
    pub fn apply_gesture(
        &mut self,
        gesture: Gesture,
        control: &mut RunControl<'_>,
    ) -> Result<BackwardResult> {
        let job = self.prepare_gesture(gesture)?;
        let result = job.run(control)?;
        self.commit_backward(&job, &result)?;
        Ok(result)
    }

    pub fn draw_axis(&mut self, v: [f64; 2]) -> Result<Vec<f64>> {
        let loading: Vec<f64> =
            project_axis_matrix(self.fit.matrix(), &DVector::from_row_slice(&v))?
                .iter()
                .copied()
                .collect();
        self.drawn_axes.push(DrawnAxis {
            v,
            loading: loading.clone(),
        });
        Ok(loading)
    }

    pub fn clear_axes(&mut self) {
        self.drawn_axes.clear();
    }

    /// Serializable capture of the current state.
    pub fn snapshot(&self) -> Snapshot {
        let p = &self.fit.projection;
        Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            dataset: DatasetRef {
                path: self.dataset_path.clone(),
                content_hash: self.content_hash.clone(),
                n: self.data.n(),
                d: self.data.d(),
                c: self.data.c(),
                attribute_names: self.data.attribute_names().to_vec(),
                group_names: self.data.group_names().to_vec(),
            },
            params: self.params.clone(),
            solver: self.solver.clone(),
            projection: ProjectionRecord {
                matrix: MatrixRecord::from_matrix(&p.matrix),
                objective: p.objective,
                alpha_used: p.alpha_used,
                backend: p.backend,
                iterations: p.iterations,
                converged: p.converged,
                mode: self.fit.mode,
                params_used: self.fit.params_used.clone(),
            },
            display_rotation: MatrixRecord::from_matrix(&self.rotation),
            drawn_axes: self.drawn_axes.clone(),
            confidence: self.confidence,
            last_cost: self.last_cost.clone(),
        }
    }

    pub fn save_snapshot(&mut self, name: &str, overwrite: bool) -> Result<()> {
        if name.trim().is_empty() {
            return Err(UlcaError::InvalidParams(
                "snapshot name must not be empty".into(),
            ));
        }
        if !overwrite && self.snapshots.contains_key(name) {
            return Err(UlcaError::DuplicateName(name.into()));
        }
        let snap = self.snapshot();
        // Overwriting keeps the original position.
        self.snapshots.insert(name.to_string(), snap);
        Ok(())
    }

    pub fn restore_snapshot(&mut self, name: &str) -> Result<()> {
        let snap = self
            .snapshots
            .get(name)
            .cloned()
            .ok_or_else(|| UlcaError::UnknownSnapshot(name.into()))?;
        self.restore(&snap)
    }

    /// Restores a snapshot taken on this session's dataset.
    pub fn restore(&mut self, snap: &Snapshot) -> Result<()> {
        if snap.dataset.content_hash != self.content_hash {
            return Err(UlcaError::DatasetMismatch);
        }
        let m = snap.projection.matrix.to_matrix()?;
        let rotation = snap.display_rotation.to_matrix()?;
        let k = snap.params.dprime;
        if m.shape() != (self.data.d(), k) || rotation.shape() != (k, k) {
            return Err(UlcaError::BadSnapshot(
                "projection shape does not match".into(),
            ));
        }
        snap.params.validate(self.data.c(), self.data.d())?;
        snap.solver.validate()?;
        let embedding = self.data.x() * &m;
        let fit = UlcaFit {
            projection: Projection {
                matrix: m,
                objective: snap.projection.objective,
                alpha_used: snap.projection.alpha_used,
                backend: snap.projection.backend,
                iterations: snap.projection.iterations,
                converged: snap.projection.converged,
            },
            params_used: snap.projection.params_used.clone(),
            mode: snap.projection.mode,
            embedding,
        };
        let geometry = if k == 2 {
            Some(group_geometry(
                &fit.embedding,
                self.data.labels(),
                self.data.c(),
                snap.confidence,
            )?)
        } else {
            None
        };
        self.params = snap.params.clone();
        self.solver = snap.solver.clone();
        self.confidence = snap.confidence;
        self.fit = fit;
        self.rotation = rotation;
        self.geometry = geometry;
        self.drawn_axes = snap.drawn_axes.clone();
        self.last_cost = snap.last_cost.clone();
        Ok(())
    }

    pub fn list_snapshots(&self) -> Vec<String> {
        self.snapshots.keys().cloned().collect()
    }

    pub fn get_snapshot(&self, name: &str) -> Option<&Snapshot> {
        self.snapshots.get(name)
    }

    pub fn snapshot_store(&self) -> SnapshotStore {
        SnapshotStore {
            snapshots: self.snapshots.clone(),
        }
    }

    /// Adds snapshots from a store, keeping only those for this dataset.
    /// Returns how many were skipped.
    pub fn load_snapshots(&mut self, store: SnapshotStore) -> usize {
        let mut skipped = 0;
        for (name, snap) in store.snapshots {
            if snap.dataset.content_hash == self.content_hash {
                self.snapshots.insert(name, snap);
            } else {
                skipped += 1;
            }
        }
        skipped
    }

    /// Re-solves with the stored parameters and reports the objective gap.
    pub fn consistency_gap(&self) -> Result<f64> {
        let refit = fit_with_stats(&self.data, &self.stats, &self.params, &self.solver)?;
        let a = refit.projection.objective;
        let b = self.fit.projection.objective;
        Ok((a - b).abs() / a.abs().max(b.abs()).max(1.0))
    }

    /// View model pushed to clients.
    pub fn view(&self) -> StateView {
        let z = &self.fit.embedding;
        let m = self.fit.matrix();
        StateView {
            attribute_names: self.data.attribute_names().to_vec(),
            group_names: self.data.group_names().to_vec(),
            points: z.row_iter().map(|r| r.iter().copied().collect()).collect(),
            labels: self.data.labels().to_vec(),
            ellipses: self.geometry.as_ref().map(|g| g.ellipses.clone()),
            distances: self.geometry.as_ref().map(|g| g.distances.clone()),
            loadings: m
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            params: self.params.clone(),
            objective: self.fit.projection.objective,
            alpha_used: self.fit.projection.alpha_used,
            backend: self.fit.projection.backend,
            converged: self.fit.projection.converged,
            drawn_axes: self.drawn_axes.clone(),
            confidence: self.confidence,
            cost: self.last_cost.clone(),
            snapshots: self.list_snapshots(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateView {
    pub attribute_names: Vec<String>,
    pub group_names: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub ellipses: Option<Vec<crate::geometry::ConfidenceEllipse>>,
    pub distances: Option<Vec<Vec<f64>>>,
    /// Columns of the displayed projection, one per axis.
    pub loadings: Vec<Vec<f64>>,
    pub params: UlcaParams,
    pub objective: f64,
    pub alpha_used: f64,
    pub backend: Backend,
    pub converged: bool,
    pub drawn_axes: Vec<DrawnAxis>,
    pub confidence: f64,
    pub cost: Option<CostInfo>,
    pub snapshots: Vec<String>,
}
