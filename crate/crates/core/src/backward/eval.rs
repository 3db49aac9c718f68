//! Mimicked-gesture evaluation of backward selection.
//!
//! For one setting `(n, d, c)` a labeled Gaussian mixture is drawn. Each trial
//! fits the relaxed model with α = 1 and random weights, applies a random
//! gesture to a random group (move its centroid to a uniform point in the
//! embedding's bounding box, or scale its ellipse by a factor in
//! `[0.5, 2]`), and runs the search for every budget `m`. The reference
//! `e_opt` comes from a run with budget [`E_OPT_BUDGET`]. Trials where no
//! improvement is possible are discarded and replaced.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    accuracy, backward_select, relaxed_embedding, BackwardConfig, Gesture, InteractionSpec,
    RunControl,
};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::geometry::{group_geometry, DEFAULT_CONFIDENCE};
use crate::group_stats::{compute_group_stats, GroupStats};
use crate::model::UlcaParams;

pub const E_OPT_BUDGET: usize = 1000;
/// Attempts per requested trial before giving up on finding refinable
/// gestures.
const MAX_ATTEMPTS_PER_TRIAL: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSetting {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub budgets: Vec<usize>,
    /// Number of kept (non-discarded) gestures.
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub m: usize,
    pub mean_seconds: f64,
    pub max_seconds: f64,
    pub mean_accuracy: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub seed: u64,
    pub kept: usize,
    pub discarded: usize,
    pub mean_cost_init: f64,
    pub mean_cost_opt: f64,
    pub budgets: Vec<BudgetReport>,
}

/// Labeled Gaussian mixture with distinct random means and covariances,
/// group sizes as equal as possible.
pub fn gaussian_mixture(n: usize, d: usize, c: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let means: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..d).map(|_| 2.0 * normal()).collect())
        .collect();
    let factors: Vec<DMatrix<f64>> = (0..c)
        .map(|_| DMatrix::from_fn(d, d, |_, _| normal() / (d as f64).sqrt()))
        .collect();
    let scales: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..d).map(|_| (0.7 * normal()).exp()).collect())
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut x = DMatrix::zeros(n, d);
    for (i, &l) in labels.iter().enumerate() {
        let z: Vec<f64> = (0..d).map(|k| normal() * scales[l][k]).collect();
        for j in 0..d {
            let mixed: f64 = (0..d).map(|k| factors[l][(j, k)] * z[k]).sum();
            x[(i, j)] = means[l][j] + mixed;
        }
    }
    Dataset::from_parts(x, labels)
}

fn random_params<R: Rng>(c: usize, rng: &mut R) -> UlcaParams {
    let mut w = || (0..c).map(|_| rng.random::<f64>()).collect::<Vec<_>>();
    UlcaParams {
        w_tg: w(),
        w_bg: w(),
        w_bw: w(),
        alpha: Some(1.0),
        gamma0: 0.0,
        gamma1: 0.0,
        dprime: 2,
    }
}

fn random_gesture<R: Rng>(z: &DMatrix<f64>, c: usize, rng: &mut R) -> Gesture {
    let group = rng.random_range(0..c);
    if rng.random_bool(0.5) {
        let lo = |k: usize| z.column(k).min();
        let hi = |k: usize| z.column(k).max();
        Gesture::Move {
            group,
            x: rng.random_range(lo(0)..=hi(0)),
            y: rng.random_range(lo(1)..=hi(1)),
        }
    } else {
        Gesture::Scale {
            group,
            factor: rng.random_range(0.5..=2.0),
        }
    }
}

/// One kept trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub gesture: Gesture,
    pub cost_init: f64,
    pub cost_opt: f64,
    /// `(m, seconds, cost, accuracy)` per budget.
    pub runs: Vec<(usize, f64, f64, f64)>,
}

/// Runs trials until `setting.trials` are kept, calling `on_trial` after each.
pub fn run_trials(
    data: &Dataset,
    stats: &GroupStats,
    setting: &EvalSetting,
    mut on_trial: impl FnMut(&TrialOutcome),
) -> Result<(Vec<TrialOutcome>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(setting.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut kept = Vec::new();
    let mut discarded = 0;
    let max_attempts = setting.trials * MAX_ATTEMPTS_PER_TRIAL;
    let mut attempts = 0;
    while kept.len() < setting.trials && attempts < max_attempts {
        attempts += 1;
        let theta0 = random_params(data.c(), &mut rng);
        let z = relaxed_embedding(data, stats, &theta0)?;
        let geom = group_geometry(&z, data.labels(), data.c(), DEFAULT_CONFIDENCE)?;
        let gesture = random_gesture(&z, data.c(), &mut rng);
        let spec = InteractionSpec::from_gesture(&geom, &gesture)?;
        let base = BackwardConfig::for_kind(spec.kind);

        let reference = backward_select(
            &spec,
            data,
            stats,
            &theta0,
            &base.with_max_iters(E_OPT_BUDGET),
            &mut RunControl::default(),
        )?;
        let (e_init, e_opt) = (reference.cost_init, reference.cost);
        if accuracy(e_init, e_opt, e_opt).is_none() {
            discarded += 1;
            continue;
        }
        let mut runs = Vec::with_capacity(setting.budgets.len());
        for &m in &setting.budgets {
            let started = Instant::now();
            let res = backward_select(
                &spec,
                data,
                stats,
                &theta0,
                &base.with_max_iters(m),
                &mut RunControl::default(),
            )?;
            let secs = started.elapsed().as_secs_f64();
            let acc = accuracy(e_init, res.cost, e_opt).expect("span checked above");
            runs.push((m, secs, res.cost, acc));
        }
        let outcome = TrialOutcome {
            gesture,
            cost_init: e_init,
            cost_opt: e_opt,
            runs,
        };
        on_trial(&outcome);
        kept.push(outcome);
    }
    Ok((kept, discarded))
}

/// Full evaluation for one setting, averaging per-trial accuracies.
pub fn evaluate_setting(setting: &EvalSetting) -> Result<EvalReport> {
    let mut report = EvalReport {
        n: setting.n,
        d: setting.d,
        c: setting.c,
        seed: setting.seed,
        kept: 0,
        discarded: 0,
        mean_cost_init: 0.0,
        mean_cost_opt: 0.0,
        budgets: Vec::new(),
    };
    if setting.trials == 0 {
        return Ok(report);
    }
    let data = gaussian_mixture(setting.n, setting.d, setting.c, setting.seed)?;
    let stats = compute_group_stats(&data)?;
    let (trials, discarded) = run_trials(&data, &stats, setting, |_| {})?;
    report.kept = trials.len();
    report.discarded = discarded;
    if trials.is_empty() {
        return Ok(report);
    }
    let k = trials.len() as f64;
    report.mean_cost_init = trials.iter().map(|t| t.cost_init).sum::<f64>() / k;
    report.mean_cost_opt = trials.iter().map(|t| t.cost_opt).sum::<f64>() / k;
    for (b, &m) in setting.budgets.iter().enumerate() {
        let col = || trials.iter().map(|t| t.runs[b]);
        report.budgets.push(BudgetReport {
            m,
            mean_seconds: col().map(|r| r.1).sum::<f64>() / k,
            max_seconds: col().map(|r| r.1).fold(0.0, f64::max),
            mean_cost: col().map(|r| r.2).sum::<f64>() / k,
            mean_accuracy: col().map(|r| r.3).sum::<f64>() / k,
        });
    }
    Ok(report)
}
