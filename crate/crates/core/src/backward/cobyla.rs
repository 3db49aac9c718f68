//! Derivative-free minimization over a box with linear interpolation models.
//!
//! The method keeps a simplex of `n + 1` evaluated points. Each iteration fits
//! the linear model through the simplex, steps from the best vertex to the
//! model minimizer inside the trust ball intersected with the box, and swaps
//! the new point into the simplex. Failed steps either repair a badly shaped
//! simplex or halve the trust radius `ρ`. Only box constraints are handled,
//! which is all that the parameter search needs.
//!
//! The iteration does not depend on the evaluation budget, so a run with a
//! small budget is an exact prefix of a run with a larger one.

use nalgebra::{DMatrix, DVector};

/// Tunables of [`minimize_box`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptions {
    pub rho_init: f64,
    pub rho_final: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Trust radius fell below `rho_final`.
    Converged,
    MaxEvals,
    /// The starting value was already (numerically) zero.
    ZeroCost,
    Cancelled,
}

#[derive(Debug, Clone)]
pub struct BoxOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_init: f64,
    pub evals: usize,
    pub stop: StopReason,
    /// Incumbent best `(x, f)` after every evaluation.
    pub trace: Vec<(Vec<f64>, f64)>,
}

/// Values at or below this are treated as an exact optimum of a nonnegative
/// cost.
pub const ZERO_COST: f64 = 1e-12;

// Shape limits for an acceptable simplex, relative to ρ.
const MAX_EDGE: f64 = 2.1;
const MIN_HEIGHT: f64 = 0.25;
// Steps shorter than this fraction of ρ are not worth an evaluation.
const MIN_STEP: f64 = 0.1;
const GOOD_RATIO: f64 = 0.1;

struct Simplex {
    pts: Vec<DVector<f64>>,
    vals: Vec<f64>,
}

impl Simplex {
    fn best(&self) -> usize {
        let mut b = 0;
        for i in 1..self.vals.len() {
            if self.vals[i] < self.vals[b] {
                b = i;
            }
        }
        b
    }

    /// Edge matrix (rows `x_i − x_b`, `i ≠ b`), the matching vertex indices,
    /// and its inverse when the simplex is nondegenerate.
    fn edges(&self, b: usize) -> (DMatrix<f64>, Vec<usize>, Option<DMatrix<f64>>) {
        let n = self.pts[0].len();
        let idx: Vec<usize> = (0..self.pts.len()).filter(|&i| i != b).collect();
        let mut d = DMatrix::zeros(n, n);
        for (r, &i) in idx.iter().enumerate() {
            d.row_mut(r)
                .copy_from(&(&self.pts[i] - &self.pts[b]).transpose());
        }
        let inv = d
            .clone()
            .try_inverse()
            .filter(|m| m.iter().all(|v| v.is_finite()));
        (d, idx, inv)
    }
}

/// Minimizer of `g·s` over `‖s‖ ≤ ρ` and `lo ≤ x + s ≤ hi`, found by fixing
/// coordinates at the bounds they would cross and redistributing the radius.
fn trust_step(g: &DVector<f64>, x: &DVector<f64>, rho: f64, lo: f64, hi: f64) -> DVector<f64> {
    let n = g.len();
    let mut s = DVector::zeros(n);
    let mut free = vec![true; n];
    for _ in 0..=n {
        let fixed_sq: f64 = (0..n).filter(|&i| !free[i]).map(|i| s[i] * s[i]).sum();
        let remaining = (rho * rho - fixed_sq).max(0.0).sqrt();
        let gnorm = (0..n)
            .filter(|&i| free[i])
            .map(|i| g[i] * g[i])
            .sum::<f64>()
            .sqrt();
        if gnorm == 0.0 || remaining == 0.0 {
            for i in (0..n).filter(|&i| free[i]) {
                s[i] = 0.0;
            }
            break;
        }
        let mut violated = false;
        let active: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        for i in active {
            s[i] = -remaining * g[i] / gnorm;
            if x[i] + s[i] > hi {
                s[i] = hi - x[i];
                free[i] = false;
                violated = true;
            } else if x[i] + s[i] < lo {
                s[i] = lo - x[i];
                free[i] = false;
                violated = true;
            }
        }
        if !violated {
            break;
        }
    }
    s
}

fn clamp_into(v: &mut DVector<f64>, lo: f64, hi: f64) {
    for x in v.iter_mut() {
        *x = x.clamp(lo, hi);
    }
}

/// Minimizes `f` over `[lo, hi]ⁿ` starting from `x0`.
///
/// `f` is never evaluated outside the box. `keep_going` is consulted before
/// every evaluation after the first; returning `false` stops the run with the
/// current incumbent. `on_eval` receives `(evaluations, best_f)` after each
/// evaluation.
pub fn minimize_box(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    lo: f64,
    hi: f64,
    opts: &BoxOptions,
    mut keep_going: impl FnMut() -> bool,
    mut on_eval: impl FnMut(usize, f64),
) -> BoxOutcome {
    let n = x0.len();
    let budget = opts.max_evals.max(1);
    let mut trace: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut best_x = DVector::from_iterator(n, x0.iter().map(|v| v.clamp(lo, hi)));

    let mut eval =
        |x: &DVector<f64>, trace: &mut Vec<(Vec<f64>, f64)>, best_x: &mut DVector<f64>| {
            let v = f(x.as_slice());
            let v = if v.is_nan() { f64::INFINITY } else { v };
            let prev = trace.last().map(|t| t.1).unwrap_or(f64::INFINITY);
            if trace.is_empty() || v < prev {
                *best_x = x.clone();
                trace.push((x.as_slice().to_vec(), v));
            } else {
                let last = trace.last().expect("trace is nonempty").clone();
                trace.push(last);
            }
            on_eval(trace.len(), trace.last().unwrap().1);
            v
        };

    let f0 = eval(&best_x.clone(), &mut trace, &mut best_x);
    let finish = |stop: StopReason, trace: Vec<(Vec<f64>, f64)>, best_x: DVector<f64>| {
        let f = trace.last().map(|t| t.1).unwrap_or(f0);
        BoxOutcome {
            x: best_x.as_slice().to_vec(),
            f,
            f_init: f0,
            evals: trace.len(),
            stop,
            trace,
        }
    };
    if f0 <= ZERO_COST {
        return finish(StopReason::ZeroCost, trace, best_x);
    }
    if n == 0 {
        return finish(StopReason::Converged, trace, best_x);
    }

    let mut rho = opts.rho_init.min(0.5 * (hi - lo));
    let mut simplex = Simplex {
        pts: vec![best_x.clone()],
        vals: vec![f0],
    };
    for i in 0..n {
        if trace.len() >= budget {
            return finish(StopReason::MaxEvals, trace, best_x);
        }
        if !keep_going() {
            return finish(StopReason::Cancelled, trace, best_x);
        }
        let mut p = simplex.pts[0].clone();
        p[i] = if p[i] + rho <= hi {
            p[i] + rho
        } else {
            p[i] - rho
        };
        let v = eval(&p, &mut trace, &mut best_x);
        simplex.pts.push(p);
        simplex.vals.push(v);
    }

    loop {
        if rho < opts.rho_final {
            return finish(StopReason::Converged, trace, best_x);
        }
        if trace.len() >= budget {
            return finish(StopReason::MaxEvals, trace, best_x);
        }
        if trace.last().unwrap().1 <= ZERO_COST {
            return finish(StopReason::Converged, trace, best_x);
        }

        let b = simplex.best();
        let xb = simplex.pts[b].clone();
        let fb = simplex.vals[b];
        let (d, idx, inv) = simplex.edges(b);

        // Shape diagnostics: edge lengths and heights over the opposite face.
        let mut worst: Option<(usize, f64)> = None;
        if let Some(inv) = &inv {
            for (r, _) in idx.iter().enumerate() {
                let edge = d.row(r).norm();
                let height = 1.0 / inv.column(r).norm();
                let badness = if edge > MAX_EDGE * rho {
                    edge / rho
                } else if height < MIN_HEIGHT * rho {
                    rho / height
                } else {
                    0.0
                };
                if badness > 0.0 && worst.is_none_or(|w| badness > w.1) {
                    worst = Some((r, badness));
                }
            }
        }

        let mut improved = false;
        if let Some(inv) = &inv {
            let df = DVector::from_iterator(n, idx.iter().map(|&i| simplex.vals[i] - fb));
            let g = inv * df;
            let s = trust_step(&g, &xb, rho, lo, hi);
            let pred = -g.dot(&s);
            let step_len = s.norm();
            if step_len >= MIN_STEP * rho && pred > 0.0 && pred.is_finite() {
                if !keep_going() {
                    return finish(StopReason::Cancelled, trace, best_x);
                }
                let mut p = &xb + &s;
                clamp_into(&mut p, lo, hi);
                let v = eval(&p, &mut trace, &mut best_x);
                let ratio = (fb - v) / pred;

                // Coefficients of the step in the edge basis give the volume
                // factor of swapping it in for each vertex.
                let lam = inv.transpose() * (&p - &xb);
                let mut pick = 0;
                let mut pick_score = f64::NEG_INFINITY;
                for r in 0..n {
                    let dist = d.row(r).norm() / rho;
                    let score = lam[r].abs() * dist.max(1.0).powi(2);
                    if score > pick_score {
                        pick = r;
                        pick_score = score;
                    }
                }
                if v < fb || pick_score >= 1.0 {
                    simplex.pts[idx[pick]] = p;
                    simplex.vals[idx[pick]] = v;
                }
                improved = ratio >= GOOD_RATIO;
            }
        }
        if improved {
            continue;
        }

        // The model step failed: fix the simplex if it is badly shaped,
        // otherwise the model was trustworthy and ρ is too large.
        let repair = match (&inv, worst) {
            (None, _) => Some(farthest(&simplex, b)),
            (Some(_), Some((r, _))) => Some(idx[r]),
            (Some(_), None) => None,
        };
        match repair {
            None => rho *= 0.5,
            Some(j) => {
                if trace.len() >= budget {
                    return finish(StopReason::MaxEvals, trace, best_x);
                }
                if !keep_going() {
                    return finish(StopReason::Cancelled, trace, best_x);
                }
                let p = geometry_point(&simplex, b, j, rho, lo, hi);
                let v = eval(&p, &mut trace, &mut best_x);
                simplex.pts[j] = p;
                simplex.vals[j] = v;
            }
        }
    }
}

fn farthest(simplex: &Simplex, b: usize) -> usize {
    let mut j = if b == 0 { 1 } else { 0 };
    let mut best = -1.0;
    for i in (0..simplex.pts.len()).filter(|&i| i != b) {
        let dist = (&simplex.pts[i] - &simplex.pts[b]).norm();
        if dist > best {
            best = dist;
            j = i;
        }
    }
    j
}

/// Replacement for vertex `j` at distance `ρ` from the best vertex, as far
/// as possible from the face spanned by the remaining vertices.
fn geometry_point(
    simplex: &Simplex,
    b: usize,
    j: usize,
    rho: f64,
    lo: f64,
    hi: f64,
) -> DVector<f64> {
    let n = simplex.pts[0].len();
    let xb = &simplex.pts[b];
    let others: Vec<DVector<f64>> = (0..simplex.pts.len())
        .filter(|&i| i != b && i != j)
        .map(|i| &simplex.pts[i] - xb)
        .collect();

    // Component of a trial direction orthogonal to the other edges.
    let mut dir = None;
    let seeds = std::iter::once(&simplex.pts[j] - xb)
        .chain((0..n).map(|k| DVector::from_fn(n, |i, _| if i == k { 1.0 } else { 0.0 })));
    for seed in seeds {
        let v = orthogonal_part(&seed, &others);
        if v.norm() > 1e-8 {
            dir = Some(v.normalize());
            break;
        }
    }
    let dir = dir.unwrap_or_else(|| DVector::from_element(n, 1.0 / (n as f64).sqrt()));

    let mut best: Option<(f64, DVector<f64>)> = None;
    for sign in [1.0, -1.0] {
        let mut p = xb + &dir * (sign * rho);
        clamp_into(&mut p, lo, hi);
        let height = (&p - xb).dot(&dir).abs();
        if best.as_ref().is_none_or(|(h, _)| height > *h) {
            best = Some((height, p));
        }
    }
    best.expect("two candidates").1
}

fn orthogonal_part(v: &DVector<f64>, edges: &[DVector<f64>]) -> DVector<f64> {
    if edges.is_empty() {
        return v.clone();
    }
    let n = v.len();
    let mut a = DMatrix::zeros(n, edges.len());
    for (k, e) in edges.iter().enumerate() {
        a.set_column(k, e);
    }
    let q = a.qr().q();
    v - &q * (q.transpose() * v)
}
