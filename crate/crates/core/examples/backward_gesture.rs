//! Backward parameter selection driven by gestures on the Wine LDA view:
//! move one centroid, then enlarge one ellipse, printing progress and the
//! parameters the search picked.
//!
//! `cargo run -p ulca --example backward_gesture`

use ulca::backward::{Gesture, RunControl};
use ulca::dataset::Dataset;
use ulca::model::UlcaParams;
use ulca::session::Session;
use ulca::solvers::SolverConfig;

fn fmt(w: &[f64]) -> String {
    w.iter()
        .map(|v| format!("{v:.2}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wine.csv");
    let data = Dataset::from_csv_path(path, "label")?.standardized();
    let mut s = Session::new(
        data,
        Some(path.into()),
        UlcaParams::lda(3),
        SolverConfig::default(),
    )?;

    let g = s.geometry().expect("2-D view").clone();
    let (c1, c2) = (g.ellipses[1].center, g.ellipses[2].center);
    let to = [c1[0] + 0.2 * (c2[0] - c1[0]), c1[1] + 0.2 * (c2[1] - c1[1])];
    println!(
        "l(1,2) = {:.3}; moving group 2 to ({:.3}, {:.3})",
        g.distances[1][2], to[0], to[1]
    );

    let mut control = RunControl {
        cancel: None,
        progress: Some(Box::new(|p| {
            println!(
                "  {} evaluations, best cost {:.4}",
                p.evaluations, p.best_cost
            )
        })),
    };
    let r = s.apply_gesture(
        Gesture::Move {
            group: 2,
            x: to[0],
            y: to[1],
        },
        &mut control,
    )?;
    drop(control);
    let g = s.geometry().expect("2-D view");
    println!(
        "cost {:.3} -> {:.3} in {} evaluations; l(1,2) now {:.3}",
        r.cost_init, r.cost, r.iterations, g.distances[1][2]
    );
    let p = s.params();
    println!(
        "  w_tg [{}] w_bg [{}] w_bw [{}] α {:.3}",
        fmt(&p.w_tg),
        fmt(&p.w_bg),
        fmt(&p.w_bw),
        p.alpha.unwrap_or(f64::NAN)
    );

    let before = g.ellipses[0].area;
    let r = s.apply_gesture(
        Gesture::Scale {
            group: 0,
            factor: 2.0,
        },
        &mut RunControl::default(),
    )?;
    println!(
        "scale group 0 ×2: cost {:.3} -> {:.3}; area {before:.3} -> {:.3}",
        r.cost_init,
        r.cost,
        s.geometry().expect("2-D view").ellipses[0].area
    );
    Ok(())
}
