//! Confidence ellipses and centroid distances of the Wine LDA embedding,
//! plus an empirical coverage check on Gaussian samples.
//!
//! `cargo run -p ulca --example geometry`

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ulca::dataset::Dataset;
use ulca::geometry::{chi2_2dof_quantile, confidence_ellipse, group_geometry};
use ulca::model::{fit, UlcaParams};
use ulca::solvers::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wine.csv");
    let data = Dataset::from_csv_path(path, "label")?.standardized();
    let f = fit(&data, &UlcaParams::lda(data.c()), &SolverConfig::default())?;

    for conf in [0.5, 0.95] {
        let g = group_geometry(&f.embedding, data.labels(), data.c(), conf)?;
        println!(
            "confidence {conf} (χ² quantile {:.4})",
            chi2_2dof_quantile(conf)
        );
        for (j, e) in g.ellipses.iter().enumerate() {
            let [a, b] = e.semi_axes();
            println!(
                "  group {j}: center ({:+.3}, {:+.3}) semi-axes {a:.3}/{b:.3} area {:.3}",
                e.center[0], e.center[1], e.area
            );
        }
        println!(
            "  centroid distances {:?}",
            g.distances
                .iter()
                .map(|r| r
                    .iter()
                    .map(|v| (v * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>())
                .collect::<Vec<_>>()
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pts = DMatrix::<f64>::from_fn(10_000, 2, |_, j| {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * [1.0, 3.0][j]
    });
    let e = confidence_ellipse(&pts, 0.5)?;
    let inside = pts.row_iter().filter(|r| e.contains([r[0], r[1]])).count();
    println!(
        "coverage of the 50% ellipse on 10000 samples: {:.4}",
        inside as f64 / 10_000.0
    );
    Ok(())
}
