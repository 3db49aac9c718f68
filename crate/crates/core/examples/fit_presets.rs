//! Fits the Wine data with each preset and prints the leading loadings.
//!
//! `cargo run -p ulca --example fit_presets`

use ulca::dataset::Dataset;
use ulca::group_stats::compute_group_stats;
use ulca::model::{fit_with_stats, UlcaParams};
use ulca::solvers::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wine.csv");
    let data = Dataset::from_csv_path(path, "label")?.standardized();
    let stats = compute_group_stats(&data)?;
    let c = data.c();
    println!(
        "wine: n={} d={} groups={:?}",
        data.n(),
        data.d(),
        data.group_names()
    );

    let presets = [
        ("pca (group 0)", UlcaParams::pca(c, 0)),
        ("cpca 0 vs rest, α=1", UlcaParams::cpca(c, 0, Some(1.0))),
        ("cpca 0 vs rest, auto α", UlcaParams::cpca(c, 0, None)),
        ("ccpca group 2", UlcaParams::ccpca(c, 2, Some(1.0))),
        ("lda", UlcaParams::lda(c)),
        ("lda, n_j/n weights", UlcaParams::lda_count_weighted(&stats)),
    ];
    for (name, params) in presets {
        let fit = fit_with_stats(&data, &stats, &params, &SolverConfig::default())?;
        let m = fit.matrix();
        let lead = m.column(0).iamax();
        println!(
            "{name:<24} mode={:?} objective={:.4} α={:.4} axis-1 leader={} ({:+.3})",
            fit.mode,
            fit.projection.objective,
            fit.projection.alpha_used,
            data.attribute_names()[lead],
            m[(lead, 0)]
        );
    }
    Ok(())
}
