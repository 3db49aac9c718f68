//! A steering session: parameter edits with Procrustes-aligned views, a
//! drawn axis, and named snapshots written to and read back from JSON.
//!
//! `cargo run -p ulca --example session_snapshots`

use ulca::dataset::Dataset;
use ulca::model::UlcaParams;
use ulca::session::{Session, Snapshot};
use ulca::solvers::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/wine.csv");
    let data = Dataset::from_csv_path(path, "label")?.standardized();
    let mut s = Session::new(
        data,
        Some(path.into()),
        UlcaParams::lda(3),
        SolverConfig::default(),
    )?;
    s.save_snapshot("lda", false)?;

    let loading = s.draw_axis([1.0, 1.0])?;
    let names = s.dataset().attribute_names();
    let lead = (0..loading.len())
        .max_by(|&a, &b| loading[a].abs().total_cmp(&loading[b].abs()))
        .unwrap();
    println!(
        "diagonal axis is led by {} ({:+.3})",
        names[lead], loading[lead]
    );

    for alpha in [1.0, 1.000001, 5.0] {
        let mut p = s.params().clone();
        p.alpha = Some(alpha);
        let change = s.update_params(p)?;
        println!(
            "α = {alpha}: objective {:.4}, view moved {:.2e} (relative {:.2e})",
            change.objective, change.embedding_shift, change.relative_shift
        );
    }
    s.save_snapshot("alpha-5", false)?;
    println!("snapshots: {:?}", s.list_snapshots());

    let json = s.get_snapshot("lda").expect("saved").to_json();
    println!("'lda' snapshot is {} bytes of JSON", json.len());
    let back = Snapshot::from_json(&json)?;
    s.restore(&back)?;
    println!(
        "restored 'lda': α used {:.4}, drawn axes {}",
        s.fit().projection.alpha_used,
        s.drawn_axes().len()
    );
    println!(
        "consistency gap after restore: {:.1e}",
        s.consistency_gap()?
    );
    Ok(())
}
