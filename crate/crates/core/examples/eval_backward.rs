//! Mimicked-gesture evaluation of backward selection on a Gaussian mixture:
//! mean completion time and accuracy per evaluation budget.
//!
//! `cargo run -p ulca --release --example eval_backward -- [trials] [seed]`

use ulca::backward::eval::{evaluate_setting, EvalSetting};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let seed = args.next().map(|a| a.parse()).transpose()?.unwrap_or(7);
    for c in [2, 3] {
        let setting = EvalSetting {
            n: 1000,
            d: 10,
            c,
            budgets: vec![10, 20, 40, 80],
            trials,
            seed,
        };
        let r = evaluate_setting(&setting)?;
        println!(
            "n=1000 d=10 c={c}: kept {} discarded {}",
            r.kept, r.discarded
        );
        for b in &r.budgets {
            println!(
                "  m={:<3} accuracy {:.3}  mean {:.2} ms  max {:.2} ms",
                b.m,
                b.mean_accuracy,
                b.mean_seconds * 1e3,
                b.max_seconds * 1e3
            );
        }
    }
    Ok(())
}
