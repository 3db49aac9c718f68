//! The solver layer on its own: Dinkelbach on a random trace-ratio problem,
//! the manifold backend on the same problem, then varimax and
//! canonicalization of the result.
//!
//! `cargo run -p ulca --example solvers`

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ulca::linalg::{max_principal_angle, orthonormality_error};
use ulca::solvers::{
    canonicalize_axes, dinkelbach, solve_trace_ratio, varimax, varimax_criterion, Backend,
    SolverConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 12;
    let mut g = |r: usize| DMatrix::<f64>::from_fn(r, d, |_, _| StandardNormal.sample(&mut rng));
    let a = g(d);
    let b = g(d + 4);
    let c0 = a.transpose() * &a;
    let c1 = b.transpose() * &b / 16.0;

    let (evd, log) = dinkelbach(&c0, &c1, 2, &SolverConfig::default())?;
    println!("dinkelbach: {} steps", log.residuals.len());
    for (t, (alpha, r)) in log.alphas.iter().zip(&log.residuals).enumerate() {
        println!("  t={t} α={alpha:.6} max tr(Mᵀ(C0−αC1)M)={r:.3e}");
    }

    let man = solve_trace_ratio(&c0, &c1, 2, &SolverConfig::with_backend(Backend::Manifold))?;
    println!(
        "ratio: evd {:.10} manifold {:.10} ({} RTR iterations), subspace angle {:.1e}",
        evd.objective,
        man.objective,
        man.iterations,
        max_principal_angle(&evd.matrix, &man.matrix)
    );

    let rotated = varimax(&evd.matrix);
    let canon = canonicalize_axes(&rotated);
    println!(
        "varimax criterion {:.4} -> {:.4}; orthonormality error {:.1e}; span angle {:.1e}",
        varimax_criterion(&evd.matrix),
        varimax_criterion(&canon),
        orthonormality_error(&canon),
        max_principal_angle(&evd.matrix, &canon)
    );
    Ok(())
}
