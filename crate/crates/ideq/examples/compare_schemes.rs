//! Benchmarks the iterative schemes over a shared set of noisy nonconvex
//! instances and prints the comparison table (iterations to the stopping
//! criterion, PSNR, wall time).
//!
//! Run with: cargo run --release --example compare_schemes

use ideq::harness::{reference_config, reference_nonconvex_instance};
use ideq::metrics::psnr;
use ideq::solver::{solve, Scheme};

fn main() -> ideq::Result<()> {
    let seeds: Vec<u64> = (41..=50).collect();
    println!(
        "{:<18} {:>12} {:>10} {:>10}",
        "scheme", "mean iters", "mean psnr", "mean ms"
    );
    for scheme in [Scheme::Red, Scheme::IdeqGrad, Scheme::DeqBacktracking] {
        let mut iters = 0.0;
        let mut quality = 0.0;
        let mut wall = 0.0;
        for &seed in &seeds {
            let instance = reference_nonconvex_instance(seed)?;
            let mut config = reference_config(scheme, 8000, 1e-4);
            config.record_objective = false;
            let report = solve(
                &instance.y,
                &instance.fidelity,
                &instance.model.reg,
                &config,
                &instance.x0,
            )?;
            iters += report.iterations as f64;
            quality += psnr(&report.x_hat, &instance.x_true, 1.0)?;
            wall += report.wall_secs * 1e3;
        }
        let n = seeds.len() as f64;
        println!(
            "{:<18} {:>12.1} {:>10.2} {:>10.2}",
            scheme.as_str(),
            iters / n,
            quality / n,
            wall / n
        );
    }
    Ok(())
}
