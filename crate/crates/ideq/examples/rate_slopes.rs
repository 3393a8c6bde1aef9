//! Fits the decay exponent of the running-minimum gradient norm over the
//! final decade of a fixed-budget run, for the inertial solver and the
//! plain iteration on the same nonconvex instance.
//!
//! Run with: cargo run --release --example rate_slopes

use ideq::harness::{rate_fit, reference_config, reference_nonconvex_instance};
use ideq::solver::{solve, Scheme};

fn main() -> ideq::Result<()> {
    let n_iters = 300usize;
    let instance = reference_nonconvex_instance(42)?;

    for scheme in [Scheme::IdeqGrad, Scheme::Red] {
        let mut cfg = reference_config(scheme, n_iters, 0.0);
        cfg.max_total_steps = Some(n_iters + 1);
        let report = solve(
            &instance.y,
            &instance.fidelity,
            &instance.model.reg,
            &cfg,
            &instance.x0,
        )?;
        let norms: Vec<f64> = report.trajectory.rows.iter().map(|r| r.grad_norm).collect();
        let fit = rate_fit(&norms, (n_iters / 10, n_iters))?;
        println!(
            "{:>10}: slope {:.3} (r2 {:.3}) over iterations {}..{}, {} restarts, min grad norm {:.2e}",
            scheme.as_str(),
            fit.slope,
            fit.r2,
            fit.window.0,
            fit.window.1,
            report.restarts,
            norms.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }
    println!("(steeper negative slope = faster decay of the best gradient norm)");
    Ok(())
}
