//! Rician magnitude denoising, the nonlinear problem: the likelihood term
//! involves a Bessel-function ratio and is nonconvex near dark pixels.
//! Compares the plain explicit iteration against the inertial one under the
//! same step size and prior.
//!
//! Run with: cargo run --release --example rician_denoise

use ideq::fidelity::DataFidelity;
use ideq::harness::reference_nonconvex_instance;
use ideq::metrics::psnr;
use ideq::solver::{solve, Scheme, StopReason};

fn main() -> ideq::Result<()> {
    let instance = reference_nonconvex_instance(42)?;
    let noisy = instance.fidelity.adjoint_measurement(&instance.y)?;
    println!("noisy psnr: {:.2} dB", psnr(&noisy, &instance.x_true, 1.0)?);

    for scheme in [Scheme::Red, Scheme::IdeqGrad] {
        let mut config = ideq::harness::reference_config(scheme, 4000, 1e-4);
        config.record_objective = false;
        let report = solve(
            &instance.y,
            &instance.fidelity,
            &instance.model.reg,
            &config,
            &instance.x0,
        )?;
        println!(
            "{:>10}: psnr {:.2} dB after {} iterations ({})",
            scheme.as_str(),
            psnr(&report.x_hat, &instance.x_true, 1.0)?,
            report.iterations,
            match report.stop {
                StopReason::Converged => "converged",
                StopReason::BudgetComplete => "budget complete",
                StopReason::StepCapReached => "step cap",
            }
        );
    }
    Ok(())
}
