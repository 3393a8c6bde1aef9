//! Inpainting reconstruction: half the pixels are removed, light Gaussian
//! noise is added, and the inertial proximal solver fills the holes with a
//! smoothed-TV prior.
//!
//! Run with: cargo run --release --example solve_inpainting

use ideq::fidelity::{DataFidelity, InpaintingModel};
use ideq::harness::{gen_image, GenKind};
use ideq::mask::{generate_mask, MaskKind};
use ideq::metrics::{psnr, ssim};
use ideq::regularizer::AnalyticRegularizer;
use ideq::rng::SeededRng;
use ideq::solver::{solve, Scheme, SolverConfig};

fn main() -> ideq::Result<()> {
    let mut rng = SeededRng::new(3);
    let x_true = gen_image(GenKind::SheppLikePhantom, 64, &mut rng);

    let mask = generate_mask(MaskKind::RandomPixel { p: 0.5 }, 64, 64, &mut rng)?;
    let model = InpaintingModel::new(mask, 1.0 / 255.0)?;
    let y = model.simulate(&x_true, &mut rng)?;
    let x0 = model.adjoint_measurement(&y)?;
    println!("zero-filled psnr: {:.2} dB", psnr(&x0, &x_true, 1.0)?);

    let delta = 0.02;
    let reg = AnalyticRegularizer::smoothed_tv(delta)?;
    let mut config = SolverConfig::new(Scheme::IdeqProx);
    config.lambda = 0.02;
    // stay under the smoothed-TV curvature bound ~ 8/delta
    config.tau = 1.5 / (config.lambda * 8.0 / delta);
    config.alpha = 0.2;
    config.restart_budget = 500.0;
    config.max_iters = 4000;
    config.eps = 1e-7;
    config.record_objective = false;

    let report = solve(&y, &model, &reg, &config, &x0)?;
    println!(
        "reconstructed: psnr {:.2} dB, ssim {:.4}, {} iterations, {} restarts",
        psnr(&report.x_hat, &x_true, 1.0)?,
        ssim(&report.x_hat, &x_true)?,
        report.iterations,
        report.restarts
    );

    let out = std::env::temp_dir().join("ideq_inpainting.pgm");
    ideq::io::write_pgm(&out, &report.x_hat)?;
    println!("estimate written to {}", out.display());
    Ok(())
}
