//! Compressed-sensing reconstruction from undersampled Fourier data: 40% of
//! the k-space coefficients are kept at random (incoherent sampling), light
//! complex noise is added, and a smoothed-TV prior fills in the rest.
//!
//! Equispaced column masks (`MaskKind::CartesianLines`) produce coherent
//! aliasing that a hand-crafted prior cannot undo; they are the regime for
//! the trained prior (see `train_inpainting` for the training loop).
//!
//! Run with: cargo run --release --example solve_mri

use ideq::fidelity::{DataFidelity, MaskedFourierModel};
use ideq::harness::{gen_image, GenKind};
use ideq::mask::{generate_mask, MaskKind};
use ideq::metrics::{psnr, ssim};
use ideq::regularizer::AnalyticRegularizer;
use ideq::rng::SeededRng;
use ideq::solver::{solve, Scheme, SolverConfig};

fn main() -> ideq::Result<()> {
    let mut rng = SeededRng::new(11);
    let x_true = gen_image(GenKind::SheppLikePhantom, 64, &mut rng);

    let mask = generate_mask(MaskKind::RandomPixel { p: 0.4 }, 64, 64, &mut rng)?;
    println!("k-space coefficients kept: {:.1}%", 100.0 * mask.kept_fraction());
    let model = MaskedFourierModel::new(mask, 1.0 / 255.0)?;
    let y = model.simulate(&x_true, &mut rng)?;

    let x0 = model.adjoint_measurement(&y)?;
    println!("zero-filled psnr: {:.2} dB", psnr(&x0, &x_true, 1.0)?);

    let delta = 0.01;
    let reg = AnalyticRegularizer::smoothed_tv(delta)?;
    let mut config = SolverConfig::new(Scheme::IdeqProx);
    config.lambda = 0.02;
    config.tau = 1.5 / (config.lambda * 8.0 / delta);
    config.alpha = 0.2;
    config.restart_budget = 5000.0;
    config.max_iters = 12000;
    config.eps = 1e-7;
    config.record_objective = false;

    let report = solve(&y, &model, &reg, &config, &x0)?;
    println!(
        "reconstructed: psnr {:.2} dB, ssim {:.4}, {} iterations ({:.1}s)",
        psnr(&report.x_hat, &x_true, 1.0)?,
        ssim(&report.x_hat, &x_true)?,
        report.iterations,
        report.wall_secs
    );
    Ok(())
}
