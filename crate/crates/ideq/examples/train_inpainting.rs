//! Trains the learned prior end to end on a small synthetic inpainting
//! task: forward fixed-point solves under a fixed iteration budget, loss
//! gradients through one operator application at the estimate, one Adam
//! step per epoch, early stopping on validation PSNR.
//!
//! Run with: cargo run --release --example train_inpainting

use ideq::harness::{build_dataset, ExperimentConfig, GenKind, MaskKindKey, Problem, RegKind};
use ideq::net::{NetConfig, SmoothPotentialNet};
use ideq::regularizer::GradStepRegularizer;
use ideq::rng::SeededRng;
use ideq::solver::{Scheme, SolverConfig};
use ideq::train::{train_loop, write_checkpoint, LearnFlags, TrainConfig, TrainableModel};

fn main() -> ideq::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.problem = Problem::Inpainting;
    cfg.mask_kind = MaskKindKey::RandomPixel;
    cfg.mask_p = 0.5;
    cfg.sigma_y = 1.0 / 255.0;
    cfg.gen_kind = GenKind::PiecewiseConstant;
    cfg.gen_size = 16;
    cfg.train_count = 16;
    cfg.val_count = 4;
    cfg.regularizer = RegKind::GradStep;
    cfg.seed = 7;
    let (dataset, fidelity) = build_dataset(&cfg)?;

    let mut net = SmoothPotentialNet::new(NetConfig::default());
    let mut rng = SeededRng::new(99);
    net.init_random(&mut rng);
    let reg = GradStepRegularizer::new(net, 0.03);
    let mut model = TrainableModel::new(reg, 0.5, 0.8, 0.2);

    let mut solver = SolverConfig::new(Scheme::IdeqGrad);
    solver.max_iters = 50;
    solver.restart_budget = 500.0;
    solver.lambda = model.lambda;
    solver.tau = model.tau;
    solver.alpha = model.alpha;

    let train_cfg = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 30,
        patience: 30,
        learn: LearnFlags::default(),
        seed: 7,
    };

    let report = train_loop(&dataset, fidelity.as_ref(), &mut model, &solver, &train_cfg)?;
    for row in &report.log {
        println!(
            "epoch {:>2}: train_loss {:>10.3e}  val_psnr {:.3} dB",
            row.epoch, row.train_loss, row.val_psnr
        );
    }
    println!(
        "best epoch {} at {:.3} dB (init {:.3} dB); learned lambda {:.3}, tau {:.3}, alpha {:.3}, sigma {:.4}",
        report.best.epoch,
        report.best.val_psnr,
        report.log[0].val_psnr,
        report.best.lambda,
        report.best.tau,
        report.best.alpha,
        report.best.sigma
    );

    let path = std::env::temp_dir().join("ideq_trained.ckpt");
    write_checkpoint(&path, &report.best)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
