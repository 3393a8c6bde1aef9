//! Jacobian-free training of the solver parameters: MSE loss, the gradient
//! through one operator application at the computed fixed point, Adam, the
//! epoch loop with early stopping, and checkpointing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use crate::conv::PadMode;
use crate::error::{Error, Result};
use crate::fidelity::{DataFidelity, Measurement};
use crate::grid::GridImage;
use crate::metrics::{mse, psnr, ssim};
use crate::net::{sigmoid, NetConfig, SmoothPotentialNet};
use crate::regularizer::GradStepRegularizer;
use crate::rng::SeededRng;
use crate::solver::{solve, Scheme, SolverConfig};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Mean squared error training loss.
pub fn mse_loss(x_hat: &GridImage, x_star: &GridImage) -> Result<f64> {
    mse(x_hat, x_star)
}

/// First/second moment state of the Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_update(state: &mut AdamState, params: &mut [f64], grad: &[f64], lr: f64) {
    debug_assert_eq!(params.len(), grad.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grad[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// The full learnable bundle: network weights plus the scalar solver
/// parameters.
#[derive(Debug, Clone)]
pub struct TrainableModel {
    pub reg: GradStepRegularizer,
    pub lambda: f64,
    pub tau: f64,
    pub alpha: f64,
}

const SIGMA_FLOOR: f64 = 1e-12;
const ALPHA_CLAMP: f64 = 1e-9;

fn logit(p: f64) -> f64 {
    let p = p.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP);
    (p / (1.0 - p)).ln()
}

impl TrainableModel {
    pub fn new(reg: GradStepRegularizer, lambda: f64, tau: f64, alpha: f64) -> Self {
        TrainableModel {
            reg,
            lambda,
            tau,
            alpha,
        }
    }

    /// Number of raw optimization variables: network weights plus the
    /// four reparameterized scalars.
    pub fn raw_len(&self) -> usize {
        self.reg.net().param_len() + 4
    }

    /// Packs into the unconstrained optimization space. The scalars go
    /// through range-preserving transforms (log for lambda/tau/sigma,
    /// logit for alpha) so gradient steps cannot violate their domains.
    pub fn pack_raw(&self) -> Vec<f64> {
        let mut raw = self.reg.net().params().to_vec();
        raw.push(self.lambda.max(SIGMA_FLOOR).ln());
        raw.push(self.tau.max(SIGMA_FLOOR).ln());
        raw.push(logit(self.alpha));
        raw.push(self.reg.sigma().max(SIGMA_FLOOR).ln());
        raw
    }

    pub fn apply_raw(&mut self, raw: &[f64]) -> Result<()> {
        let n = self.reg.net().param_len();
        if raw.len() != n + 4 {
            return Err(Error::shape_mismatch(
                format!("{} raw parameters", n + 4),
                format!("{}", raw.len()),
            ));
        }
        self.reg.net_mut().set_params(&raw[..n])?;
        self.lambda = raw[n].exp();
        self.tau = raw[n + 1].exp();
        self.alpha = sigmoid(raw[n + 2]);
        self.reg.set_sigma(raw[n + 3].exp());
        Ok(())
    }

    /// Chain rule from actual-parameter gradients to the raw space, with
    /// frozen groups zeroed.
    fn raw_gradient(&self, g: &JfbGradient, flags: &LearnFlags) -> Vec<f64> {
        let n = self.reg.net().param_len();
        let mut raw = vec![0.0; n + 4];
        if flags.theta {
            raw[..n].copy_from_slice(&g.theta);
        }
        if flags.lambda {
            raw[n] = g.lambda * self.lambda;
        }
        if flags.tau {
            raw[n + 1] = g.tau * self.tau;
        }
        if flags.alpha {
            raw[n + 2] = g.alpha * self.alpha * (1.0 - self.alpha);
        }
        if flags.sigma {
            raw[n + 3] = g.sigma * self.reg.sigma();
        }
        raw
    }
}

/// Gradient of the loss through one operator application, per parameter
/// group, in actual-parameter space.
#[derive(Debug, Clone)]
pub struct JfbGradient {
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub tau: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub loss: f64,
}

/// Jacobian-free gradient: the fixed-point estimate is treated as constant
/// and the loss is differentiated through a single application of the
/// scheme's two-argument operator at `(x_hat, x_hat)`.
///
/// The extrapolation is the identity there, so the inertia parameter
/// receives an exactly zero gradient; the step-size gradient vanishes only
/// at an exact fixed point.
pub fn jfb_gradient(
    scheme: Scheme,
    x_hat: &GridImage,
    x_star: &GridImage,
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    model: &TrainableModel,
) -> Result<JfbGradient> {
    x_hat.check_same_shape(x_star)?;
    let prox_flavor = match scheme {
        Scheme::IdeqProx | Scheme::RedProx => true,
        _ => false,
    };
    let z = x_hat; // momentum at equal arguments is the identity
    let grad_g = model.reg.g_grad(z)?;
    let (lambda, tau) = (model.lambda, model.tau);
    let n = x_hat.len() as f64;

    let (x_out, lbar_inner, tau_grad_extra) = if prox_flavor {
        let v = z.add_scaled(&grad_g, -tau * lambda);
        let x_out = fidelity.prox(&v, y, tau)?;
        let lbar = x_out.sub(x_star).scale(2.0 / n);
        let lbar_inner = fidelity.prox_jacobian_adjoint(&lbar, y, tau)?;
        let dtau = fidelity.prox_dtau(&v, y, tau)?;
        let extra = dtau.dot(&lbar);
        (x_out, lbar_inner, extra)
    } else {
        let grad_f = fidelity.grad(z, y)?;
        let total = grad_f.add_scaled(&grad_g, lambda);
        let x_out = z.add_scaled(&total, -tau);
        let lbar = x_out.sub(x_star).scale(2.0 / n);
        let tau_grad = -total.dot(&lbar);
        (x_out, lbar, tau_grad)
    };

    let loss = mse_loss(&x_out, x_star)?;
    let contraction = model.reg.param_contraction(z, &lbar_inner)?;
    let scale = -tau * lambda;
    let theta: Vec<f64> = contraction.theta.iter().map(|t| scale * t).collect();
    let sigma = scale * contraction.sigma;
    let lambda_grad = -tau * grad_g.dot(&lbar_inner);
    let tau_grad = if prox_flavor {
        tau_grad_extra - lambda * grad_g.dot(&lbar_inner)
    } else {
        tau_grad_extra
    };

    let out = JfbGradient {
        theta,
        lambda: lambda_grad,
        tau: tau_grad,
        alpha: 0.0,
        sigma,
        loss,
    };
    let finite = out.theta.iter().all(|v| v.is_finite())
        && out.lambda.is_finite()
        && out.tau.is_finite()
        && out.sigma.is_finite()
        && out.loss.is_finite();
    if !finite {
        return Err(Error::InvalidArgument(
            "non-finite training gradient".to_string(),
        ));
    }
    Ok(out)
}

/// Compensated (Kahan) elementwise accumulator; the per-epoch gradient sum
/// must be independent of the dataset order up to a tiny reassociation
/// error.
#[derive(Debug, Clone)]
pub struct KahanVec {
    sum: Vec<f64>,
    c: Vec<f64>,
}

impl KahanVec {
    pub fn new(len: usize) -> Self {
        KahanVec {
            sum: vec![0.0; len],
            c: vec![0.0; len],
        }
    }

    pub fn add(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.sum.len());
        for i in 0..values.len() {
            let y = values[i] - self.c[i];
            let t = self.sum[i] + y;
            self.c[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }

    pub fn into_sum(self) -> Vec<f64> {
        self.sum
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LearnFlags {
    pub theta: bool,
    pub lambda: bool,
    pub tau: bool,
    pub alpha: bool,
    pub sigma: bool,
}

impl Default for LearnFlags {
    fn default() -> Self {
        LearnFlags {
            theta: true,
            lambda: true,
            tau: true,
            alpha: true,
            sigma: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub learn: LearnFlags,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            max_epochs: 500,
            patience: 25,
            learn: LearnFlags::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// One training/validation pair with its solver initialization.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub x_true: GridImage,
    pub y: Measurement,
    pub x0: GridImage,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<TrainSample>,
    pub val: Vec<TrainSample>,
}

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_psnr: f64,
    pub val_ssim: f64,
    pub diverged_count: usize,
    pub wall_time_s: f64,
}

pub const TRAIN_LOG_CSV_HEADER: &str =
    "epoch,train_loss,val_psnr,val_ssim,diverged_count,wall_time_s";

pub fn train_log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from(TRAIN_LOG_CSV_HEADER);
    out.push('\n');
    for row in log {
        out.push_str(&format!(
            "{},{:.12e},{:.8},{:.8},{},{:.6}\n",
            row.epoch, row.train_loss, row.val_psnr, row.val_ssim, row.diverged_count,
            row.wall_time_s
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
    pub epochs_run: usize,
    pub total_diverged: usize,
}

fn forward_config(solver: &SolverConfig) -> SolverConfig {
    // fixed iteration budget, no residual stop, no per-step instrumentation
    let mut cfg = solver.clone();
    cfg.eps = 0.0;
    cfg.record_objective = false;
    cfg
}

fn evaluate(
    dataset: &[TrainSample],
    fidelity: &dyn DataFidelity,
    model: &TrainableModel,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let mut psnr_acc = 0.0;
    let mut ssim_acc = 0.0;
    let mut count = 0usize;
    for sample in dataset {
        match solve(&sample.y, fidelity, &model.reg, &solver_with_model(cfg, model), &sample.x0) {
            Ok(report) => {
                psnr_acc += psnr(&report.x_hat, &sample.x_true, 1.0)?;
                ssim_acc += ssim(&report.x_hat, &sample.x_true)?;
                count += 1;
            }
            Err(Error::Diverged(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if count == 0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok((psnr_acc / count as f64, ssim_acc / count as f64))
}

fn solver_with_model(cfg: &SolverConfig, model: &TrainableModel) -> SolverConfig {
    let mut out = cfg.clone();
    out.lambda = model.lambda;
    out.tau = model.tau;
    out.alpha = model.alpha;
    out
}

/// Epoch loop: sweep the training set with forward solves under a fixed
/// iteration budget, accumulate the per-sample gradients, take one Adam
/// step per epoch on the summed gradient, validate, and early-stop on the
/// validation PSNR.
pub fn train_loop(
    dataset: &Dataset,
    fidelity: &dyn DataFidelity,
    model: &mut TrainableModel,
    solver_cfg: &SolverConfig,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    solver_cfg.validate()?;
    let fwd_template = forward_config(solver_cfg);
    let rng = SeededRng::new(config.seed);
    let started = Instant::now();

    let mut adam = AdamState::new(model.raw_len());
    let mut raw = model.pack_raw();
    model.apply_raw(&raw)?; // canonicalize through the transforms

    let mut log = Vec::new();
    let mut total_diverged = 0usize;

    let (val_psnr, val_ssim) = evaluate(&dataset.val, fidelity, model, &fwd_template)?;
    log.push(EpochLog {
        epoch: 0,
        train_loss: f64::NAN,
        val_psnr,
        val_ssim,
        diverged_count: 0,
        wall_time_s: started.elapsed().as_secs_f64(),
    });

    let mut best_epoch = 0usize;
    let mut best_psnr = val_psnr;
    let mut best = make_checkpoint(model, 0, val_psnr, &rng);

    let jfb_scheme = solver_cfg.scheme;
    let mut epochs_run = 0usize;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        let mut acc = KahanVec::new(model.raw_len());
        let mut loss_acc = 0.0;
        let mut loss_count = 0usize;
        let mut diverged = 0usize;
        let fwd = solver_with_model(&fwd_template, model);
        for sample in &dataset.train {
            let report = match solve(&sample.y, fidelity, &model.reg, &fwd, &sample.x0) {
                Ok(r) => r,
                Err(Error::Diverged(_)) => {
                    diverged += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let grad = match jfb_gradient(
                jfb_scheme,
                &report.x_hat,
                &sample.x_true,
                &sample.y,
                fidelity,
                model,
            ) {
                Ok(g) => g,
                Err(Error::InvalidArgument(_)) => {
                    diverged += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            loss_acc += grad.loss;
            loss_count += 1;
            acc.add(&model.raw_gradient(&grad, &config.learn));
        }
        total_diverged += diverged;
        let summed = acc.into_sum();
        adam_update(&mut adam, &mut raw, &summed, config.learning_rate);
        model.apply_raw(&raw)?;

        let (val_psnr, val_ssim) = evaluate(&dataset.val, fidelity, model, &fwd_template)?;
        log.push(EpochLog {
            epoch,
            train_loss: if loss_count > 0 {
                loss_acc / loss_count as f64
            } else {
                f64::NAN
            },
            val_psnr,
            val_ssim,
            diverged_count: diverged,
            wall_time_s: started.elapsed().as_secs_f64(),
        });

        if val_psnr > best_psnr {
            best_psnr = val_psnr;
            best_epoch = epoch;
            best = make_checkpoint(model, epoch, val_psnr, &rng);
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    Ok(TrainReport {
        best,
        log,
        epochs_run,
        total_diverged,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Parameter snapshot that re-validates bit-exactly after a round trip.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub image_channels: usize,
    pub hidden_channels: Vec<usize>,
    pub noise_channel: bool,
    pub softplus_last: bool,
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub tau: f64,
    pub alpha: f64,
    pub epoch: usize,
    pub val_psnr: f64,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
}

fn make_checkpoint(model: &TrainableModel, epoch: usize, val_psnr: f64, rng: &SeededRng) -> Checkpoint {
    let cfg = model.reg.net().config();
    let (seed, pos) = rng.state();
    Checkpoint {
        image_channels: cfg.image_channels,
        hidden_channels: cfg.hidden_channels.clone(),
        noise_channel: cfg.noise_channel,
        softplus_last: cfg.softplus_last,
        theta: model.reg.net().params().to_vec(),
        sigma: model.reg.sigma(),
        lambda: model.lambda,
        tau: model.tau,
        alpha: model.alpha,
        epoch,
        val_psnr,
        rng_seed: seed,
        rng_word_pos: pos,
    }
}

impl Checkpoint {
    /// Rebuilds the trainable bundle the snapshot was taken from.
    pub fn restore(&self) -> Result<TrainableModel> {
        let mut net = SmoothPotentialNet::new(NetConfig {
            image_channels: self.image_channels,
            hidden_channels: self.hidden_channels.clone(),
            noise_channel: self.noise_channel,
            pad: PadMode::Zero,
            softplus_last: self.softplus_last,
        });
        net.set_params(&self.theta)?;
        let reg = GradStepRegularizer::new(net, self.sigma);
        Ok(TrainableModel::new(reg, self.lambda, self.tau, self.alpha))
    }
}

const CKPT_MAGIC: &str = "idqckpt";

/// Header line with the structure, then a float64 blob holding
/// `[sigma, lambda, tau, alpha, val_psnr, theta...]` little-endian.
pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let hidden = if ckpt.hidden_channels.is_empty() {
        "-".to_string()
    } else {
        ckpt.hidden_channels
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    writeln!(
        w,
        "{CKPT_MAGIC} v1 {} {} {} {} {} {} {} {}",
        ckpt.image_channels,
        hidden,
        u8::from(ckpt.noise_channel),
        u8::from(ckpt.softplus_last),
        ckpt.theta.len(),
        ckpt.epoch,
        ckpt.rng_seed,
        ckpt.rng_word_pos,
    )?;
    for v in [ckpt.sigma, ckpt.lambda, ckpt.tau, ckpt.alpha, ckpt.val_psnr]
        .iter()
        .chain(ckpt.theta.iter())
    {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("missing checkpoint header".to_string()))?;
    let header = String::from_utf8_lossy(&bytes[..newline]).to_string();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 10 || fields[0] != CKPT_MAGIC || fields[1] != "v1" {
        return Err(Error::Parse(format!("bad checkpoint header: {header}")));
    }
    let parse_usize = |s: &str| -> Result<usize> {
        s.parse().map_err(|e| Error::Parse(format!("checkpoint header: {e}")))
    };
    let image_channels = parse_usize(fields[2])?;
    let hidden_channels: Vec<usize> = if fields[3] == "-" {
        Vec::new()
    } else {
        fields[3]
            .split(',')
            .map(parse_usize)
            .collect::<Result<Vec<_>>>()?
    };
    let noise_channel = fields[4] == "1";
    let softplus_last = fields[5] == "1";
    let theta_len = parse_usize(fields[6])?;
    let epoch = parse_usize(fields[7])?;
    let rng_seed: u64 = fields[8]
        .parse()
        .map_err(|e| Error::Parse(format!("checkpoint seed: {e}")))?;
    let rng_word_pos: u128 = fields[9]
        .parse()
        .map_err(|e| Error::Parse(format!("checkpoint rng pos: {e}")))?;

    let payload = &bytes[newline + 1..];
    let expected = (5 + theta_len) * 8;
    if payload.len() != expected {
        return Err(Error::Parse(format!(
            "checkpoint payload: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|p| f64::from_le_bytes(p.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        image_channels,
        hidden_channels,
        noise_channel,
        softplus_last,
        sigma: values[0],
        lambda: values[1],
        tau: values[2],
        alpha: values[3],
        val_psnr: values[4],
        theta: values[5..].to_vec(),
        epoch,
        rng_seed,
        rng_word_pos,
    })
}
