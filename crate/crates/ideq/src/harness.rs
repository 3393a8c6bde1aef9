//! Experiment harness: flat key=value configuration, synthetic dataset
//! generation, the solve/train/bench command implementations, and
//! convergence-rate fitting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fidelity::{
    DataFidelity, InpaintingModel, MaskedFourierModel, Measurement, RicianModel,
};
use crate::grid::GridImage;
use crate::io;
use crate::mask::{generate_mask, MaskKind};
use crate::metrics::{psnr, ssim};
use crate::net::{NetConfig, SmoothPotentialNet};
use crate::regularizer::{AnalyticRegularizer, GradStepRegularizer, Regularizer};
use crate::rng::SeededRng;
use crate::solver::{
    solve, unrolled_solve, RestartSemantics, Scheme, SolveReport, SolverConfig, UnrolledKind,
};
use crate::train::{
    read_checkpoint, train_log_to_csv, train_loop, write_checkpoint, Dataset, LearnFlags,
    TrainConfig, TrainSample, TrainableModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Mri,
    Inpainting,
    Rician,
}

impl Problem {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "mri" => Ok(Problem::Mri),
            "inpainting" => Ok(Problem::Inpainting),
            "rician" => Ok(Problem::Rician),
            other => Err(Error::Config(format!("unknown problem `{other}`"))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Problem::Mri => "mri",
            Problem::Inpainting => "inpainting",
            Problem::Rician => "rician",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegKind {
    GradStep,
    Tikhonov,
    SmoothedTv,
}

impl RegKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "gradstep" => Ok(RegKind::GradStep),
            "tikhonov" => Ok(RegKind::Tikhonov),
            "smoothed-tv" => Ok(RegKind::SmoothedTv),
            other => Err(Error::Config(format!("unknown regularizer `{other}`"))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            RegKind::GradStep => "gradstep",
            RegKind::Tikhonov => "tikhonov",
            RegKind::SmoothedTv => "smoothed-tv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    PiecewiseConstant,
    SmoothBump,
    SheppLikePhantom,
}

impl GenKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "piecewise-constant" => Ok(GenKind::PiecewiseConstant),
            "smooth-bump" => Ok(GenKind::SmoothBump),
            "shepp-like-phantom" => Ok(GenKind::SheppLikePhantom),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            GenKind::PiecewiseConstant => "piecewise-constant",
            GenKind::SmoothBump => "smooth-bump",
            GenKind::SheppLikePhantom => "shepp-like-phantom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKindKey {
    RandomPixel,
    Cartesian,
}

impl MaskKindKey {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "random-pixel" => Ok(MaskKindKey::RandomPixel),
            "cartesian" => Ok(MaskKindKey::Cartesian),
            other => Err(Error::Config(format!("unknown mask kind `{other}`"))),
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            MaskKindKey::RandomPixel => "random-pixel",
            MaskKindKey::Cartesian => "cartesian",
        }
    }
}

/// Full experiment description. Every field has a default; the config file
/// overrides individual keys and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub scheme: Scheme,
    pub schemes: Vec<Scheme>,
    pub lambda: f64,
    pub tau: f64,
    pub alpha: f64,
    pub restart_budget: f64,
    pub max_iters: usize,
    pub eps: f64,
    pub averaging: bool,
    pub restart_semantics: Option<RestartSemantics>,
    pub max_total_steps: usize, // 0 = engine default
    pub sigma_y: f64,
    pub mask_kind: MaskKindKey,
    pub mask_p: f64,
    pub acceleration: f64,
    pub regularizer: RegKind,
    pub mu: f64,
    pub delta: f64,
    pub sigma_denoiser: f64,
    pub hidden_channels: Vec<usize>,
    pub checkpoint: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub gen_kind: GenKind,
    pub gen_count: usize,
    pub gen_size: usize,
    pub train_count: usize,
    pub val_count: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub learn_theta: bool,
    pub learn_lambda: bool,
    pub learn_tau: bool,
    pub learn_alpha: bool,
    pub learn_sigma: bool,
    pub unrolled_steps: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        // solver scalars follow the published grid-search values for the
        // accelerated masked-Fourier setup
        ExperimentConfig {
            problem: Problem::Mri,
            scheme: Scheme::IdeqGrad,
            schemes: vec![Scheme::Red, Scheme::IdeqGrad],
            lambda: 0.65,
            tau: 0.5,
            alpha: 0.2,
            restart_budget: 5000.0,
            max_iters: 100,
            eps: 1e-4,
            averaging: false,
            restart_semantics: None,
            max_total_steps: 0,
            sigma_y: 1.0 / 255.0,
            mask_kind: MaskKindKey::Cartesian,
            mask_p: 0.5,
            acceleration: 8.0,
            regularizer: RegKind::GradStep,
            mu: 1.0,
            delta: 0.05,
            sigma_denoiser: 0.03,
            hidden_channels: vec![8, 8],
            checkpoint: None,
            data_dir: None,
            gen_kind: GenKind::PiecewiseConstant,
            gen_count: 4,
            gen_size: 32,
            train_count: 16,
            val_count: 4,
            learning_rate: 1e-5,
            max_epochs: 500,
            patience: 25,
            learn_theta: true,
            learn_lambda: true,
            learn_tau: true,
            learn_alpha: true,
            learn_sigma: true,
            unrolled_steps: 6,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected true/false, got `{other}`"))),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    if v == "inf" {
        return Ok(f64::INFINITY);
    }
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|e| Error::Config(format!("{key}: {e}")))
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "problem" => self.problem = Problem::parse(value)?,
            "scheme" => self.scheme = Scheme::parse(value)?,
            "schemes" => {
                self.schemes = value
                    .split(',')
                    .map(|s| Scheme::parse(s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "lambda" => self.lambda = parse_f64(key, value)?,
            "tau" => self.tau = parse_f64(key, value)?,
            "alpha" => self.alpha = parse_f64(key, value)?,
            "restart_budget" => self.restart_budget = parse_f64(key, value)?,
            "max_iters" => self.max_iters = parse_usize(key, value)?,
            "eps" => self.eps = parse_f64(key, value)?,
            "averaging" => self.averaging = parse_bool(key, value)?,
            "restart_semantics" => {
                self.restart_semantics = match value {
                    "default" => None,
                    "algorithm1" => Some(RestartSemantics::FullReset),
                    "algorithm2" => Some(RestartSemantics::ShiftOnly),
                    other => {
                        return Err(Error::Config(format!(
                            "restart_semantics: expected default/algorithm1/algorithm2, got `{other}`"
                        )))
                    }
                }
            }
            "max_total_steps" => self.max_total_steps = parse_usize(key, value)?,
            "sigma_y" => self.sigma_y = parse_f64(key, value)?,
            "mask_kind" => self.mask_kind = MaskKindKey::parse(value)?,
            "mask_p" => self.mask_p = parse_f64(key, value)?,
            "acceleration" => self.acceleration = parse_f64(key, value)?,
            "regularizer" => self.regularizer = RegKind::parse(value)?,
            "mu" => self.mu = parse_f64(key, value)?,
            "delta" => self.delta = parse_f64(key, value)?,
            "sigma_denoiser" => self.sigma_denoiser = parse_f64(key, value)?,
            "hidden_channels" => {
                self.hidden_channels = value
                    .split(',')
                    .map(|s| parse_usize(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
            }
            "checkpoint" => {
                self.checkpoint = if value == "-" {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "data_dir" => {
                self.data_dir = if value == "-" {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "gen_kind" => self.gen_kind = GenKind::parse(value)?,
            "gen_count" => self.gen_count = parse_usize(key, value)?,
            "gen_size" => self.gen_size = parse_usize(key, value)?,
            "train_count" => self.train_count = parse_usize(key, value)?,
            "val_count" => self.val_count = parse_usize(key, value)?,
            "learning_rate" => self.learning_rate = parse_f64(key, value)?,
            "max_epochs" => self.max_epochs = parse_usize(key, value)?,
            "patience" => self.patience = parse_usize(key, value)?,
            "learn_theta" => self.learn_theta = parse_bool(key, value)?,
            "learn_lambda" => self.learn_lambda = parse_bool(key, value)?,
            "learn_tau" => self.learn_tau = parse_bool(key, value)?,
            "learn_alpha" => self.learn_alpha = parse_bool(key, value)?,
            "learn_sigma" => self.learn_sigma = parse_bool(key, value)?,
            "unrolled_steps" => self.unrolled_steps = parse_usize(key, value)?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|e| Error::Config(format!("seed: {e}")))?
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Canonical round-trippable form: every key, fixed order.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let fmt_f64 = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                format!("{v}")
            }
        };
        let _ = writeln!(s, "problem = {}", self.problem.as_str());
        let _ = writeln!(s, "scheme = {}", self.scheme.as_str());
        let _ = writeln!(
            s,
            "schemes = {}",
            self.schemes
                .iter()
                .map(|x| x.as_str())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "lambda = {}", fmt_f64(self.lambda));
        let _ = writeln!(s, "tau = {}", fmt_f64(self.tau));
        let _ = writeln!(s, "alpha = {}", fmt_f64(self.alpha));
        let _ = writeln!(s, "restart_budget = {}", fmt_f64(self.restart_budget));
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "eps = {}", fmt_f64(self.eps));
        let _ = writeln!(s, "averaging = {}", self.averaging);
        let _ = writeln!(
            s,
            "restart_semantics = {}",
            match self.restart_semantics {
                None => "default",
                Some(RestartSemantics::FullReset) => "algorithm1",
                Some(RestartSemantics::ShiftOnly) => "algorithm2",
            }
        );
        let _ = writeln!(s, "max_total_steps = {}", self.max_total_steps);
        let _ = writeln!(s, "sigma_y = {}", fmt_f64(self.sigma_y));
        let _ = writeln!(s, "mask_kind = {}", self.mask_kind.as_str());
        let _ = writeln!(s, "mask_p = {}", fmt_f64(self.mask_p));
        let _ = writeln!(s, "acceleration = {}", fmt_f64(self.acceleration));
        let _ = writeln!(s, "regularizer = {}", self.regularizer.as_str());
        let _ = writeln!(s, "mu = {}", fmt_f64(self.mu));
        let _ = writeln!(s, "delta = {}", fmt_f64(self.delta));
        let _ = writeln!(s, "sigma_denoiser = {}", fmt_f64(self.sigma_denoiser));
        let _ = writeln!(
            s,
            "hidden_channels = {}",
            self.hidden_channels
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(
            s,
            "checkpoint = {}",
            self.checkpoint
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string())
        );
        let _ = writeln!(
            s,
            "data_dir = {}",
            self.data_dir
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string())
        );
        let _ = writeln!(s, "gen_kind = {}", self.gen_kind.as_str());
        let _ = writeln!(s, "gen_count = {}", self.gen_count);
        let _ = writeln!(s, "gen_size = {}", self.gen_size);
        let _ = writeln!(s, "train_count = {}", self.train_count);
        let _ = writeln!(s, "val_count = {}", self.val_count);
        let _ = writeln!(s, "learning_rate = {}", fmt_f64(self.learning_rate));
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "learn_theta = {}", self.learn_theta);
        let _ = writeln!(s, "learn_lambda = {}", self.learn_lambda);
        let _ = writeln!(s, "learn_tau = {}", self.learn_tau);
        let _ = writeln!(s, "learn_alpha = {}", self.learn_alpha);
        let _ = writeln!(s, "learn_sigma = {}", self.learn_sigma);
        let _ = writeln!(s, "unrolled_steps = {}", self.unrolled_steps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        s
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.scheme);
        cfg.lambda = self.lambda;
        cfg.tau = self.tau;
        cfg.alpha = self.alpha;
        cfg.restart_budget = self.restart_budget;
        cfg.max_iters = self.max_iters;
        cfg.eps = self.eps;
        cfg.averaging = self.averaging;
        cfg.restart_semantics = self.restart_semantics;
        cfg.max_total_steps = if self.max_total_steps == 0 {
            None
        } else {
            Some(self.max_total_steps)
        };
        cfg
    }

    fn learn_flags(&self) -> LearnFlags {
        LearnFlags {
            theta: self.learn_theta,
            lambda: self.learn_lambda,
            tau: self.learn_tau,
            alpha: self.learn_alpha,
            sigma: self.learn_sigma,
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic data generation
// ---------------------------------------------------------------------------

/// One synthetic image in `[0, 1]`.
pub fn gen_image(kind: GenKind, size: usize, rng: &mut SeededRng) -> GridImage {
    match kind {
        GenKind::PiecewiseConstant => {
            // background plus up to 5 rectangles from a 6-level palette
            let levels: Vec<f64> = (0..6).map(|_| rng.uniform()).collect();
            let mut img = GridImage::constant(size, size, levels[0]);
            for level in levels.iter().skip(1) {
                let r0 = rng.gen_range_usize(0, size);
                let r1 = rng.gen_range_usize(r0, size) + 1;
                let c0 = rng.gen_range_usize(0, size);
                let c1 = rng.gen_range_usize(c0, size) + 1;
                for r in r0..r1.min(size) {
                    for c in c0..c1.min(size) {
                        *img.at_mut(0, r, c) = *level;
                    }
                }
            }
            img
        }
        GenKind::SmoothBump => {
            let mut img = GridImage::zeros(size, size);
            let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.uniform() * size as f64,
                        rng.uniform() * size as f64,
                        0.15 * size as f64 * (0.5 + rng.uniform()),
                        0.3 + rng.uniform(),
                    )
                })
                .collect();
            for r in 0..size {
                for c in 0..size {
                    let mut v = 0.0;
                    for &(cr, cc, width, amp) in &bumps {
                        let dr = r as f64 - cr;
                        let dc = c as f64 - cc;
                        v += amp * (-(dr * dr + dc * dc) / (2.0 * width * width)).exp();
                    }
                    *img.at_mut(0, r, c) = v;
                }
            }
            let max = img.data().iter().cloned().fold(f64::MIN, f64::max);
            let min = img.data().iter().cloned().fold(f64::MAX, f64::min);
            img.map(|v| (v - min) / (max - min).max(1e-12))
        }
        GenKind::SheppLikePhantom => {
            // a skull-like outer ellipse with a few interior ellipses
            let s = size as f64;
            let jitter = 0.05 * (rng.uniform() - 0.5);
            let ellipses: [(f64, f64, f64, f64, f64); 4] = [
                (0.5, 0.5 + jitter, 0.42, 0.36, 0.8),
                (0.5, 0.5 + jitter, 0.36, 0.30, -0.4),
                (0.38 + jitter, 0.45, 0.08, 0.14, 0.45),
                (0.62, 0.55 + jitter, 0.10, 0.08, 0.3),
            ];
            let mut img = GridImage::zeros(size, size);
            for r in 0..size {
                for c in 0..size {
                    let y = (r as f64 + 0.5) / s;
                    let x = (c as f64 + 0.5) / s;
                    let mut v = 0.0;
                    for &(cy, cx, ay, ax, amp) in &ellipses {
                        let dy = (y - cy) / ay;
                        let dx = (x - cx) / ax;
                        if dy * dy + dx * dx <= 1.0 {
                            v += amp;
                        }
                    }
                    *img.at_mut(0, r, c) = v.clamp(0.0, 1.0);
                }
            }
            img
        }
    }
}

/// Writes `count` deterministic PGM images to `out_dir`.
pub fn gen_data(
    kind: GenKind,
    count: usize,
    size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if size < 8 {
        return Err(Error::InvalidArgument(format!(
            "generator size must be >= 8, got {size}"
        )));
    }
    fs::create_dir_all(out_dir)?;
    let mut rng = SeededRng::new(seed);
    let mut paths = Vec::new();
    for i in 0..count {
        let img = gen_image(kind, size, &mut rng);
        let path = out_dir.join(format!("{}_{i:03}.pgm", kind.as_str()));
        io::write_pgm(&path, &img)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Loads every `.pgm` in a directory, sorted by filename.
pub fn load_image_dir(dir: &Path) -> Result<Vec<GridImage>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |e| e == "pgm"))
        .collect();
    files.sort();
    files.iter().map(|p| io::read_pgm(p)).collect()
}

// ---------------------------------------------------------------------------
// Problem assembly
// ---------------------------------------------------------------------------

pub struct ProblemInstance {
    pub fidelity: Box<dyn DataFidelity>,
    pub y: Measurement,
    pub x_true: GridImage,
    pub x0: GridImage,
}

pub fn build_fidelity(
    config: &ExperimentConfig,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<Box<dyn DataFidelity>> {
    let mask_kind = match config.mask_kind {
        MaskKindKey::RandomPixel => MaskKind::RandomPixel { p: config.mask_p },
        MaskKindKey::Cartesian => MaskKind::CartesianLines {
            acceleration: config.acceleration,
        },
    };
    Ok(match config.problem {
        Problem::Mri => Box::new(MaskedFourierModel::new(
            generate_mask(mask_kind, height, width, rng)?,
            config.sigma_y,
        )?),
        Problem::Inpainting => Box::new(InpaintingModel::new(
            generate_mask(mask_kind, height, width, rng)?,
            config.sigma_y,
        )?),
        Problem::Rician => Box::new(RicianModel::new(config.sigma_y)?),
    })
}

pub fn build_regularizer(config: &ExperimentConfig, rng: &mut SeededRng) -> Result<RegularizerChoice> {
    match config.regularizer {
        RegKind::Tikhonov => Ok(RegularizerChoice::Analytic(AnalyticRegularizer::tikhonov(
            config.mu,
        ))),
        RegKind::SmoothedTv => Ok(RegularizerChoice::Analytic(AnalyticRegularizer::smoothed_tv(
            config.delta,
        )?)),
        RegKind::GradStep => {
            if let Some(path) = &config.checkpoint {
                let ckpt = read_checkpoint(path)?;
                let model = ckpt.restore()?;
                Ok(RegularizerChoice::GradStep(Box::new(model)))
            } else {
                let mut net = SmoothPotentialNet::new(NetConfig {
                    image_channels: 1,
                    hidden_channels: config.hidden_channels.clone(),
                    noise_channel: true,
                    pad: crate::conv::PadMode::Zero,
                    softplus_last: false,
                });
                net.init_random(rng);
                let reg = GradStepRegularizer::new(net, config.sigma_denoiser);
                Ok(RegularizerChoice::GradStep(Box::new(TrainableModel::new(
                    reg,
                    config.lambda,
                    config.tau,
                    config.alpha,
                ))))
            }
        }
    }
}

pub enum RegularizerChoice {
    GradStep(Box<TrainableModel>),
    Analytic(AnalyticRegularizer),
}

impl RegularizerChoice {
    pub fn regularizer(&self) -> &dyn Regularizer {
        match self {
            RegularizerChoice::GradStep(m) => &m.reg,
            RegularizerChoice::Analytic(a) => a,
        }
    }

    pub fn gradstep(&self) -> Option<&TrainableModel> {
        match self {
            RegularizerChoice::GradStep(m) => Some(m),
            RegularizerChoice::Analytic(_) => None,
        }
    }
}

/// Simulates measurements and solver initializations for a set of images.
pub fn build_instances(
    config: &ExperimentConfig,
    images: &[GridImage],
    rng: &mut SeededRng,
) -> Result<Vec<ProblemInstance>> {
    let mut out = Vec::new();
    for x_true in images {
        let fidelity = build_fidelity(config, x_true.height(), x_true.width(), rng)?;
        let y = fidelity.simulate(x_true, rng)?;
        let x0 = fidelity.adjoint_measurement(&y)?;
        out.push(ProblemInstance {
            fidelity,
            y,
            x_true: x_true.clone(),
            x0,
        });
    }
    Ok(out)
}

fn dataset_images(config: &ExperimentConfig, count: usize) -> Result<Vec<GridImage>> {
    if let Some(dir) = &config.data_dir {
        let images = load_image_dir(dir)?;
        if images.is_empty() {
            return Err(Error::Config(format!("no .pgm images in {}", dir.display())));
        }
        Ok(images.into_iter().take(count.max(1)).collect())
    } else {
        let mut rng = SeededRng::new(config.seed ^ 0x9e3779b97f4a7c15);
        Ok((0..count.max(1))
            .map(|_| gen_image(config.gen_kind, config.gen_size, &mut rng))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// solve command
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub scheme: Scheme,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub iterations: usize,
    pub restarts: usize,
    pub wall_secs: f64,
    pub averaging_fallback: bool,
}

impl SolveSummary {
    pub fn line(&self) -> String {
        format!(
            "scheme={} psnr={:.4} ssim={} iterations={} restarts={} wall_s={:.4}",
            self.scheme.as_str(),
            self.psnr,
            self.ssim.map_or("n/a".to_string(), |v| format!("{v:.4}")),
            self.iterations,
            self.restarts,
            self.wall_secs
        )
    }
}

fn maybe_ssim(a: &GridImage, b: &GridImage) -> Option<f64> {
    ssim(a, b).ok()
}

/// Runs one reconstruction and writes the artifact set (estimate as PGM and
/// float blob, trajectory CSV, summary line). On divergence the partial
/// trajectory is still written and the error is returned.
pub fn run_solve(config: &ExperimentConfig) -> Result<SolveSummary> {
    fs::create_dir_all(&config.out_dir)?;
    let images = dataset_images(config, 1)?;
    let mut rng = SeededRng::new(config.seed);
    let reg_choice = build_regularizer(config, &mut rng)?;
    let mut instances = build_instances(config, &images[..1], &mut rng)?;
    let instance = instances.remove(0);
    let mut solver_cfg = config.solver_config();
    // the learned scalars travel with the model (identical to the config
    // values unless a checkpoint was loaded)
    if let Some(model) = reg_choice.gradstep() {
        solver_cfg.lambda = model.lambda;
        solver_cfg.tau = model.tau;
        solver_cfg.alpha = model.alpha;
    }

    // measurement dump
    match &instance.y {
        Measurement::Real(g) => io::write_blob_real(&config.out_dir.join("measurement.blob"), g)?,
        Measurement::Complex(g) => {
            io::write_blob_complex(&config.out_dir.join("measurement.blob"), g)?
        }
    }

    let report: SolveReport = match config.scheme {
        Scheme::Modl | Scheme::Varnet => {
            let model = reg_choice.gradstep().ok_or_else(|| {
                Error::Config("unrolled schemes need the gradstep regularizer".to_string())
            })?;
            let kind = if config.scheme == Scheme::Modl {
                UnrolledKind::Modl
            } else {
                UnrolledKind::Varnet
            };
            let started = std::time::Instant::now();
            let x_hat = unrolled_solve(
                kind,
                &instance.x0,
                &instance.y,
                instance.fidelity.as_ref(),
                model.reg.net(),
                model.reg.sigma(),
                model.tau,
                config.unrolled_steps,
            )?;
            SolveReport {
                x_hat,
                trajectory: Default::default(),
                stop: crate::solver::StopReason::BudgetComplete,
                iterations: config.unrolled_steps,
                restarts: 0,
                k0: None,
                averaging_fallback: false,
                wall_secs: started.elapsed().as_secs_f64(),
            }
        }
        _ => {
            let result = solve(
                &instance.y,
                instance.fidelity.as_ref(),
                reg_choice.regularizer(),
                &solver_cfg,
                &instance.x0,
            );
            match result {
                Ok(r) => r,
                Err(Error::Diverged(d)) => {
                    fs::write(config.out_dir.join("trajectory.csv"), d.trajectory.to_csv())?;
                    return Err(Error::Diverged(d));
                }
                Err(e) => return Err(e),
            }
        }
    };

    io::write_pgm(&config.out_dir.join("x_hat.pgm"), &report.x_hat)?;
    io::write_blob_real(&config.out_dir.join("x_hat.blob"), &report.x_hat)?;
    fs::write(config.out_dir.join("trajectory.csv"), report.trajectory.to_csv())?;

    let summary = SolveSummary {
        scheme: config.scheme,
        psnr: psnr(&report.x_hat, &instance.x_true, 1.0)?,
        ssim: maybe_ssim(&report.x_hat, &instance.x_true),
        iterations: report.iterations,
        restarts: report.restarts,
        wall_secs: report.wall_secs,
        averaging_fallback: report.averaging_fallback,
    };
    fs::write(config.out_dir.join("summary.txt"), summary.line() + "\n")?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// train command
// ---------------------------------------------------------------------------

pub fn build_dataset(config: &ExperimentConfig) -> Result<(Dataset, Box<dyn DataFidelity>)> {
    let total = config.train_count + config.val_count;
    let images = dataset_images(config, total)?;
    if images.len() < total {
        return Err(Error::Config(format!(
            "dataset holds {} images, need {total}",
            images.len()
        )));
    }
    let mut rng = SeededRng::new(config.seed);
    // one shared fidelity for the whole dataset
    let fidelity = build_fidelity(config, images[0].height(), images[0].width(), &mut rng)?;
    let mut samples = Vec::new();
    for x_true in images.iter().take(total) {
        let y = fidelity.simulate(x_true, &mut rng)?;
        let x0 = fidelity.adjoint_measurement(&y)?;
        samples.push(TrainSample {
            x_true: x_true.clone(),
            y,
            x0,
        });
    }
    let val = samples.split_off(config.train_count);
    Ok((Dataset { train: samples, val }, fidelity))
}

pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_psnr: f64,
    pub init_psnr: f64,
    pub epochs_run: usize,
    pub total_diverged: usize,
}

/// Trains per the config, writing the log CSV and the best checkpoint.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainSummary> {
    fs::create_dir_all(&config.out_dir)?;
    let (dataset, fidelity) = build_dataset(config)?;
    let mut rng = SeededRng::new(config.seed.wrapping_add(1));
    let reg_choice = build_regularizer(config, &mut rng)?;
    let mut model = match reg_choice {
        RegularizerChoice::GradStep(m) => *m,
        RegularizerChoice::Analytic(_) => {
            return Err(Error::Config(
                "training requires the gradstep regularizer".to_string(),
            ))
        }
    };
    let solver_cfg = config.solver_config();
    let train_cfg = TrainConfig {
        learning_rate: config.learning_rate,
        max_epochs: config.max_epochs,
        patience: config.patience,
        learn: config.learn_flags(),
        seed: config.seed,
    };
    let report = train_loop(&dataset, fidelity.as_ref(), &mut model, &solver_cfg, &train_cfg)?;
    fs::write(config.out_dir.join("train_log.csv"), train_log_to_csv(&report.log))?;
    write_checkpoint(&config.out_dir.join("checkpoint.bin"), &report.best)?;
    Ok(TrainSummary {
        best_epoch: report.best.epoch,
        best_psnr: report.best.val_psnr,
        init_psnr: report.log[0].val_psnr,
        epochs_run: report.epochs_run,
        total_diverged: report.total_diverged,
    })
}

// ---------------------------------------------------------------------------
// bench command
// ---------------------------------------------------------------------------

pub const BENCH_CSV_HEADER: &str =
    "row_kind,scheme,instance,psnr,ssim,iters_to_eps,wall_time_s,diverged";

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub instance: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub iters_to_eps: f64,
    pub wall_time_s: f64,
    pub diverged: bool,
}

#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub csv: String,
}

impl BenchReport {
    pub fn mean_iters(&self, scheme: Scheme) -> f64 {
        let rows: Vec<&BenchRow> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && !r.diverged)
            .collect();
        rows.iter().map(|r| r.iters_to_eps).sum::<f64>() / rows.len().max(1) as f64
    }

    pub fn mean_wall(&self, scheme: Scheme) -> f64 {
        let rows: Vec<&BenchRow> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && !r.diverged)
            .collect();
        rows.iter().map(|r| r.wall_time_s).sum::<f64>() / rows.len().max(1) as f64
    }
}

/// Runs every configured scheme over the same instances and writes the
/// comparison table (per-instance rows plus per-scheme means).
pub fn run_bench(config: &ExperimentConfig) -> Result<BenchReport> {
    if config.schemes.len() < 2 {
        return Err(Error::Config(
            "bench needs at least two schemes (key `schemes`)".to_string(),
        ));
    }
    fs::create_dir_all(&config.out_dir)?;
    let images = dataset_images(config, config.gen_count)?;
    let mut rng = SeededRng::new(config.seed);
    let reg_choice = build_regularizer(config, &mut rng)?;
    let instances = build_instances(config, &images, &mut rng)?;

    let pairs: Vec<(Scheme, usize)> = config
        .schemes
        .iter()
        .flat_map(|s| (0..instances.len()).map(move |i| (*s, i)))
        .collect();

    let rows: Vec<BenchRow> = pairs
        .par_iter()
        .map(|&(scheme, idx)| {
            let instance = &instances[idx];
            let mut cfg = config.solver_config();
            cfg.scheme = scheme;
            if let Some(model) = reg_choice.gradstep() {
                cfg.lambda = model.lambda;
                cfg.tau = model.tau;
                cfg.alpha = model.alpha;
            }
            bench_one(scheme, idx, instance, &reg_choice, &cfg, config)
        })
        .collect();

    let mut csv = String::from(BENCH_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        let _ = writeln!(
            csv,
            "instance,{},{},{:.6},{:.6},{},{:.6},{}",
            r.scheme.as_str(),
            r.instance,
            r.psnr,
            r.ssim,
            r.iters_to_eps,
            r.wall_time_s,
            u8::from(r.diverged)
        );
    }
    for scheme in &config.schemes {
        let sr: Vec<&BenchRow> = rows.iter().filter(|r| r.scheme == *scheme).collect();
        let ok: Vec<&&BenchRow> = sr.iter().filter(|r| !r.diverged).collect();
        let n = ok.len().max(1) as f64;
        let mean = |f: &dyn Fn(&BenchRow) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
        let all_diverged = ok.is_empty();
        let _ = writeln!(
            csv,
            "mean,{},-,{:.6},{:.6},{:.2},{:.6},{}",
            scheme.as_str(),
            mean(&|r| r.psnr),
            mean(&|r| r.ssim),
            mean(&|r| r.iters_to_eps),
            mean(&|r| r.wall_time_s),
            u8::from(all_diverged)
        );
    }
    fs::write(config.out_dir.join("bench.csv"), &csv)?;
    Ok(BenchReport { rows, csv })
}

fn bench_one(
    scheme: Scheme,
    idx: usize,
    instance: &ProblemInstance,
    reg_choice: &RegularizerChoice,
    cfg: &SolverConfig,
    config: &ExperimentConfig,
) -> BenchRow {
    let diverged_row = |wall: f64| BenchRow {
        scheme,
        instance: idx,
        psnr: f64::NAN,
        ssim: f64::NAN,
        iters_to_eps: f64::NAN,
        wall_time_s: wall,
        diverged: true,
    };
    match scheme {
        Scheme::Modl | Scheme::Varnet => {
            let started = std::time::Instant::now();
            let model = match reg_choice.gradstep() {
                Some(m) => m,
                None => return diverged_row(0.0),
            };
            let kind = if scheme == Scheme::Modl {
                UnrolledKind::Modl
            } else {
                UnrolledKind::Varnet
            };
            match unrolled_solve(
                kind,
                &instance.x0,
                &instance.y,
                instance.fidelity.as_ref(),
                model.reg.net(),
                model.reg.sigma(),
                cfg.tau,
                config.unrolled_steps,
            ) {
                Ok(x_hat) => BenchRow {
                    scheme,
                    instance: idx,
                    psnr: psnr(&x_hat, &instance.x_true, 1.0).unwrap_or(f64::NAN),
                    ssim: maybe_ssim(&x_hat, &instance.x_true).unwrap_or(f64::NAN),
                    iters_to_eps: config.unrolled_steps as f64,
                    wall_time_s: started.elapsed().as_secs_f64(),
                    diverged: false,
                },
                Err(_) => diverged_row(started.elapsed().as_secs_f64()),
            }
        }
        _ => match solve(
            &instance.y,
            instance.fidelity.as_ref(),
            reg_choice.regularizer(),
            cfg,
            &instance.x0,
        ) {
            Ok(report) => BenchRow {
                scheme,
                instance: idx,
                psnr: psnr(&report.x_hat, &instance.x_true, 1.0).unwrap_or(f64::NAN),
                ssim: maybe_ssim(&report.x_hat, &instance.x_true).unwrap_or(f64::NAN),
                iters_to_eps: report.iterations as f64,
                wall_time_s: report.wall_secs,
                diverged: false,
            },
            Err(_) => diverged_row(0.0),
        },
    }
}

// ---------------------------------------------------------------------------
// Reference nonconvex suite
// ---------------------------------------------------------------------------

/// One seeded instance of the nonconvex reference problem: Rician noise on a
/// 16x16 piecewise-constant image, with a randomly initialized gradient-step
/// prior. This is the shared fixture for the acceleration and rate checks.
pub struct ReferenceInstance {
    pub fidelity: RicianModel,
    pub y: Measurement,
    pub model: TrainableModel,
    pub x_true: GridImage,
    pub x0: GridImage,
}

pub const REFERENCE_SIGMA_Y: f64 = 25.5 / 255.0;
pub const REFERENCE_LAMBDA: f64 = 1.0;
pub const REFERENCE_TAU: f64 = 0.005;
pub const REFERENCE_ALPHA: f64 = 0.2;
pub const REFERENCE_RESTART_BUDGET: f64 = 1.0;

/// Mostly dark piecewise-constant phantom with a few bright boxes. The dark
/// area keeps the Rician likelihood in its locally concave regime, which is
/// the landscape the nonconvex suite is meant to exercise.
pub fn reference_phantom(size: usize, rng: &mut SeededRng) -> GridImage {
    let mut img = GridImage::constant(size, size, 0.03 + 0.04 * rng.uniform());
    let levels = [
        0.20 + 0.20 * rng.uniform(),
        0.45 + 0.20 * rng.uniform(),
        0.70 + 0.20 * rng.uniform(),
        0.90 + 0.10 * rng.uniform(),
    ];
    for level in levels {
        let h = 2 + rng.gen_range_usize(0, size / 2);
        let w = 2 + rng.gen_range_usize(0, size / 2);
        let r0 = rng.gen_range_usize(0, size - h);
        let c0 = rng.gen_range_usize(0, size - w);
        for r in r0..r0 + h {
            for c in c0..c0 + w {
                *img.at_mut(0, r, c) = level;
            }
        }
    }
    img
}

pub fn reference_nonconvex_instance(seed: u64) -> Result<ReferenceInstance> {
    let mut rng = SeededRng::new(seed);
    let x_true = reference_phantom(16, &mut rng);
    let fidelity = RicianModel::new(REFERENCE_SIGMA_Y)?;
    let y = fidelity.simulate(&x_true, &mut rng)?;
    let x0 = fidelity.adjoint_measurement(&y)?;
    let mut net = SmoothPotentialNet::new(NetConfig {
        image_channels: 1,
        hidden_channels: vec![8, 8],
        noise_channel: true,
        pad: crate::conv::PadMode::Zero,
        softplus_last: false,
    });
    net.init_random(&mut rng);
    let reg = GradStepRegularizer::new(net, 0.03);
    let model = TrainableModel::new(reg, REFERENCE_LAMBDA, REFERENCE_TAU, REFERENCE_ALPHA);
    Ok(ReferenceInstance {
        fidelity,
        y,
        model,
        x_true,
        x0,
    })
}

/// Solver configuration for the reference problem.
pub fn reference_config(scheme: Scheme, max_iters: usize, eps: f64) -> SolverConfig {
    let mut cfg = SolverConfig::new(scheme);
    cfg.lambda = REFERENCE_LAMBDA;
    cfg.tau = REFERENCE_TAU;
    cfg.alpha = REFERENCE_ALPHA;
    cfg.restart_budget = REFERENCE_RESTART_BUDGET;
    cfg.max_iters = max_iters;
    cfg.eps = eps;
    cfg.averaging = false;
    cfg
}

// ---------------------------------------------------------------------------
// rate fitting
// ---------------------------------------------------------------------------

/// Least-squares fit of `log(min_{k<=n} grad_norm)` against `log n`.
#[derive(Debug, Clone)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (usize, usize),
}

/// Fits the decay exponent of the running-minimum gradient norm over the
/// 1-based iteration window `[start, end]` (inclusive). Nonpositive
/// running minima truncate the window.
pub fn rate_fit(grad_norms: &[f64], window: (usize, usize)) -> Result<RateFit> {
    let (start, end) = window;
    if start == 0 || end <= start {
        return Err(Error::InvalidArgument(format!(
            "bad rate window [{start}, {end}]"
        )));
    }
    if grad_norms.len() < start + 50 {
        return Err(Error::InvalidArgument(format!(
            "need at least 50 iterations past the window start, have {} from {start}",
            grad_norms.len()
        )));
    }
    let end = end.min(grad_norms.len());
    let mut points = Vec::new();
    let mut running = f64::INFINITY;
    for (i, &g) in grad_norms.iter().enumerate().take(end) {
        let n = i + 1;
        if g.is_finite() {
            running = running.min(g);
        }
        if n >= start {
            if running <= 0.0 {
                break; // exact minimizer reached
            }
            if running.is_finite() {
                points.push(((n as f64).ln(), running.ln()));
            }
        }
    }
    if points.len() < 2 {
        return Err(Error::InvalidArgument(
            "rate window holds fewer than 2 usable points".to_string(),
        ));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r2,
        window: (start, end),
    })
}

/// Reads the `grad_norm` column of a trajectory CSV.
pub fn grad_norms_from_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trajectory csv".to_string()))?;
    let col = header
        .split(',')
        .position(|c| c == "grad_norm")
        .ok_or_else(|| Error::Parse("trajectory csv lacks grad_norm column".to_string()))?;
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(col)
            .ok_or_else(|| Error::Parse(format!("short csv row: {line}")))?;
        out.push(
            field
                .parse()
                .map_err(|e| Error::Parse(format!("grad_norm `{field}`: {e}")))?,
        );
    }
    Ok(out)
}
