//! Fixed-point engines: plain explicit-gradient and proximal-gradient
//! iterations over `F = f + lambda g`, their inertial variants with
//! adaptive restart and trajectory averaging, a backtracking baseline,
//! and one-step unrolled updates.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fidelity::{DataFidelity, Measurement};
use crate::grid::GridImage;
use crate::net::SmoothPotentialNet;
use crate::regularizer::Regularizer;

/// Iteration rule selector. String forms are the config-file tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    IdeqGrad,
    IdeqProx,
    Red,
    RedProx,
    DeqBacktracking,
    Modl,
    Varnet,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ideq-grad" => Ok(Scheme::IdeqGrad),
            "ideq-prox" => Ok(Scheme::IdeqProx),
            "red" => Ok(Scheme::Red),
            "red-prox" => Ok(Scheme::RedProx),
            "deq-backtracking" => Ok(Scheme::DeqBacktracking),
            "modl" => Ok(Scheme::Modl),
            "varnet" => Ok(Scheme::Varnet),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::IdeqGrad => "ideq-grad",
            Scheme::IdeqProx => "ideq-prox",
            Scheme::Red => "red",
            Scheme::RedProx => "red-prox",
            Scheme::DeqBacktracking => "deq-backtracking",
            Scheme::Modl => "modl",
            Scheme::Varnet => "varnet",
        }
    }
}

/// What a restart does to the iterate pair. The gradient-flavor loop resets
/// the local iteration counter along with the pair; the proximal flavor only
/// shifts the previous iterate and keeps counting. Both clear the increment
/// accumulator and the averaging window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartSemantics {
    FullReset,
    ShiftOnly,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Regularization weight, >= 0.
    pub lambda: f64,
    /// Step size, > 0.
    pub tau: f64,
    /// Inertia in (0, 1]; 1 disables momentum.
    pub alpha: f64,
    /// Restart budget B, >= 0; infinity disables restarts.
    pub restart_budget: f64,
    /// Iteration budget K of the final uninterrupted window.
    pub max_iters: usize,
    /// Relative-residual stop; 0 disables the criterion.
    pub eps: f64,
    pub averaging: bool,
    /// Override the per-scheme restart semantics for ablations.
    pub restart_semantics: Option<RestartSemantics>,
    /// Hard cap on total steps across restarts. Defaults to `10 * (K + 1)`.
    pub max_total_steps: Option<usize>,
    /// Record objective and gradient norms per iteration (costs one extra
    /// gradient evaluation per step; disabled inside training loops).
    pub record_objective: bool,
}

impl SolverConfig {
    pub fn new(scheme: Scheme) -> Self {
        SolverConfig {
            scheme,
            lambda: 1.0,
            tau: 0.5,
            alpha: 0.2,
            restart_budget: f64::INFINITY,
            max_iters: 100,
            eps: 1e-4,
            averaging: false,
            restart_semantics: None,
            max_total_steps: None,
            record_objective: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.restart_budget < 0.0 {
            return Err(Error::Config(format!(
                "restart budget must be >= 0, got {}",
                self.restart_budget
            )));
        }
        if self.eps < 0.0 {
            return Err(Error::Config(format!("eps must be >= 0, got {}", self.eps)));
        }
        Ok(())
    }

    fn semantics(&self) -> RestartSemantics {
        self.restart_semantics.unwrap_or(match self.scheme {
            Scheme::IdeqProx => RestartSemantics::ShiftOnly,
            _ => RestartSemantics::FullReset,
        })
    }

    fn step_cap(&self) -> usize {
        self.max_total_steps.unwrap_or(10 * (self.max_iters + 1))
    }
}

/// Two-iterate momentum state plus restart bookkeeping.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub x_prev: GridImage,
    pub x_curr: GridImage,
    pub k_since_restart: usize,
    pub increment_sq_sum: f64,
    pub z_history: Vec<GridImage>,
    pub inc_history: Vec<f64>,
}

impl IterateState {
    pub fn new(x0: GridImage) -> Self {
        IterateState {
            x_prev: x0.clone(),
            x_curr: x0,
            k_since_restart: 0,
            increment_sq_sum: 0.0,
            z_history: Vec::new(),
            inc_history: Vec::new(),
        }
    }

    fn restart(&mut self, semantics: RestartSemantics) {
        self.x_prev = self.x_curr.clone();
        self.increment_sq_sum = 0.0;
        self.z_history.clear();
        self.inc_history.clear();
        if semantics == RestartSemantics::FullReset {
            self.k_since_restart = 0;
        }
    }
}

/// Accumulated-variation restart criterion: true when
/// `k * sum ||x^{t+1} - x^t||^2` exceeds the squared budget.
pub fn restart_check(state: &IterateState, budget: f64) -> bool {
    if budget.is_infinite() {
        return false;
    }
    state.k_since_restart as f64 * state.increment_sq_sum > budget * budget
}

/// Inertial extrapolation `z = x + (1 - alpha)(x - x_prev)`.
///
/// When the extrapolation is vacuous (alpha = 1 or equal iterates) the
/// current iterate is returned verbatim so that the reduction to the plain
/// iteration is bit-exact.
pub fn momentum_extrapolate(
    x_curr: &GridImage,
    x_prev: &GridImage,
    alpha: f64,
) -> Result<GridImage> {
    x_curr.check_same_shape(x_prev)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1], got {alpha}"
        )));
    }
    if 1.0 - alpha == 0.0 || x_curr.data() == x_prev.data() {
        return Ok(x_curr.clone());
    }
    let w = 1.0 - alpha;
    Ok(x_curr.zip_map(x_prev, |c, p| c + w * (c - p)))
}

/// One explicit gradient step on `F = f + lambda g` at `z`.
pub fn red_step(
    z: &GridImage,
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    lambda: f64,
    tau: f64,
) -> Result<GridImage> {
    let mut total = fidelity.grad(z, y)?;
    if lambda != 0.0 {
        total = total.add_scaled(&reg.grad(z)?, lambda);
    }
    Ok(z.add_scaled(&total, -tau))
}

/// Proximal-gradient step: prox of the fidelity applied to the regularizer
/// half-step `z - tau * lambda * grad g(z)`.
pub fn redp_step(
    z: &GridImage,
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    lambda: f64,
    tau: f64,
) -> Result<GridImage> {
    let v = if lambda == 0.0 {
        z.clone()
    } else {
        z.add_scaled(&reg.grad(z)?, -tau * lambda)
    };
    fidelity.prox(&v, y, tau)
}

/// Objective value and gradient norm of `F = f + lambda g` at `x`.
pub fn objective_and_gradnorm(
    x: &GridImage,
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    lambda: f64,
) -> Result<(f64, f64)> {
    let mut value = fidelity.value(x, y)?;
    let mut grad = fidelity.grad(x, y)?;
    if lambda != 0.0 {
        value += lambda * reg.value(x)?;
        grad = grad.add_scaled(&reg.grad(x)?, lambda);
    }
    Ok((value, grad.norm()))
}

/// Picks the averaging index `K0` (smallest late-window increment, ties to
/// the smallest k) and the mean of the extrapolated points `z^0..z^K0`.
/// Returns `None` when the open window `(K/2, K-1)` holds no recorded index,
/// in which case callers fall back to the final iterate.
pub fn averaging_select(
    z_history: &[GridImage],
    increments: &[f64],
    budget_k: usize,
) -> Option<(usize, GridImage)> {
    let lo = budget_k / 2 + 1;
    let hi = budget_k.saturating_sub(2); // inclusive upper end of k < K-1
    let mut best: Option<(usize, f64)> = None;
    for k in lo..=hi.min(increments.len().saturating_sub(1)) {
        if k >= z_history.len() {
            break;
        }
        let inc = increments[k];
        if best.map_or(true, |(_, b)| inc < b) {
            best = Some((k, inc));
        }
    }
    let (k0, _) = best?;
    let mut mean = GridImage::zeros_multi(
        z_history[0].channels(),
        z_history[0].height(),
        z_history[0].width(),
    );
    for z in &z_history[..=k0] {
        mean.add_assign(z);
    }
    mean.scale_assign(1.0 / (k0 + 1) as f64);
    Some((k0, mean))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Relative residual fell below eps.
    Converged,
    /// The final uninterrupted window completed its K+1 steps.
    BudgetComplete,
    /// Total-step cap reached (restarts kept truncating the window).
    StepCapReached,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub k_local: usize,
    pub residual: f64,
    pub rel_residual: f64,
    pub objective: f64,
    pub grad_norm: f64,
    /// Gradient norm at the extrapolated point (in-memory only).
    pub grad_norm_z: f64,
    pub restart: bool,
    pub time_s: f64,
}

/// Per-iteration records of a solve.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "iter,k_local,residual,rel_residual,objective,grad_norm,restart,time_s";

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.6}\n",
                r.iter,
                r.k_local,
                r.residual,
                r.rel_residual,
                r.objective,
                r.grad_norm,
                u8::from(r.restart),
                r.time_s
            ));
        }
        out
    }

    pub fn restarts(&self) -> usize {
        self.rows.iter().filter(|r| r.restart).count()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Output bundle of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x_hat: GridImage,
    pub trajectory: Trajectory,
    pub stop: StopReason,
    pub iterations: usize,
    pub restarts: usize,
    /// Averaging index actually used, when averaging ran.
    pub k0: Option<usize>,
    /// True when averaging was requested but the window was too short and
    /// the final iterate was returned instead.
    pub averaging_fallback: bool,
    pub wall_secs: f64,
}

struct Recorder<'a> {
    y: &'a Measurement,
    fidelity: &'a dyn DataFidelity,
    reg: &'a dyn Regularizer,
    lambda: f64,
    enabled: bool,
    start: Instant,
    trajectory: Trajectory,
}

impl<'a> Recorder<'a> {
    fn new(
        y: &'a Measurement,
        fidelity: &'a dyn DataFidelity,
        reg: &'a dyn Regularizer,
        lambda: f64,
        enabled: bool,
    ) -> Self {
        Recorder {
            y,
            fidelity,
            reg,
            lambda,
            enabled,
            start: Instant::now(),
            trajectory: Trajectory::default(),
        }
    }

    fn push(
        &mut self,
        iter: usize,
        k_local: usize,
        residual: f64,
        rel_residual: f64,
        x_next: &GridImage,
        z: &GridImage,
    ) -> Result<()> {
        let (objective, grad_norm, grad_norm_z) = if self.enabled {
            let (f, g) =
                objective_and_gradnorm(x_next, self.y, self.fidelity, self.reg, self.lambda)?;
            let gz = if z.data() == x_next.data() {
                g
            } else {
                objective_and_gradnorm(z, self.y, self.fidelity, self.reg, self.lambda)?.1
            };
            (f, g, gz)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        self.trajectory.rows.push(TrajectoryRow {
            iter,
            k_local,
            residual,
            rel_residual,
            objective,
            grad_norm,
            grad_norm_z,
            restart: false,
            time_s: self.start.elapsed().as_secs_f64(),
        });
        Ok(())
    }

    fn mark_restart(&mut self) {
        if let Some(last) = self.trajectory.rows.last_mut() {
            last.restart = true;
        }
    }
}

fn relative_residual(inc: f64, base: f64) -> f64 {
    if base > 0.0 {
        inc / base
    } else if inc == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Inertial fixed-point solve (gradient or proximal flavor): momentum
/// extrapolation, one operator step, restart check, until the iteration
/// window completes or the relative residual drops below eps. The output is
/// the averaged extrapolation sequence when averaging is enabled, otherwise
/// the final iterate.
pub fn ideq_solve(
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    config: &SolverConfig,
    x0: &GridImage,
) -> Result<SolveReport> {
    config.validate()?;
    if !matches!(config.scheme, Scheme::IdeqGrad | Scheme::IdeqProx) {
        return Err(Error::Config(format!(
            "ideq_solve requires an inertial scheme, got {}",
            config.scheme.as_str()
        )));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidArgument("non-finite initial iterate".to_string()));
    }
    let semantics = config.semantics();
    let cap = config.step_cap();
    let started = Instant::now();
    let mut recorder = Recorder::new(y, fidelity, reg, config.lambda, config.record_objective);
    let mut state = IterateState::new(x0.clone());
    let mut global = 0usize;
    let mut restarts = 0usize;
    let stop;

    loop {
        if state.k_since_restart > config.max_iters {
            stop = StopReason::BudgetComplete;
            break;
        }
        if global >= cap {
            stop = StopReason::StepCapReached;
            break;
        }
        let k_local = state.k_since_restart;
        let z = momentum_extrapolate(&state.x_curr, &state.x_prev, config.alpha)?;
        let x_next = match config.scheme {
            Scheme::IdeqGrad => red_step(&z, y, fidelity, reg, config.lambda, config.tau)?,
            _ => redp_step(&z, y, fidelity, reg, config.lambda, config.tau)?,
        };
        if !x_next.is_finite() {
            return Err(Error::diverged(global, recorder.trajectory));
        }
        let inc = x_next.distance(&state.x_curr);
        let rel = relative_residual(inc, state.x_curr.norm());
        state.increment_sq_sum += inc * inc;
        state.z_history.push(z.clone());
        state.inc_history.push(inc);
        recorder.push(global, k_local, inc, rel, &x_next, &z)?;

        state.x_prev = std::mem::replace(&mut state.x_curr, x_next);
        state.k_since_restart += 1;
        global += 1;

        if restart_check(&state, config.restart_budget) {
            restarts += 1;
            recorder.mark_restart();
            state.restart(semantics);
        }
        if config.eps > 0.0 && rel < config.eps {
            stop = StopReason::Converged;
            break;
        }
    }

    let (k0, x_hat, averaging_fallback) = if config.averaging {
        match averaging_select(&state.z_history, &state.inc_history, config.max_iters) {
            Some((k0, mean)) => (Some(k0), mean, false),
            None => (None, state.x_curr.clone(), true),
        }
    } else {
        (None, state.x_curr.clone(), false)
    };

    Ok(SolveReport {
        x_hat,
        trajectory: recorder.trajectory,
        stop,
        iterations: global,
        restarts,
        k0,
        averaging_fallback,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// Bare non-inertial loop (explicit or proximal flavor), used both as a
/// baseline and as the reference the inertial engine must reduce to.
pub fn red_solve(
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    config: &SolverConfig,
    x0: &GridImage,
) -> Result<SolveReport> {
    config.validate()?;
    let prox_flavor = match config.scheme {
        Scheme::Red => false,
        Scheme::RedProx => true,
        other => {
            return Err(Error::Config(format!(
                "red_solve requires red or red-prox, got {}",
                other.as_str()
            )))
        }
    };
    let started = Instant::now();
    let mut recorder = Recorder::new(y, fidelity, reg, config.lambda, config.record_objective);
    let mut x = x0.clone();
    let mut stop = StopReason::BudgetComplete;
    let mut global = 0usize;
    let cap = config.step_cap();
    for k in 0..=config.max_iters {
        if global >= cap {
            stop = StopReason::StepCapReached;
            break;
        }
        let x_next = if prox_flavor {
            redp_step(&x, y, fidelity, reg, config.lambda, config.tau)?
        } else {
            red_step(&x, y, fidelity, reg, config.lambda, config.tau)?
        };
        if !x_next.is_finite() {
            return Err(Error::diverged(global, recorder.trajectory));
        }
        let inc = x_next.distance(&x);
        let rel = relative_residual(inc, x.norm());
        recorder.push(global, k, inc, rel, &x_next, &x_next)?;
        x = x_next;
        global += 1;
        if config.eps > 0.0 && rel < config.eps {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(SolveReport {
        x_hat: x,
        trajectory: recorder.trajectory,
        stop,
        iterations: global,
        restarts: 0,
        k0: None,
        averaging_fallback: false,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const BACKTRACK_FLOOR: f64 = 1e-8;

/// Explicit-gradient baseline with Armijo backtracking on the objective:
/// the step size is re-selected every iteration (doubled from the last
/// accepted value, halved until sufficient decrease).
pub fn deq_backtracking_solve(
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    config: &SolverConfig,
    x0: &GridImage,
) -> Result<SolveReport> {
    config.validate()?;
    let started = Instant::now();
    let mut recorder = Recorder::new(y, fidelity, reg, config.lambda, config.record_objective);
    let mut x = x0.clone();
    let mut tau_last = config.tau;
    let mut stop = StopReason::BudgetComplete;
    let mut global = 0usize;
    for k in 0..=config.max_iters {
        let f_x = {
            let mut v = fidelity.value(&x, y)?;
            if config.lambda != 0.0 {
                v += config.lambda * reg.value(&x)?;
            }
            v
        };
        let mut grad = fidelity.grad(&x, y)?;
        if config.lambda != 0.0 {
            grad = grad.add_scaled(&reg.grad(&x)?, config.lambda);
        }
        let gn2 = grad.norm_sq();
        if !f_x.is_finite() || !gn2.is_finite() {
            return Err(Error::diverged(global, recorder.trajectory));
        }
        let mut tau = 2.0 * tau_last;
        let mut at_noise_wall = false;
        let x_next = loop {
            if tau < BACKTRACK_FLOOR {
                // a tiny gradient means the objective differences have sunk
                // below float noise: numerically stationary, not divergent
                if gn2.sqrt() <= 1e-7 * (1.0 + f_x.abs()) {
                    at_noise_wall = true;
                    break x.clone();
                }
                return Err(Error::diverged(global, recorder.trajectory));
            }
            let trial = x.add_scaled(&grad, -tau);
            let f_trial = {
                let mut v = fidelity.value(&trial, y)?;
                if config.lambda != 0.0 {
                    v += config.lambda * reg.value(&trial)?;
                }
                v
            };
            if f_trial.is_finite() && f_trial <= f_x - ARMIJO_C * tau * gn2 {
                break trial;
            }
            tau *= BACKTRACK_SHRINK;
        };
        if at_noise_wall {
            stop = StopReason::Converged;
            break;
        }
        tau_last = tau;
        if !x_next.is_finite() {
            return Err(Error::diverged(global, recorder.trajectory));
        }
        let inc = x_next.distance(&x);
        let rel = relative_residual(inc, x.norm());
        recorder.push(global, k, inc, rel, &x_next, &x_next)?;
        x = x_next;
        global += 1;
        if config.eps > 0.0 && rel < config.eps {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(SolveReport {
        x_hat: x,
        trajectory: recorder.trajectory,
        stop,
        iterations: global,
        restarts: 0,
        k0: None,
        averaging_fallback: false,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// Routes a config to the matching iterative engine.
pub fn solve(
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    reg: &dyn Regularizer,
    config: &SolverConfig,
    x0: &GridImage,
) -> Result<SolveReport> {
    match config.scheme {
        Scheme::IdeqGrad | Scheme::IdeqProx => ideq_solve(y, fidelity, reg, config, x0),
        Scheme::Red | Scheme::RedProx => red_solve(y, fidelity, reg, config, x0),
        Scheme::DeqBacktracking => deq_backtracking_solve(y, fidelity, reg, config, x0),
        Scheme::Modl | Scheme::Varnet => Err(Error::Config(format!(
            "{} is an unrolled scheme; use unrolled_solve",
            config.scheme.as_str()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnrolledKind {
    Modl,
    Varnet,
}

/// One unrolled update. The network is applied directly (no potential).
pub fn unrolled_step(
    kind: UnrolledKind,
    x: &GridImage,
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    net: &SmoothPotentialNet,
    sigma: f64,
    tau: f64,
) -> Result<GridImage> {
    match kind {
        UnrolledKind::Modl => {
            let p = fidelity.prox(x, y, tau)?;
            net.forward(&p, sigma)
        }
        UnrolledKind::Varnet => {
            let g = fidelity.grad(x, y)?;
            Ok(x.add_scaled(&g, -tau).sub(&net.forward(x, sigma)?))
        }
    }
}

/// Composes `steps` unrolled updates (six in the standard configuration).
pub fn unrolled_solve(
    kind: UnrolledKind,
    x0: &GridImage,
    y: &Measurement,
    fidelity: &dyn DataFidelity,
    net: &SmoothPotentialNet,
    sigma: f64,
    tau: f64,
    steps: usize,
) -> Result<GridImage> {
    let mut x = x0.clone();
    for step in 0..steps {
        x = unrolled_step(kind, &x, y, fidelity, net, sigma, tau)?;
        if !x.is_finite() {
            return Err(Error::diverged(step, Trajectory::default()));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fidelity::InpaintingModel;
    use crate::mask::BinaryMask;
    use crate::regularizer::AnalyticRegularizer;
    use crate::rng::SeededRng;

    fn random_image(h: usize, w: usize, rng: &mut SeededRng) -> GridImage {
        let data = (0..h * w).map(|_| rng.uniform()).collect();
        GridImage::from_vec(h, w, data).unwrap()
    }

    /// Full-mask inpainting gives f = 1/2 |x - y|^2; with Tikhonov g the
    /// minimizer is y / (1 + lambda).
    fn quadratic_problem(
        h: usize,
        w: usize,
        seed: u64,
    ) -> (InpaintingModel, Measurement, AnalyticRegularizer, GridImage) {
        let mut rng = SeededRng::new(seed);
        let y_img = random_image(h, w, &mut rng);
        let model = InpaintingModel::new(BinaryMask::full(h, w), 0.0).unwrap();
        let y = Measurement::Real(y_img.clone());
        (model, y, AnalyticRegularizer::tikhonov(1.0), y_img)
    }

    #[test]
    fn momentum_examples() {
        let x = GridImage::from_vec(1, 1, vec![1.0]).unwrap();
        let p = GridImage::from_vec(1, 1, vec![0.5]).unwrap();
        // alpha = 0.2: z = 1 + 0.8 * 0.5 = 1.4
        let z = momentum_extrapolate(&x, &p, 0.2).unwrap();
        assert!((z.data()[0] - 1.4).abs() < 1e-15);
        // alpha = 1 returns the current iterate bit-exactly
        let z1 = momentum_extrapolate(&x, &p, 1.0).unwrap();
        assert_eq!(z1.data()[0].to_bits(), x.data()[0].to_bits());
        // equal iterates: z = x for any alpha
        let z2 = momentum_extrapolate(&x, &x, 0.3).unwrap();
        assert_eq!(z2.data()[0].to_bits(), x.data()[0].to_bits());
        assert!(momentum_extrapolate(&x, &p, 0.0).is_err());
    }

    #[test]
    fn red_step_scalar_arithmetic() {
        // f = 1/2 (x - y)^2 with y = 0, g = 1/2 x^2, tau = 0.5, lambda = 1,
        // z = 2: next = 2 - 0.5 * (2 + 2) = 0
        let model = InpaintingModel::new(BinaryMask::full(1, 1), 0.0).unwrap();
        let y = Measurement::Real(GridImage::from_vec(1, 1, vec![0.0]).unwrap());
        let reg = AnalyticRegularizer::tikhonov(1.0);
        let z = GridImage::from_vec(1, 1, vec![2.0]).unwrap();
        let out = red_step(&z, &y, &model, &reg, 1.0, 0.5).unwrap();
        assert!(out.data()[0].abs() < 1e-15);
    }

    #[test]
    fn red_step_zero_lambda_at_consistency_is_identity() {
        let mut rng = SeededRng::new(1);
        let z = random_image(4, 4, &mut rng);
        let model = InpaintingModel::new(BinaryMask::full(4, 4), 0.0).unwrap();
        let y = Measurement::Real(z.clone());
        let reg = AnalyticRegularizer::tikhonov(1.0);
        let out = red_step(&z, &y, &model, &reg, 0.0, 0.7).unwrap();
        assert!(out.distance(&z) < 1e-15);
    }

    #[test]
    fn red_step_matches_composition_oracle() {
        let mut rng = SeededRng::new(2);
        let (model, y, reg, _) = quadratic_problem(6, 6, 3);
        let z = random_image(6, 6, &mut rng);
        let (lambda, tau) = (0.8, 0.4);
        let out = red_step(&z, &y, &model, &reg, lambda, tau).unwrap();
        let oracle = z.add_scaled(
            &model
                .grad(&z, &y)
                .unwrap()
                .add_scaled(&reg.grad(&z).unwrap(), lambda),
            -tau,
        );
        assert!(out.distance(&oracle) < 1e-14);
    }

    #[test]
    fn redp_step_cases() {
        let mut rng = SeededRng::new(4);
        let (model, y, reg, y_img) = quadratic_problem(5, 5, 5);
        let z = random_image(5, 5, &mut rng);
        // lambda = 0, tau = 1: pure prox = (y + z) / 2
        let out = redp_step(&z, &y, &model, &reg, 0.0, 1.0).unwrap();
        let half = z.add(&y_img).scale(0.5);
        assert!(out.distance(&half) < 1e-14);
        // composition oracle
        let (lambda, tau) = (0.6, 0.9);
        let out = redp_step(&z, &y, &model, &reg, lambda, tau).unwrap();
        let v = z.add_scaled(&reg.grad(&z).unwrap(), -tau * lambda);
        let oracle = model.prox(&v, &y, tau).unwrap();
        assert!(out.distance(&oracle) < 1e-14);
    }

    #[test]
    fn restart_check_arithmetic() {
        let x = GridImage::zeros(2, 2);
        let mut state = IterateState::new(x);
        // B = inf never restarts
        state.k_since_restart = 5;
        state.increment_sq_sum = 100.0;
        assert!(!restart_check(&state, f64::INFINITY));
        // B = 0 with any nonzero increment restarts at k = 1
        state.k_since_restart = 1;
        state.increment_sq_sum = 0.25;
        assert!(restart_check(&state, 0.0));
        // k = 3, increments {1, 2, 2}: 3 * 9 = 27 > 25
        state.k_since_restart = 3;
        state.increment_sq_sum = 1.0 + 4.0 + 4.0;
        assert!(restart_check(&state, 5.0));
        // and 27 < 36 does not restart
        assert!(!restart_check(&state, 6.0));
    }

    #[test]
    fn averaging_select_cases() {
        let mk = |v: f64| GridImage::from_vec(1, 1, vec![v]).unwrap();
        // all increments equal: K0 = floor(K/2) + 1 (tie-break low)
        let k = 10usize;
        let zs: Vec<GridImage> = (0..=k).map(|i| mk(i as f64)).collect();
        let incs = vec![1.0; k + 1];
        let (k0, mean) = averaging_select(&zs, &incs, k).unwrap();
        assert_eq!(k0, k / 2 + 1);
        let expect = (0..=k0).map(|i| i as f64).sum::<f64>() / (k0 + 1) as f64;
        assert!((mean.data()[0] - expect).abs() < 1e-12);
        // constant z: mean of constants is the constant
        let zs: Vec<GridImage> = (0..=k).map(|_| mk(3.25)).collect();
        let (_, mean) = averaging_select(&zs, &incs, k).unwrap();
        assert_eq!(mean.data()[0], 3.25);
        // K = 4: the open window (2, 3) is empty -> fallback
        let zs: Vec<GridImage> = (0..=4).map(|i| mk(i as f64)).collect();
        assert!(averaging_select(&zs, &vec![1.0; 5], 4).is_none());
    }

    #[test]
    fn converges_to_tikhonov_minimizer_all_schemes() {
        let (model, y, reg, y_img) = quadratic_problem(8, 8, 7);
        let lambda = 0.7;
        let target = y_img.scale(1.0 / (1.0 + lambda));
        for scheme in [
            Scheme::IdeqGrad,
            Scheme::IdeqProx,
            Scheme::Red,
            Scheme::RedProx,
            Scheme::DeqBacktracking,
        ] {
            let mut config = SolverConfig::new(scheme);
            config.lambda = lambda;
            config.tau = 0.5;
            config.alpha = 0.2;
            config.restart_budget = f64::INFINITY;
            config.max_iters = 400;
            config.eps = 0.0;
            let report = solve(&y, &model, &reg, &config, &GridImage::zeros(8, 8)).unwrap();
            let dist = report.x_hat.distance(&target);
            assert!(dist < 1e-8, "{}: distance {dist}", scheme.as_str());
        }
    }

    #[test]
    fn inertial_reduces_to_bare_loop_bitwise() {
        let (model, y, reg, _) = quadratic_problem(6, 6, 8);
        let x0 = GridImage::zeros(6, 6);
        let mut ideq = SolverConfig::new(Scheme::IdeqGrad);
        ideq.lambda = 0.5;
        ideq.tau = 0.4;
        ideq.alpha = 1.0; // no momentum
        ideq.restart_budget = f64::INFINITY;
        ideq.max_iters = 49;
        ideq.eps = 0.0;
        ideq.averaging = false;
        let a = ideq_solve(&y, &model, &reg, &ideq, &x0).unwrap();
        let mut red = ideq.clone();
        red.scheme = Scheme::Red;
        let b = red_solve(&y, &model, &reg, &red, &x0).unwrap();
        assert_eq!(a.iterations, b.iterations);
        for (ra, rb) in a.trajectory.rows.iter().zip(b.trajectory.rows.iter()) {
            assert_eq!(ra.residual.to_bits(), rb.residual.to_bits());
        }
        assert_eq!(a.x_hat.data(), b.x_hat.data());
    }

    #[test]
    fn restart_every_step_matches_bare_loop_bitwise() {
        let (model, y, reg, _) = quadratic_problem(6, 6, 9);
        let x0 = GridImage::zeros(6, 6);
        let mut ideq = SolverConfig::new(Scheme::IdeqGrad);
        ideq.lambda = 0.5;
        ideq.tau = 0.4;
        ideq.alpha = 0.2;
        ideq.restart_budget = 0.0; // restart after every step
        ideq.max_iters = 1000;
        ideq.max_total_steps = Some(50);
        ideq.eps = 0.0;
        let a = ideq_solve(&y, &model, &reg, &ideq, &x0).unwrap();
        assert_eq!(a.stop, StopReason::StepCapReached);
        let mut red = SolverConfig::new(Scheme::Red);
        red.lambda = 0.5;
        red.tau = 0.4;
        red.max_iters = 49;
        red.eps = 0.0;
        let b = red_solve(&y, &model, &reg, &red, &x0).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.x_hat.data(), b.x_hat.data());
    }

    #[test]
    fn restart_state_transitions_differ_by_semantics() {
        // Tiny budget forces a restart; FullReset zeroes k_local in the next
        // row, ShiftOnly keeps counting.
        let (model, y, reg, _) = quadratic_problem(6, 6, 10);
        let x0 = GridImage::zeros(6, 6);
        let mut config = SolverConfig::new(Scheme::IdeqGrad);
        config.lambda = 0.5;
        config.tau = 0.4;
        config.alpha = 0.2;
        config.restart_budget = 0.05;
        config.max_iters = 30;
        config.max_total_steps = Some(12);
        config.eps = 0.0;
        let a = ideq_solve(&y, &model, &reg, &config, &x0).unwrap();
        assert!(a.restarts >= 1);
        let first_restart = a.trajectory.rows.iter().position(|r| r.restart).unwrap();
        assert_eq!(a.trajectory.rows[first_restart + 1].k_local, 0);

        config.restart_semantics = Some(RestartSemantics::ShiftOnly);
        let b = ideq_solve(&y, &model, &reg, &config, &x0).unwrap();
        assert!(b.restarts >= 1);
        let first_restart = b.trajectory.rows.iter().position(|r| r.restart).unwrap();
        assert_eq!(
            b.trajectory.rows[first_restart + 1].k_local,
            b.trajectory.rows[first_restart].k_local + 1
        );
    }

    #[test]
    fn backtracking_descends_monotonically() {
        let (model, y, reg, _) = quadratic_problem(8, 8, 11);
        let mut config = SolverConfig::new(Scheme::DeqBacktracking);
        config.lambda = 0.7;
        config.tau = 0.1;
        config.max_iters = 60;
        config.eps = 0.0;
        let report =
            deq_backtracking_solve(&y, &model, &reg, &config, &GridImage::zeros(8, 8)).unwrap();
        let objs: Vec<f64> = report.trajectory.rows.iter().map(|r| r.objective).collect();
        for pair in objs.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "objective increased: {pair:?}");
        }
    }

    #[test]
    fn unrolled_steps_reduce_as_expected() {
        use crate::net::{NetConfig, SmoothPotentialNet};
        let mut rng = SeededRng::new(12);
        let (model, y, _, _) = quadratic_problem(6, 6, 13);
        let x = random_image(6, 6, &mut rng);
        let zero_net = SmoothPotentialNet::new(NetConfig {
            noise_channel: false,
            ..NetConfig::default()
        });
        // varnet with a zero-output net is a plain gradient-descent step
        let tau = 0.3;
        let out = unrolled_step(UnrolledKind::Varnet, &x, &y, &model, &zero_net, 0.0, tau).unwrap();
        let gd = x.add_scaled(&model.grad(&x, &y).unwrap(), -tau);
        assert!(out.distance(&gd) < 1e-14);
        // modl with an identity net is the prox alone
        let config = NetConfig {
            image_channels: 1,
            hidden_channels: vec![],
            noise_channel: false,
            pad: crate::conv::PadMode::Zero,
            softplus_last: false,
        };
        let mut id_net = SmoothPotentialNet::new(config);
        id_net.params_mut()[crate::conv::weight_index(1, 0, 0, 1, 1)] = 1.0;
        let out = unrolled_step(UnrolledKind::Modl, &x, &y, &model, &id_net, 0.0, tau).unwrap();
        let prox = model.prox(&x, &y, tau).unwrap();
        assert!(out.distance(&prox) < 1e-14);
        // composing six varnet steps equals the manual loop
        let composed =
            unrolled_solve(UnrolledKind::Varnet, &x, &y, &model, &zero_net, 0.0, tau, 6).unwrap();
        let mut manual = x.clone();
        for _ in 0..6 {
            manual =
                unrolled_step(UnrolledKind::Varnet, &manual, &y, &model, &zero_net, 0.0, tau)
                    .unwrap();
        }
        assert_eq!(composed.data(), manual.data());
    }

    #[test]
    fn objective_and_gradnorm_cases() {
        let (model, y, reg, y_img) = quadratic_problem(6, 6, 14);
        let lambda = 0.9;
        // at the minimizer the gradient vanishes
        let xstar = y_img.scale(1.0 / (1.0 + lambda));
        let (_, gn) = objective_and_gradnorm(&xstar, &y, &model, &reg, lambda).unwrap();
        assert!(gn <= 1e-10, "grad norm {gn}");
        // lambda = 0 equals the fidelity alone
        let mut rng = SeededRng::new(15);
        let x = random_image(6, 6, &mut rng);
        let (f, g) = objective_and_gradnorm(&x, &y, &model, &reg, 0.0).unwrap();
        assert_eq!(f, model.value(&x, &y).unwrap());
        assert_eq!(g, model.grad(&x, &y).unwrap().norm());
        // random point against finite-difference gradient norm
        let (_, gn) = objective_and_gradnorm(&x, &y, &model, &reg, lambda).unwrap();
        let h = 1e-6;
        let mut fd_sq = 0.0;
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let fp = model.value(&plus, &y).unwrap() + lambda * reg.value(&plus).unwrap();
            let fm = model.value(&minus, &y).unwrap() + lambda * reg.value(&minus).unwrap();
            let d = (fp - fm) / (2.0 * h);
            fd_sq += d * d;
        }
        assert!((fd_sq.sqrt() - gn).abs() < 1e-5 * (1.0 + gn));
    }

    #[test]
    fn budget_accounting_counts_every_step() {
        // with full-reset restarts the total number of steps exceeds the
        // window budget K, and the global index stays monotone
        let (model, y, reg, _) = quadratic_problem(6, 6, 16);
        let mut config = SolverConfig::new(Scheme::IdeqGrad);
        config.lambda = 0.5;
        config.tau = 0.4;
        config.alpha = 0.2;
        config.restart_budget = 0.2;
        config.max_iters = 20;
        config.eps = 0.0;
        let report = ideq_solve(&y, &model, &reg, &config, &GridImage::zeros(6, 6)).unwrap();
        assert!(report.restarts >= 1);
        assert!(
            report.iterations > config.max_iters,
            "restarts fired but only {} steps for K = {}",
            report.iterations,
            config.max_iters
        );
        for (i, row) in report.trajectory.rows.iter().enumerate() {
            assert_eq!(row.iter, i);
        }
        assert_eq!(report.trajectory.restarts(), report.restarts);
    }

    #[test]
    fn trajectory_csv_header_is_pinned() {
        assert_eq!(
            TRAJECTORY_CSV_HEADER,
            "iter,k_local,residual,rel_residual,objective,grad_norm,restart,time_s"
        );
    }
}
