//! Regularization functionals: the learned gradient-step potential
//! `g(x) = 1/2 |x - N(x)|^2` and two analytic oracles (Tikhonov and
//! smoothed total variation) used for convergence testing.

use crate::error::{Error, Result};
use crate::grid::GridImage;
use crate::net::SmoothPotentialNet;

/// Anything the solvers can use as a prior: a scalar potential with an exact
/// gradient field.
pub trait Regularizer: Send + Sync {
    fn value(&self, x: &GridImage) -> Result<f64>;
    fn grad(&self, x: &GridImage) -> Result<GridImage>;
}

/// Gradient with respect to the regularizer parameters of a directional
/// quantity; `theta` follows the network's flat layout.
#[derive(Debug, Clone)]
pub struct RegParamGrad {
    pub theta: Vec<f64>,
    pub sigma: f64,
}

/// Explicit learned prior built on the residual of a smooth denoising
/// network. The induced denoiser is `x - grad g(x)`, an exact gradient
/// field by construction.
#[derive(Debug, Clone)]
pub struct GradStepRegularizer {
    net: SmoothPotentialNet,
    sigma: f64,
}

impl GradStepRegularizer {
    pub fn new(net: SmoothPotentialNet, sigma: f64) -> Self {
        GradStepRegularizer { net, sigma }
    }

    pub fn net(&self) -> &SmoothPotentialNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut SmoothPotentialNet {
        &mut self.net
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn net_forward(&self, x: &GridImage) -> Result<GridImage> {
        self.net.forward(x, self.sigma)
    }

    pub fn g_value(&self, x: &GridImage) -> Result<f64> {
        let n = self.net_forward(x)?;
        Ok(0.5 * x.sub(&n).norm_sq())
    }

    pub fn g_grad(&self, x: &GridImage) -> Result<GridImage> {
        let tape = self.net.forward_tape(x, self.sigma)?;
        let r = x.sub(tape.output());
        let rev = self.net.vjp(&tape, &r);
        Ok(r.sub(&self.net.image_part(rev.input_cot())))
    }

    /// `grad_theta <grad_x g(x), u>` at fixed `x`, `u`, plus the matching
    /// sigma derivative. Second-order in the network.
    pub fn param_contraction(&self, x: &GridImage, u: &GridImage) -> Result<RegParamGrad> {
        x.check_same_shape(u)?;
        let tape = self.net.forward_tape(x, self.sigma)?;
        let r = x.sub(tape.output());
        let rev = self.net.vjp(&tape, &r);
        let (theta, sigma) = self.net.param_contraction_parts(&tape, &rev, x, u);
        Ok(RegParamGrad { theta, sigma })
    }
}

impl Regularizer for GradStepRegularizer {
    fn value(&self, x: &GridImage) -> Result<f64> {
        self.g_value(x)
    }

    fn grad(&self, x: &GridImage) -> Result<GridImage> {
        self.g_grad(x)
    }
}

/// Closed-form test regularizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticRegularizer {
    /// `(mu/2) |x|^2`, convex.
    Tikhonov { mu: f64 },
    /// `sum_p sqrt(dx^2 + delta^2) + sqrt(dy^2 + delta^2)` with forward
    /// differences (zero past the boundary).
    SmoothedTv { delta: f64 },
}

impl AnalyticRegularizer {
    pub fn tikhonov(mu: f64) -> Self {
        AnalyticRegularizer::Tikhonov { mu }
    }

    pub fn smoothed_tv(delta: f64) -> Result<Self> {
        if delta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "smoothed-tv delta must be > 0, got {delta}"
            )));
        }
        Ok(AnalyticRegularizer::SmoothedTv { delta })
    }

    pub fn value_grad(&self, x: &GridImage) -> Result<(f64, GridImage)> {
        match *self {
            AnalyticRegularizer::Tikhonov { mu } => {
                Ok((0.5 * mu * x.norm_sq(), x.scale(mu)))
            }
            AnalyticRegularizer::SmoothedTv { delta } => {
                let (h, w) = (x.height(), x.width());
                let d2 = delta * delta;
                let mut value = 0.0;
                let mut grad = GridImage::zeros_multi(x.channels(), h, w);
                for ch in 0..x.channels() {
                    for r in 0..h {
                        for c in 0..w {
                            let dh = if c + 1 < w {
                                x.at(ch, r, c + 1) - x.at(ch, r, c)
                            } else {
                                0.0
                            };
                            let dv = if r + 1 < h {
                                x.at(ch, r + 1, c) - x.at(ch, r, c)
                            } else {
                                0.0
                            };
                            let sh = (dh * dh + d2).sqrt();
                            let sv = (dv * dv + d2).sqrt();
                            value += sh + sv;
                            if c + 1 < w {
                                *grad.at_mut(ch, r, c) -= dh / sh;
                                *grad.at_mut(ch, r, c + 1) += dh / sh;
                            }
                            if r + 1 < h {
                                *grad.at_mut(ch, r, c) -= dv / sv;
                                *grad.at_mut(ch, r + 1, c) += dv / sv;
                            }
                        }
                    }
                }
                Ok((value, grad))
            }
        }
    }
}

impl Regularizer for AnalyticRegularizer {
    fn value(&self, x: &GridImage) -> Result<f64> {
        Ok(self.value_grad(x)?.0)
    }

    fn grad(&self, x: &GridImage) -> Result<GridImage> {
        Ok(self.value_grad(x)?.1)
    }
}
