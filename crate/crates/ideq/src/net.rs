//! The compact smooth convolutional network behind the gradient-step
//! regularizer, with hand-written reverse-mode differentiation.
//!
//! Everything is C^2 by construction (SoftPlus activations), which is what
//! lets the potential `g(x) = 1/2 |x - N(x)|^2` have a well-defined gradient
//! field and lets training differentiate through that gradient a second
//! time. The second-order pass (`param_contraction_parts`) differentiates
//! the hand-written reverse pass itself, so only reverse-mode machinery is
//! ever needed.

use crate::conv::{conv_forward, conv_input_grad, conv_weight_grad, PadMode, KERNEL};
use crate::error::{Error, Result};
use crate::grid::GridImage;
use crate::rng::SeededRng;

#[inline]
pub fn softplus(x: f64) -> f64 {
    // max(x, 0) + ln(1 + exp(-|x|)) avoids overflow on both tails
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

#[derive(Debug, Clone)]
pub struct NetConfig {
    pub image_channels: usize,
    pub hidden_channels: Vec<usize>,
    /// Inject the denoiser strength as an extra constant input channel.
    pub noise_channel: bool,
    pub pad: PadMode,
    /// Apply SoftPlus after the final layer too (scalar toy nets only;
    /// production nets keep the last layer linear).
    pub softplus_last: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            image_channels: 1,
            hidden_channels: vec![8, 8],
            noise_channel: true,
            pad: PadMode::Zero,
            softplus_last: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    in_ch: usize,
    out_ch: usize,
    w_off: usize,
    b_off: usize,
}

/// Stack of 3x3 convolutions with SoftPlus between them; same output shape
/// as the input image.
#[derive(Debug, Clone)]
pub struct SmoothPotentialNet {
    config: NetConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

/// Saved forward intermediates: inputs `a[0..=L]` and pre-activations
/// `z[1..=L]` (stored at index l-1).
pub struct Tape {
    a: Vec<GridImage>,
    z: Vec<GridImage>,
}

impl Tape {
    pub fn output(&self) -> &GridImage {
        self.a.last().unwrap()
    }
}

/// Saved reverse intermediates from a VJP: cotangents `c[0..=L]` and
/// activation-scaled cotangents `d[1..=L]` (stored at index l-1).
pub struct RevTape {
    c: Vec<GridImage>,
    d: Vec<GridImage>,
}

impl RevTape {
    /// Cotangent with respect to the assembled input (all channels).
    pub fn input_cot(&self) -> &GridImage {
        &self.c[0]
    }
}

impl SmoothPotentialNet {
    pub fn new(config: NetConfig) -> Self {
        let mut channels = Vec::new();
        channels.push(config.image_channels + usize::from(config.noise_channel));
        channels.extend_from_slice(&config.hidden_channels);
        channels.push(config.image_channels);
        let mut layers = Vec::new();
        let mut off = 0usize;
        for win in channels.windows(2) {
            let (in_ch, out_ch) = (win[0], win[1]);
            let w_off = off;
            off += out_ch * in_ch * KERNEL * KERNEL;
            let b_off = off;
            off += out_ch;
            layers.push(LayerShape {
                in_ch,
                out_ch,
                w_off,
                b_off,
            });
        }
        SmoothPotentialNet {
            config,
            layers,
            params: vec![0.0; off],
        }
    }

    /// Fan-in scaled uniform initialization, biases zero.
    pub fn init_random(&mut self, rng: &mut SeededRng) {
        for l in 0..self.layers.len() {
            let layer = self.layers[l];
            let bound = 1.0 / ((layer.in_ch * KERNEL * KERNEL) as f64).sqrt();
            for idx in 0..layer.out_ch * layer.in_ch * KERNEL * KERNEL {
                self.params[layer.w_off + idx] = rng.uniform_in(-bound, bound);
            }
            for idx in 0..layer.out_ch {
                self.params[layer.b_off + idx] = 0.0;
            }
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_len(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::shape_mismatch(
                format!("{} parameters", self.params.len()),
                format!("{}", params.len()),
            ));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// `(in_channels, out_channels)` per layer, for checkpoint headers.
    pub fn layer_sizes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_ch, l.out_ch)).collect()
    }

    fn has_softplus(&self, layer_index_1based: usize) -> bool {
        layer_index_1based < self.layers.len() || self.config.softplus_last
    }

    fn assemble_input(&self, x: &GridImage, sigma: f64) -> Result<GridImage> {
        if x.channels() != self.config.image_channels {
            return Err(Error::shape_mismatch(
                format!("{} channels", self.config.image_channels),
                format!("{}", x.channels()),
            ));
        }
        if !self.config.noise_channel {
            return Ok(x.clone());
        }
        let (h, w) = (x.height(), x.width());
        let mut data = Vec::with_capacity((x.channels() + 1) * h * w);
        data.extend_from_slice(x.data());
        data.extend(std::iter::repeat(sigma).take(h * w));
        GridImage::from_vec_multi(x.channels() + 1, h, w, data)
    }

    fn layer_weights(&self, l: usize) -> &[f64] {
        let layer = self.layers[l];
        &self.params[layer.w_off..layer.w_off + layer.out_ch * layer.in_ch * KERNEL * KERNEL]
    }

    fn layer_bias(&self, l: usize) -> &[f64] {
        let layer = self.layers[l];
        &self.params[layer.b_off..layer.b_off + layer.out_ch]
    }

    pub fn forward(&self, x: &GridImage, sigma: f64) -> Result<GridImage> {
        Ok(self.forward_tape(x, sigma)?.output().clone())
    }

    pub fn forward_tape(&self, x: &GridImage, sigma: f64) -> Result<Tape> {
        let a0 = self.assemble_input(x, sigma)?;
        let mut a = vec![a0];
        let mut z = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let zl = conv_forward(
                &a[l],
                self.layer_weights(l),
                Some(self.layer_bias(l)),
                layer.out_ch,
                self.config.pad,
            );
            let al = if self.has_softplus(l + 1) {
                zl.map(softplus)
            } else {
                zl.clone()
            };
            z.push(zl);
            a.push(al);
        }
        Ok(Tape { a, z })
    }

    /// Vector-Jacobian product: cotangent of `<N(x), seed>` with respect to
    /// the assembled input, keeping the reverse intermediates.
    pub fn vjp(&self, tape: &Tape, seed: &GridImage) -> RevTape {
        let num = self.layers.len();
        let mut c = vec![GridImage::zeros(0, 0); num + 1];
        let mut d = vec![GridImage::zeros(0, 0); num];
        c[num] = seed.clone();
        for l in (1..=num).rev() {
            let dl = if self.has_softplus(l) {
                tape.z[l - 1].zip_map(&c[l], |zv, cv| sigmoid(zv) * cv)
            } else {
                c[l].clone()
            };
            c[l - 1] = conv_input_grad(
                &dl,
                self.layer_weights(l - 1),
                self.layers[l - 1].in_ch,
                self.config.pad,
            );
            d[l - 1] = dl;
        }
        RevTape { c, d }
    }

    /// Restriction of a full input cotangent to the image channels.
    pub fn image_part(&self, input_cot: &GridImage) -> GridImage {
        let img_ch = self.config.image_channels;
        let (h, w) = (input_cot.height(), input_cot.width());
        let mut out = GridImage::zeros_multi(img_ch, h, w);
        out.data_mut()
            .copy_from_slice(&input_cot.data()[..img_ch * h * w]);
        out
    }

    /// Gradient of the scalar `h = <r, u> - <c_0_img, u>` with respect to the
    /// network parameters and sigma, where `r = x - N(x)` and `c_0` is the
    /// input cotangent of the VJP seeded with `r`. This is exactly
    /// `grad_theta <grad_x g(x), u>`: the reverse pass that computes
    /// `grad g` is itself differentiated in reverse.
    pub fn param_contraction_parts(
        &self,
        tape: &Tape,
        rev: &RevTape,
        x: &GridImage,
        u: &GridImage,
    ) -> (Vec<f64>, f64) {
        let num = self.layers.len();
        let (h, w) = (x.height(), x.width());
        let img_ch = self.config.image_channels;
        let mut theta_grad = vec![0.0; self.params.len()];

        // z-bar accumulators, one per layer (index l-1)
        let mut z_bar: Vec<GridImage> = (0..num)
            .map(|l| GridImage::zeros_multi(self.layers[l].out_ch, h, w))
            .collect();

        // seed: cot(c_0) = -u on the image channels, zero on the noise channel
        let c0_ch = self.layers[0].in_ch;
        let mut cot_c = GridImage::zeros_multi(c0_ch, h, w);
        for ch in 0..img_ch {
            for r in 0..h {
                for cc in 0..w {
                    *cot_c.at_mut(ch, r, cc) = -u.at(ch, r, cc);
                }
            }
        }

        // phase 1: adjoint of the reverse pass, walking layers upward
        for l in 1..=num {
            let layer = self.layers[l - 1];
            // c_{l-1} = convT(W_l, d_l)
            let cot_d = conv_forward(
                &cot_c,
                self.layer_weights(l - 1),
                None,
                layer.out_ch,
                self.config.pad,
            );
            conv_weight_grad(
                &cot_c,
                &rev.d[l - 1],
                &mut theta_grad[layer.w_off..layer.w_off + layer.out_ch * layer.in_ch * 9],
                None,
                self.config.pad,
            );
            // d_l = phi'(z_l) * c_l
            if self.has_softplus(l) {
                let zl = &tape.z[l - 1];
                cot_c = zl.zip_map(&cot_d, |zv, dv| sigmoid(zv) * dv);
                let second = zl
                    .zip_map(&cot_d, |zv, dv| sigmoid_prime(zv) * dv)
                    .zip_map(&rev.c[l], |s, cv| s * cv);
                z_bar[l - 1].add_assign(&second);
            } else {
                cot_c = cot_d;
            }
        }

        // r appears both directly in h and as the VJP seed c_L
        let mut r_bar = u.clone();
        r_bar.add_assign(&cot_c);

        // phase 2: adjoint of the forward pass, walking layers downward
        let mut a_bar = r_bar.scale(-1.0); // r = x - a_L
        for l in (1..=num).rev() {
            let layer = self.layers[l - 1];
            if self.has_softplus(l) {
                let zl = &tape.z[l - 1];
                z_bar[l - 1].add_assign(&zl.zip_map(&a_bar, |zv, av| sigmoid(zv) * av));
            } else {
                z_bar[l - 1].add_assign(&a_bar);
            }
            // weights occupy [w_off, b_off) and the bias [b_off, b_off + out)
            let (head, tail) = theta_grad.split_at_mut(layer.b_off);
            let w_slice = &mut head[layer.w_off..];
            let b_slice = &mut tail[..layer.out_ch];
            conv_weight_grad(&tape.a[l - 1], &z_bar[l - 1], w_slice, Some(b_slice), self.config.pad);
            a_bar = conv_input_grad(
                &z_bar[l - 1],
                self.layer_weights(l - 1),
                layer.in_ch,
                self.config.pad,
            );
        }

        let sigma_grad = if self.config.noise_channel {
            let mut acc = 0.0;
            for r in 0..h {
                for cc in 0..w {
                    acc += a_bar.at(img_ch, r, cc);
                }
            }
            acc
        } else {
            0.0
        };
        (theta_grad, sigma_grad)
    }
}
