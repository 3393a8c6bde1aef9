//! 3x3 convolution primitives for the small smooth networks: forward,
//! input-gradient (transposed convolution), and weight/bias gradients.
//!
//! Default padding is zero; wraparound padding exists for the translation
//! equivariance test mode.

use crate::grid::GridImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Wrap,
}

pub const KERNEL: usize = 3;

/// Weights are laid out `[out_ch][in_ch][3][3]` flattened.
#[inline]
pub fn weight_index(in_channels: usize, o: usize, i: usize, kr: usize, kc: usize) -> usize {
    ((o * in_channels + i) * KERNEL + kr) * KERNEL + kc
}

#[inline]
fn sample(input: &GridImage, ch: usize, r: isize, c: isize, pad: PadMode) -> f64 {
    let (h, w) = (input.height() as isize, input.width() as isize);
    match pad {
        PadMode::Zero => {
            if r < 0 || r >= h || c < 0 || c >= w {
                0.0
            } else {
                input.at(ch, r as usize, c as usize)
            }
        }
        PadMode::Wrap => {
            let rr = r.rem_euclid(h) as usize;
            let cc = c.rem_euclid(w) as usize;
            input.at(ch, rr, cc)
        }
    }
}

/// Same-size 3x3 convolution: `out[o] = bias[o] + sum_i W[o][i] * in[i]`.
pub fn conv_forward(
    input: &GridImage,
    weights: &[f64],
    bias: Option<&[f64]>,
    out_channels: usize,
    pad: PadMode,
) -> GridImage {
    let in_channels = input.channels();
    let (h, w) = (input.height(), input.width());
    debug_assert_eq!(weights.len(), out_channels * in_channels * KERNEL * KERNEL);
    let mut out = GridImage::zeros_multi(out_channels, h, w);
    for o in 0..out_channels {
        let b = bias.map_or(0.0, |b| b[o]);
        for r in 0..h {
            for c in 0..w {
                let mut acc = b;
                for i in 0..in_channels {
                    for kr in 0..KERNEL {
                        for kc in 0..KERNEL {
                            let wv = weights[weight_index(in_channels, o, i, kr, kc)];
                            acc += wv
                                * sample(
                                    input,
                                    i,
                                    r as isize + kr as isize - 1,
                                    c as isize + kc as isize - 1,
                                    pad,
                                );
                        }
                    }
                }
                *out.at_mut(o, r, c) = acc;
            }
        }
    }
    out
}

/// Adjoint of `conv_forward` with respect to the input: propagates the
/// output cotangent back through the kernel.
pub fn conv_input_grad(
    out_cot: &GridImage,
    weights: &[f64],
    in_channels: usize,
    pad: PadMode,
) -> GridImage {
    let out_channels = out_cot.channels();
    let (h, w) = (out_cot.height(), out_cot.width());
    let mut grad = GridImage::zeros_multi(in_channels, h, w);
    for o in 0..out_channels {
        for r in 0..h {
            for c in 0..w {
                let g = out_cot.at(o, r, c);
                if g == 0.0 {
                    continue;
                }
                for i in 0..in_channels {
                    for kr in 0..KERNEL {
                        for kc in 0..KERNEL {
                            let rr = r as isize + kr as isize - 1;
                            let cc = c as isize + kc as isize - 1;
                            let wv = weights[weight_index(in_channels, o, i, kr, kc)];
                            match pad {
                                PadMode::Zero => {
                                    if rr >= 0
                                        && rr < h as isize
                                        && cc >= 0
                                        && cc < w as isize
                                    {
                                        *grad.at_mut(i, rr as usize, cc as usize) += wv * g;
                                    }
                                }
                                PadMode::Wrap => {
                                    let rr = rr.rem_euclid(h as isize) as usize;
                                    let cc = cc.rem_euclid(w as isize) as usize;
                                    *grad.at_mut(i, rr, cc) += wv * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    grad
}

/// Adjoint of `conv_forward` with respect to the weights and bias:
/// accumulates into `w_grad`/`b_grad`.
pub fn conv_weight_grad(
    input: &GridImage,
    out_cot: &GridImage,
    w_grad: &mut [f64],
    b_grad: Option<&mut [f64]>,
    pad: PadMode,
) {
    let in_channels = input.channels();
    let out_channels = out_cot.channels();
    let (h, w) = (input.height(), input.width());
    for o in 0..out_channels {
        for i in 0..in_channels {
            for kr in 0..KERNEL {
                for kc in 0..KERNEL {
                    let mut acc = 0.0;
                    for r in 0..h {
                        for c in 0..w {
                            acc += out_cot.at(o, r, c)
                                * sample(
                                    input,
                                    i,
                                    r as isize + kr as isize - 1,
                                    c as isize + kc as isize - 1,
                                    pad,
                                );
                        }
                    }
                    w_grad[weight_index(in_channels, o, i, kr, kc)] += acc;
                }
            }
        }
    }
    if let Some(b_grad) = b_grad {
        for o in 0..out_channels {
            let mut acc = 0.0;
            for r in 0..h {
                for c in 0..w {
                    acc += out_cot.at(o, r, c);
                }
            }
            b_grad[o] += acc;
        }
    }
}
