//! Image-quality metrics: PSNR and single-channel SSIM.

use crate::error::{Error, Result};
use crate::grid::GridImage;

/// Mean squared error between two same-shape grids.
pub fn mse(x: &GridImage, reference: &GridImage) -> Result<f64> {
    x.check_same_shape(reference)?;
    let n = x.len() as f64;
    Ok(x.data()
        .iter()
        .zip(reference.data().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio in decibels.
///
/// Returns `f64::INFINITY` as the sentinel for a zero-MSE pair (identical
/// images); callers that aggregate PSNR values should handle it explicitly.
pub fn psnr(x: &GridImage, reference: &GridImage, peak: f64) -> Result<f64> {
    if peak <= 0.0 {
        return Err(Error::InvalidArgument(format!("peak must be > 0, got {peak}")));
    }
    let err = mse(x, reference)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for r in 0..SSIM_WINDOW {
        for c in 0..SSIM_WINDOW {
            let dr = r as f64 - half;
            let dc = c as f64 - half;
            let v = (-(dr * dr + dc * dc) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[r * SSIM_WINDOW + c] = v;
            sum += v;
        }
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Structural similarity over valid 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1.0). Single-channel only; both
/// dimensions must be at least the window size.
pub fn ssim(x: &GridImage, reference: &GridImage) -> Result<f64> {
    x.check_same_shape(reference)?;
    if x.channels() != 1 {
        return Err(Error::InvalidArgument(
            "ssim is defined for single-channel images".to_string(),
        ));
    }
    let (h, w, _) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window"
        )));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(h - SSIM_WINDOW) {
        for c0 in 0..=(w - SSIM_WINDOW) {
            let mut mu_x = 0.0;
            let mut mu_y = 0.0;
            for r in 0..SSIM_WINDOW {
                for c in 0..SSIM_WINDOW {
                    let g = win[r * SSIM_WINDOW + c];
                    mu_x += g * x.at(0, r0 + r, c0 + c);
                    mu_y += g * reference.at(0, r0 + r, c0 + c);
                }
            }
            let mut var_x = 0.0;
            let mut var_y = 0.0;
            let mut cov = 0.0;
            for r in 0..SSIM_WINDOW {
                for c in 0..SSIM_WINDOW {
                    let g = win[r * SSIM_WINDOW + c];
                    let dx = x.at(0, r0 + r, c0 + c) - mu_x;
                    let dy = reference.at(0, r0 + r, c0 + c) - mu_y;
                    var_x += g * dx * dx;
                    var_y += g * dy * dy;
                    cov += g * dx * dy;
                }
            }
            let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
            let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random_image(h: usize, w: usize, rng: &mut SeededRng) -> GridImage {
        let data = (0..h * w).map(|_| rng.uniform()).collect();
        GridImage::from_vec(h, w, data).unwrap()
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let mut rng = SeededRng::new(1);
        let x = random_image(8, 8, &mut rng);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_constant_offset_is_20db() {
        let x = GridImage::constant(8, 8, 0.0);
        let y = GridImage::constant(8, 8, 0.1);
        // MSE = 0.01 exactly, so 10*log10(1/0.01) = 20 dB.
        assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_matches_direct_mse_oracle() {
        let mut rng = SeededRng::new(2);
        let x = random_image(8, 8, &mut rng);
        let y = random_image(8, 8, &mut rng);
        let mut sq = 0.0;
        for (a, b) in x.data().iter().zip(y.data().iter()) {
            sq += (a - b) * (a - b);
        }
        let oracle = 10.0 * (1.0 / (sq / 64.0)).log10();
        assert!((psnr(&x, &y, 1.0).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn psnr_scale_consistent() {
        let mut rng = SeededRng::new(3);
        let x = random_image(8, 8, &mut rng);
        let y = random_image(8, 8, &mut rng);
        let base = psnr(&x, &y, 1.0).unwrap();
        for &a in &[0.5, 2.0, 7.3] {
            let scaled = psnr(&x.scale(a), &y.scale(a), a).unwrap();
            assert!((scaled - base).abs() < 1e-9);
        }
    }

    #[test]
    fn psnr_shape_mismatch() {
        let x = GridImage::zeros(4, 4);
        let y = GridImage::zeros(4, 5);
        assert!(psnr(&x, &y, 1.0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = SeededRng::new(4);
        let x = random_image(16, 16, &mut rng);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_shift_matches_scalar_oracle() {
        // Zero-variance windows: per-window SSIM reduces to the luminance
        // term (2*mu_x*mu_y + C1) / (mu_x^2 + mu_y^2 + C1).
        let x = GridImage::constant(12, 12, 0.2);
        let y = GridImage::constant(12, 12, 0.7);
        let c1 = 0.01f64 * 0.01;
        let oracle = (2.0 * 0.2 * 0.7 + c1) / (0.2f64 * 0.2 + 0.7 * 0.7 + c1);
        assert!((ssim(&x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric() {
        let mut rng = SeededRng::new(5);
        let x = random_image(32, 32, &mut rng);
        let y = random_image(32, 32, &mut rng);
        let a = ssim(&x, &y).unwrap();
        let b = ssim(&y, &x).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(a < 1.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = GridImage::zeros(8, 8);
        assert!(ssim(&x, &x).is_err());
    }
}
