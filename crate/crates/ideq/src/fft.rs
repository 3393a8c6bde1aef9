//! Unitary 2D discrete Fourier transform.
//!
//! Both directions carry a `1/sqrt(h*w)` factor so the transform is an
//! isometry and the masked-Fourier forward model has gradient Lipschitz
//! constant exactly 1. Power-of-two dimensions use an iterative radix-2
//! FFT; other dimensions fall back to the direct O(n^2) sum, which is
//! plenty at the grid sizes this crate targets.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{ComplexGrid, GridImage};

/// 1D transform of `data` in place. `sign` is -1 for the forward transform
/// and +1 for the inverse; no normalization is applied here.
fn transform_1d(data: &mut [Complex64], sign: f64) {
    let n = data.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_radix2(data, sign);
    } else {
        naive_dft(data, sign);
    }
}

fn fft_radix2(data: &mut [Complex64], sign: f64) {
    let n = data.len();
    // bit-reversal permutation
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let u = data[i + k];
                let v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
            i += len;
        }
        len <<= 1;
    }
}

fn naive_dft(data: &mut [Complex64], sign: f64) {
    let n = data.len();
    let src = data.to_vec();
    for (k, out) in data.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, &v) in src.iter().enumerate() {
            let ang = sign * 2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
            acc += v * Complex64::new(ang.cos(), ang.sin());
        }
        *out = acc;
    }
}

fn transform_2d(grid: &ComplexGrid, sign: f64) -> ComplexGrid {
    let (h, w) = grid.shape();
    let mut out = grid.clone();
    let mut row = vec![Complex64::new(0.0, 0.0); w];
    for r in 0..h {
        row.copy_from_slice(&out.data()[r * w..(r + 1) * w]);
        transform_1d(&mut row, sign);
        out.data_mut()[r * w..(r + 1) * w].copy_from_slice(&row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            col[r] = out.at(r, c);
        }
        transform_1d(&mut col, sign);
        for r in 0..h {
            *out.at_mut(r, c) = col[r];
        }
    }
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for v in out.data_mut() {
        *v *= scale;
    }
    out
}

/// Forward unitary 2D DFT of a complex grid.
pub fn dft2(grid: &ComplexGrid) -> ComplexGrid {
    transform_2d(grid, -1.0)
}

/// Forward unitary 2D DFT of a real single-channel image.
pub fn dft2_real(img: &GridImage) -> Result<ComplexGrid> {
    Ok(dft2(&ComplexGrid::from_real(img)?))
}

/// Inverse unitary 2D DFT; exact inverse of `dft2` up to rounding.
pub fn idft2(grid: &ComplexGrid) -> ComplexGrid {
    transform_2d(grid, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Direct O(n^2) 2D DFT, the independent oracle for the fast path.
    fn oracle_dft2(grid: &ComplexGrid, sign: f64) -> ComplexGrid {
        let (h, w) = grid.shape();
        let mut out = ComplexGrid::zeros(h, w);
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = sign
                            * 2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        acc += grid.at(r, c) * Complex64::new(ang.cos(), ang.sin());
                    }
                }
                *out.at_mut(u, v) = acc * scale;
            }
        }
        out
    }

    fn random_complex(h: usize, w: usize, rng: &mut SeededRng) -> ComplexGrid {
        let data = (0..h * w)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        ComplexGrid::from_vec(h, w, data).unwrap()
    }

    fn max_abs_diff(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
        a.data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_image_concentrates_at_dc() {
        let c = 0.7;
        let img = GridImage::constant(4, 4, c);
        let spec = dft2_real(&img).unwrap();
        assert!((spec.at(0, 0).norm() - 4.0 * c).abs() < 1e-12);
        for r in 0..4 {
            for col in 0..4 {
                if (r, col) != (0, 0) {
                    assert!(spec.at(r, col).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unit_dc_gives_constant_half_on_2x2() {
        let mut spec = ComplexGrid::zeros(2, 2);
        *spec.at_mut(0, 0) = Complex64::new(1.0, 0.0);
        let img = idft2(&spec);
        for v in img.data() {
            assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn idft_of_zero_is_zero() {
        let z = ComplexGrid::zeros(5, 3);
        let out = idft2(&z);
        assert!(out.data().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn round_trip_random_8x8() {
        let mut rng = SeededRng::new(11);
        let g = random_complex(8, 8, &mut rng);
        let back = idft2(&dft2(&g));
        assert!(max_abs_diff(&g, &back) < 1e-10 * g.norm().max(1.0));
    }

    #[test]
    fn matches_direct_sum_oracle() {
        let mut rng = SeededRng::new(5);
        for &(h, w) in &[(8usize, 8usize), (16, 16), (6, 10), (7, 5)] {
            let g = random_complex(h, w, &mut rng);
            let fast = dft2(&g);
            let slow = oracle_dft2(&g, -1.0);
            assert!(max_abs_diff(&fast, &slow) < 1e-10, "forward {h}x{w}");
            let fast_inv = idft2(&g);
            let slow_inv = oracle_dft2(&g, 1.0);
            assert!(max_abs_diff(&fast_inv, &slow_inv) < 1e-10, "inverse {h}x{w}");
        }
    }

    #[test]
    fn parseval_16x16_against_oracle() {
        let mut rng = SeededRng::new(9);
        let g = random_complex(16, 16, &mut rng);
        let spec = dft2(&g);
        let oracle = oracle_dft2(&g, -1.0);
        assert!((spec.norm() - g.norm()).abs() <= 1e-10 * g.norm());
        assert!((oracle.norm() - g.norm()).abs() <= 1e-10 * g.norm());
    }
}
