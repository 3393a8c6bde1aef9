//! Dense real and complex 2D grids.
//!
//! `GridImage` is the iterate/signal type used everywhere: a row-major
//! `channels x height x width` block of `f64`. All experiments use a single
//! channel; the channel axis exists so the small convolutional nets can reuse
//! the same storage for feature maps.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real-valued image grid, nominal range `[0, 1]` for signals.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl GridImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::zeros_multi(1, height, width)
    }

    pub fn zeros_multi(channels: usize, height: usize, width: usize) -> Self {
        GridImage {
            height,
            width,
            channels,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        GridImage {
            height,
            width,
            channels: 1,
            data: vec![value; height * width],
        }
    }

    /// Builds a single-channel grid from row-major data.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::from_vec_multi(1, height, width, data)
    }

    pub fn from_vec_multi(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::shape_mismatch(
                format!("{} values", channels * height * width),
                format!("{}", data.len()),
            ));
        }
        Ok(GridImage {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    pub fn at_mut(&mut self, channel: usize, row: usize, col: usize) -> &mut f64 {
        &mut self.data[(channel * self.height + row) * self.width + col]
    }

    /// `(height, width, channels)` triple used for shape checks.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn same_shape(&self, other: &GridImage) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_same_shape(&self, other: &GridImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape_mismatch(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn dot(&self, other: &GridImage) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &GridImage) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridImage {
        GridImage {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridImage, f: impl Fn(f64, f64) -> f64) -> GridImage {
        debug_assert!(self.same_shape(other));
        GridImage {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self + scale * other`, elementwise.
    pub fn add_scaled(&self, other: &GridImage, scale: f64) -> GridImage {
        self.zip_map(other, |a, b| a + scale * b)
    }

    pub fn scale(&self, s: f64) -> GridImage {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &GridImage) -> GridImage {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridImage) -> GridImage {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &GridImage) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }
}

/// Complex-valued grid: the measurement domain for the masked Fourier model.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(height: usize, width: usize) -> Self {
        ComplexGrid {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape_mismatch(
                format!("{} values", height * width),
                format!("{}", data.len()),
            ));
        }
        Ok(ComplexGrid {
            height,
            width,
            data,
        })
    }

    /// Lifts a real single-channel image into the complex plane.
    pub fn from_real(img: &GridImage) -> Result<Self> {
        if img.channels() != 1 {
            return Err(Error::shape_mismatch(
                "1 channel".to_string(),
                format!("{}", img.channels()),
            ));
        }
        Ok(ComplexGrid {
            height: img.height(),
            width: img.width(),
            data: img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        })
    }

    /// Real part as an image grid.
    pub fn re(&self) -> GridImage {
        GridImage {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.iter().map(|c| c.re).collect(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut Complex64 {
        &mut self.data[row * self.width + col]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn check_same_shape(&self, other: &ComplexGrid) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::shape_mismatch(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}
