//! Binary sampling masks for the undersampled forward models.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridImage;
use crate::io;
use crate::rng::SeededRng;

/// Binary keep/drop grid. Entries are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    keep: Vec<bool>,
}

impl BinaryMask {
    pub fn full(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            keep: vec![true; height * width],
        }
    }

    pub fn from_keep(height: usize, width: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != height * width {
            return Err(Error::shape_mismatch(
                format!("{} entries", height * width),
                format!("{}", keep.len()),
            ));
        }
        Ok(BinaryMask {
            height,
            width,
            keep,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn kept(&self, row: usize, col: usize) -> bool {
        self.keep[row * self.width + col]
    }

    #[inline]
    pub fn factor(&self, row: usize, col: usize) -> f64 {
        if self.kept(row, col) {
            1.0
        } else {
            0.0
        }
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_fraction(&self) -> f64 {
        self.kept_count() as f64 / self.keep.len() as f64
    }

    /// Mask as a 0/1 image grid.
    pub fn to_grid(&self) -> GridImage {
        GridImage::from_vec(
            self.height,
            self.width,
            self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap()
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        io::write_pgm(path, &self.to_grid())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let grid = io::read_pgm(path)?;
        let keep = grid.data().iter().map(|&v| v > 0.5).collect();
        BinaryMask::from_keep(grid.height(), grid.width(), keep)
    }
}

/// Mask construction rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskKind {
    /// Keep each pixel independently with probability `p`.
    RandomPixel { p: f64 },
    /// Keep roughly `1/R` of the k-space columns: a centered fully sampled
    /// band of `max(4, width/32)` columns counts toward the total, and the
    /// remaining kept columns are spread evenly. Deterministic.
    CartesianLines { acceleration: f64 },
}

pub fn generate_mask(
    kind: MaskKind,
    height: usize,
    width: usize,
    rng: &mut SeededRng,
) -> Result<BinaryMask> {
    match kind {
        MaskKind::RandomPixel { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "random-pixel mask needs p in (0, 1], got {p}"
                )));
            }
            let keep = (0..height * width).map(|_| rng.gen_bool(p)).collect();
            BinaryMask::from_keep(height, width, keep)
        }
        MaskKind::CartesianLines { acceleration } => {
            if acceleration < 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "cartesian mask needs acceleration >= 1, got {acceleration}"
                )));
            }
            let band = 4.max(width / 32).min(width);
            let band_start = (width - band) / 2;
            let band_cols: Vec<usize> = (band_start..band_start + band).collect();
            let target_total = ((width as f64 / acceleration).round() as usize).max(band);
            let extra = target_total - band;
            let remaining: Vec<usize> =
                (0..width).filter(|c| !band_cols.contains(c)).collect();
            let mut cols = band_cols;
            if extra > 0 && !remaining.is_empty() {
                let stride = remaining.len() / extra;
                for i in 0..extra {
                    cols.push(remaining[(i * stride).min(remaining.len() - 1)]);
                }
            }
            let mut keep = vec![false; height * width];
            for r in 0..height {
                for &c in &cols {
                    keep[r * width + c] = true;
                }
            }
            BinaryMask::from_keep(height, width, keep)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_one_keeps_everything() {
        let mut rng = SeededRng::new(1);
        let m = generate_mask(MaskKind::RandomPixel { p: 1.0 }, 8, 8, &mut rng).unwrap();
        assert_eq!(m.kept_count(), 64);
    }

    #[test]
    fn p_half_within_binomial_bound() {
        let mut rng = SeededRng::new(1234);
        let m = generate_mask(MaskKind::RandomPixel { p: 0.5 }, 64, 64, &mut rng).unwrap();
        let frac = m.kept_fraction();
        // 3 sigma for Binomial(4096, 0.5) is ~0.023; spec window is wider.
        assert!((0.44..=0.56).contains(&frac), "kept fraction {frac}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut rng = SeededRng::new(2);
        assert!(generate_mask(MaskKind::RandomPixel { p: 0.0 }, 4, 4, &mut rng).is_err());
        assert!(generate_mask(MaskKind::RandomPixel { p: 1.5 }, 4, 4, &mut rng).is_err());
        assert!(
            generate_mask(MaskKind::CartesianLines { acceleration: 0.5 }, 4, 4, &mut rng)
                .is_err()
        );
    }

    #[test]
    fn cartesian_x8_on_64_columns() {
        let mut rng = SeededRng::new(3);
        let m = generate_mask(
            MaskKind::CartesianLines { acceleration: 8.0 },
            16,
            64,
            &mut rng,
        )
        .unwrap();
        // 4-column center band plus 4 spread columns: 8 kept columns total.
        let kept_cols: Vec<usize> = (0..64).filter(|&c| m.kept(0, c)).collect();
        assert_eq!(kept_cols.len(), 8, "kept columns {kept_cols:?}");
        for c in 30..34 {
            assert!(m.kept(0, c), "center band column {c}");
        }
        // every row samples the same columns
        for r in 0..16 {
            for c in 0..64 {
                assert_eq!(m.kept(r, c), m.kept(0, c));
            }
        }
    }

    #[test]
    fn mask_pgm_round_trip() {
        let mut rng = SeededRng::new(4);
        let m = generate_mask(MaskKind::RandomPixel { p: 0.4 }, 8, 8, &mut rng).unwrap();
        let path = std::env::temp_dir().join(format!("ideq_mask_{}.pgm", std::process::id()));
        m.write_pgm(&path).unwrap();
        let back = BinaryMask::read_pgm(&path).unwrap();
        assert_eq!(m, back);
        std::fs::remove_file(path).ok();
    }
}
