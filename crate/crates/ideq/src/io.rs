//! File formats: 8-bit binary PGM for grayscale images and a raw
//! little-endian float64 blob for lossless grid dumps.
//!
//! PGM values map linearly between `[0, 255]` and `[0, 1]`. The blob format
//! is one ASCII header line `idqblob <kind> <height> <width> <channels>`
//! followed by the raw values; complex grids store interleaved re/im pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, GridImage};

/// Writes a single-channel image as binary PGM (P5), clamping to `[0, 1]`.
pub fn write_pgm(path: &Path, img: &GridImage) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument(
            "pgm output requires a single channel".to_string(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a binary PGM (P5) into a `[0, 1]` image grid.
pub fn read_pgm(path: &Path) -> Result<GridImage> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
        // skip whitespace and `#` comment lines
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Parse("truncated pgm header".to_string()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).to_string())
    }

    let magic = next_token(&bytes, &mut pos)?;
    if magic != "P5" {
        return Err(Error::Parse(format!("expected P5 magic, got {magic}")));
    }
    let width: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|e| Error::Parse(format!("pgm width: {e}")))?;
    let height: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|e| Error::Parse(format!("pgm height: {e}")))?;
    let maxval: usize = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|e| Error::Parse(format!("pgm maxval: {e}")))?;
    if maxval != 255 {
        return Err(Error::Parse(format!("only maxval 255 supported, got {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    if bytes.len() < pos + width * height {
        return Err(Error::Parse("pgm pixel data truncated".to_string()));
    }
    let data: Vec<f64> = bytes[pos..pos + width * height]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    GridImage::from_vec(height, width, data)
}

const BLOB_MAGIC: &str = "idqblob";

/// Lossless float64 dump of a real grid.
pub fn write_blob_real(path: &Path, img: &GridImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(
        w,
        "{BLOB_MAGIC} real {} {} {}\n",
        img.height(),
        img.width(),
        img.channels()
    )?;
    for v in img.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_blob_real(path: &Path) -> Result<GridImage> {
    let (kind, h, w, c, payload) = read_blob(path)?;
    if kind != "real" {
        return Err(Error::Parse(format!("expected real blob, got {kind}")));
    }
    if payload.len() != c * h * w {
        return Err(Error::Parse("blob payload length mismatch".to_string()));
    }
    GridImage::from_vec_multi(c, h, w, payload)
}

/// Lossless float64 dump of a complex grid, interleaved re/im.
pub fn write_blob_complex(path: &Path, grid: &ComplexGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "{BLOB_MAGIC} complex {} {} 1\n", grid.height(), grid.width())?;
    for v in grid.data() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_blob_complex(path: &Path) -> Result<ComplexGrid> {
    let (kind, h, w, _c, payload) = read_blob(path)?;
    if kind != "complex" {
        return Err(Error::Parse(format!("expected complex blob, got {kind}")));
    }
    if payload.len() != 2 * h * w {
        return Err(Error::Parse("blob payload length mismatch".to_string()));
    }
    let data: Vec<Complex64> = payload
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect();
    ComplexGrid::from_vec(h, w, data)
}

fn read_blob(path: &Path) -> Result<(String, usize, usize, usize, Vec<f64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse("missing blob header line".to_string()))?;
    let header = String::from_utf8_lossy(&bytes[..newline]).to_string();
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != BLOB_MAGIC {
        return Err(Error::Parse(format!("bad blob header: {header}")));
    }
    let kind = fields[1].to_string();
    let h: usize = fields[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
    let w: usize = fields[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
    let c: usize = fields[4].parse().map_err(|e| Error::Parse(format!("{e}")))?;
    let payload_bytes = &bytes[newline + 1..];
    if payload_bytes.len() % 8 != 0 {
        return Err(Error::Parse("blob payload not a multiple of 8 bytes".to_string()));
    }
    let payload: Vec<f64> = payload_bytes
        .chunks_exact(8)
        .map(|p| f64::from_le_bytes(p.try_into().unwrap()))
        .collect();
    Ok((kind, h, w, c, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use std::env;

    fn tmp(name: &str) -> std::path::PathBuf {
        env::temp_dir().join(format!("ideq_io_test_{}_{name}", std::process::id()))
    }

    #[test]
    fn pgm_round_trip_quantized() {
        let mut rng = SeededRng::new(8);
        let data: Vec<f64> = (0..48).map(|_| rng.uniform()).collect();
        let img = GridImage::from_vec(6, 8, data).unwrap();
        let path = tmp("a.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn blob_real_bit_exact() {
        let mut rng = SeededRng::new(9);
        let data: Vec<f64> = (0..24).map(|_| rng.normal() * 1e3).collect();
        let img = GridImage::from_vec_multi(2, 3, 4, data).unwrap();
        let path = tmp("b.blob");
        write_blob_real(&path, &img).unwrap();
        let back = read_blob_real(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn blob_complex_bit_exact() {
        let mut rng = SeededRng::new(10);
        let data: Vec<Complex64> = (0..12)
            .map(|_| Complex64::new(rng.normal(), rng.normal()))
            .collect();
        let grid = ComplexGrid::from_vec(3, 4, data).unwrap();
        let path = tmp("c.blob");
        write_blob_complex(&path, &grid).unwrap();
        let back = read_blob_complex(&path).unwrap();
        for (a, b) in grid.data().iter().zip(back.data().iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        std::fs::remove_file(path).ok();
    }
}
