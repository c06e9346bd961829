//! 8-bit grayscale PGM (P5 binary, P2 plain) reading and writing, and the
//! pixel standardization applied before factorization.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sparsemf::{sample_ground_truth, DenseMatrix, Noise, ObservationMatrix, Provenance};

use crate::error::{HarnessError, ImageError, Result};
use crate::output::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major, `height` rows of `width` pixels.
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// One mean and one standard deviation for the whole image.
    #[default]
    Global,
    PerColumn,
    /// Raw pixel values.
    None,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::CorruptHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptHeader(format!("{what} out of range")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm, ImageError> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        Some([b'P', d]) if d.is_ascii_digit() => {
            return Err(ImageError::UnsupportedFormat(format!("P{} (only P5/P2 grayscale)", *d as char)))
        }
        _ => return Err(ImageError::UnsupportedFormat("not a PGM file".into())),
    };
    let mut hdr = Header { bytes, pos: 2 };
    if hdr.bytes.get(2).is_some_and(|c| !c.is_ascii_whitespace()) {
        return Err(ImageError::CorruptHeader("no separator after magic number".into()));
    }
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::CorruptHeader(format!("empty image {width}x{height}")));
    }
    if maxval == 0 {
        return Err(ImageError::CorruptHeader("maxval 0".into()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedFormat(format!("maxval {maxval}; only 8-bit images")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| ImageError::CorruptHeader("dimensions overflow".into()))?;
    let pixels = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(hdr.pos) {
            Some(c) if c.is_ascii_whitespace() => {}
            _ => return Err(ImageError::CorruptHeader("no separator before raster".into())),
        }
        let raster = &bytes[hdr.pos + 1..];
        if raster.len() < n {
            return Err(ImageError::CorruptData(format!("expected {n} pixels, found {}", raster.len())));
        }
        raster[..n].to_vec()
    } else {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let v = hdr
                .number("pixel")
                .map_err(|_| ImageError::CorruptData(format!("expected {n} pixels, found {i}")))?;
            if v > maxval {
                return Err(ImageError::CorruptData(format!("pixel {i} = {v} exceeds maxval {maxval}")));
            }
            out.push(v as u8);
        }
        out
    };
    if let Some((i, &p)) = pixels.iter().enumerate().find(|(_, &p)| usize::from(p) > maxval) {
        return Err(ImageError::CorruptData(format!("pixel {i} = {p} exceeds maxval {maxval}")));
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(parse_pgm(&bytes)?)
}

impl Pgm {
    pub fn encode(&self, binary: bool) -> Vec<u8> {
        let magic = if binary { "P5" } else { "P2" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if binary {
            out.extend_from_slice(&self.pixels);
        } else {
            for row in self.pixels.chunks(self.width) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        out
    }

    pub fn write(&self, path: &Path, binary: bool) -> Result<()> {
        write_atomic(path, &self.encode(binary))
    }

    /// `height × width` matrix of raw pixel values.
    pub fn to_matrix(&self) -> DenseMatrix<f64> {
        DenseMatrix::from_vec(self.height, self.width, self.pixels.iter().map(|&p| f64::from(p)).collect())
            .expect("non-empty by construction")
    }
}

fn standardize(values: &mut [f64], what: &str) -> Result<(), ImageError> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(ImageError::NormalizationDegenerate(what.to_string()));
    }
    let sd = var.sqrt();
    for x in values.iter_mut() {
        *x = (*x - mean) / sd;
    }
    // One refinement pass removes the rounding left by the first.
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in values.iter_mut() {
        *x = (*x - mean) / sd;
    }
    Ok(())
}

pub fn normalize(m: &DenseMatrix<f64>, how: Normalization) -> Result<DenseMatrix<f64>, ImageError> {
    match how {
        Normalization::None => Ok(m.clone()),
        Normalization::Global => {
            let mut v = m.as_slice().to_vec();
            standardize(&mut v, "")?;
            Ok(DenseMatrix::from_vec(m.rows(), m.cols(), v).expect("same shape"))
        }
        Normalization::PerColumn => {
            let t = m.transpose();
            let mut v = t.into_vec();
            for (c, col) in v.chunks_mut(m.rows()).enumerate() {
                standardize(col, &format!(" in column {c}"))?;
            }
            Ok(DenseMatrix::from_vec(m.cols(), m.rows(), v).expect("same shape").transpose())
        }
    }
}

/// Reads a PGM and standardizes it; rows of the image become rows of `V`.
pub fn ingest_image(path: &Path, how: Normalization) -> Result<ObservationMatrix<f64>> {
    let pgm = read_pgm(path)?;
    let v = normalize(&pgm.to_matrix(), how)?;
    Ok(ObservationMatrix::new(
        v,
        Provenance::Image {
            path: path.to_path_buf(),
        },
    )?)
}

/// A rank-`h` product of sparse ground-truth factors, min-max quantized to 8 bits.
pub fn synthetic_image(l: usize, m: usize, h: usize, rho: f64, seed: u64) -> Result<Pgm> {
    let gt = sample_ground_truth::<f64>(l, m, h, rho, Noise::None, seed)?;
    let p = gt.product();
    let (lo, hi) = p
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels = p
        .as_slice()
        .iter()
        .map(|&x| ((x - lo) / span * 255.0).round() as u8)
        .collect();
    Ok(Pgm {
        width: m,
        height: l,
        maxval: 255,
        pixels,
    })
}

/// Adds `N(0, sigma²)` noise, reproducible from `seed`.
pub fn add_noise(v: &DenseMatrix<f64>, sigma: f64, seed: u64) -> DenseMatrix<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = v
        .as_slice()
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    DenseMatrix::from_vec(v.rows(), v.cols(), noisy).expect("same shape")
}
