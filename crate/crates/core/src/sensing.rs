//! Compressive measurement synthesis.
//!
//! Each snapshot integrates the coded spectral bands of every pixel:
//! `data[s][j] = sum_k H[s][k] * f_j[k] + w`, with `w` i.i.d. Gaussian
//! detector noise added after integration. Column `j` of the output is the
//! compressed spectral signature of pixel `j`.
//!
//! Per-pixel work is embarrassingly parallel; noise is drawn serially in a
//! fixed (snapshot-major) order before the pixel loop, so serial and
//! parallel execution produce bitwise identical output.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::pattern::CodingPattern;
use crate::rng::{stream_rng, streams};

/// Additive white Gaussian detector noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::invalid(format!(
                "noise sigma must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(Self { sigma, seed })
    }

    /// Noiseless sensing.
    pub fn none() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }
}

/// Noise standard deviation that realizes `snr_db` decibels of
/// signal-to-noise against a signal of the given root-mean-square.
pub fn sigma_from_snr_db(signal_rms: f64, snr_db: f64) -> f64 {
    signal_rms * 10f64.powf(-snr_db / 20.0)
}

/// Noise values for an `S x P` measurement matrix, drawn in snapshot-major
/// order regardless of how the pixel loop is scheduled.
fn noise_matrix(snapshots: usize, pixels: usize, noise: &NoiseSpec) -> Result<Option<Vec<f64>>> {
    if noise.sigma == 0.0 {
        return Ok(None);
    }
    let normal =
        Normal::new(0.0, noise.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream_rng(noise.seed, streams::SENSE_NOISE);
    // Row-major draw order: snapshot 0 across pixels, then snapshot 1, ...
    Ok(Some(
        (0..snapshots * pixels)
            .map(|_| normal.sample(&mut rng))
            .collect(),
    ))
}

fn sense_impl(
    cube: &SpectralCube,
    pattern: &CodingPattern,
    noise: &NoiseSpec,
    parallel: bool,
) -> Result<MeasurementSet> {
    if pattern.bands() != cube.bands() {
        return Err(Error::invalid(format!(
            "pattern has {} bands but cube has {}",
            pattern.bands(),
            cube.bands()
        )));
    }
    let snapshots = pattern.snapshots();
    let pixels = cube.num_pixels();
    let noise_values = noise_matrix(snapshots, pixels, noise)?;

    // One column (all snapshots of one pixel) per chunk; identical
    // arithmetic on either path.
    let fill = |j: usize, col: &mut [f64]| {
        let spectrum = cube.spectrum(j);
        for (s, out) in col.iter_mut().enumerate() {
            let row = pattern.row(s);
            let mut acc = 0.0;
            for (k, &h) in row.iter().enumerate() {
                if h != 0 {
                    acc += spectrum[k];
                }
            }
            if let Some(nv) = &noise_values {
                acc += nv[s * pixels + j];
            }
            *out = acc;
        }
    };

    let mut data = vec![0.0f64; snapshots * pixels];
    if parallel {
        data.par_chunks_mut(snapshots)
            .enumerate()
            .for_each(|(j, col)| fill(j, col));
    } else {
        for (j, col) in data.chunks_mut(snapshots).enumerate() {
            fill(j, col);
        }
    }

    // Column-major construction: chunk j becomes column j.
    let matrix = DMatrix::from_vec(snapshots, pixels, data);
    MeasurementSet::new(cube.rows(), cube.cols(), matrix, pattern.digest(), noise.sigma)
}

/// Senses a cube through a shared per-snapshot coding pattern.
pub fn sense(
    cube: &SpectralCube,
    pattern: &CodingPattern,
    noise: &NoiseSpec,
) -> Result<MeasurementSet> {
    sense_impl(cube, pattern, noise, true)
}

/// [`sense`] forced onto a single thread.
pub fn sense_serial(
    cube: &SpectralCube,
    pattern: &CodingPattern,
    noise: &NoiseSpec,
) -> Result<MeasurementSet> {
    sense_impl(cube, pattern, noise, false)
}

/// A spatially varying binary code: one `L`-entry selector per
/// (snapshot, pixel) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeTensor {
    snapshots: usize,
    pixels: usize,
    bands: usize,
    /// Layout: `data[(s * pixels + j) * bands + k]`.
    data: Vec<u8>,
}

impl CodeTensor {
    pub fn new(snapshots: usize, pixels: usize, bands: usize, data: Vec<u8>) -> Result<Self> {
        if snapshots == 0 || pixels == 0 || bands == 0 {
            return Err(Error::invalid("code tensor dimensions must be positive"));
        }
        if data.len() != snapshots * pixels * bands {
            return Err(Error::invalid(format!(
                "code tensor has {} entries, expected {snapshots}x{pixels}x{bands}",
                data.len()
            )));
        }
        if data.iter().any(|&e| e > 1) {
            return Err(Error::invalid("code tensor entries must be 0 or 1"));
        }
        Ok(Self {
            snapshots,
            pixels,
            bands,
            data,
        })
    }

    /// Broadcasts a per-snapshot pattern to every pixel.
    pub fn from_pattern(pattern: &CodingPattern, pixels: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(pattern.snapshots() * pixels * pattern.bands());
        for s in 0..pattern.snapshots() {
            for _ in 0..pixels {
                data.extend_from_slice(pattern.row(s));
            }
        }
        CodeTensor::new(pattern.snapshots(), pixels, pattern.bands(), data)
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn code(&self, s: usize, j: usize) -> &[u8] {
        let base = (s * self.pixels + j) * self.bands;
        &self.data[base..base + self.bands]
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.snapshots as u32).to_le_bytes());
        h.update((self.pixels as u32).to_le_bytes());
        h.update((self.bands as u32).to_le_bytes());
        h.update(&self.data);
        h.finalize().into()
    }
}

/// Senses a cube through a spatially varying code tensor.
pub fn spatially_varying_sense(
    cube: &SpectralCube,
    tensor: &CodeTensor,
    noise: &NoiseSpec,
) -> Result<MeasurementSet> {
    if tensor.bands != cube.bands() {
        return Err(Error::invalid(format!(
            "code tensor has {} bands but cube has {}",
            tensor.bands,
            cube.bands()
        )));
    }
    if tensor.pixels != cube.num_pixels() {
        return Err(Error::invalid(format!(
            "code tensor covers {} pixels but cube has {}",
            tensor.pixels,
            cube.num_pixels()
        )));
    }
    let snapshots = tensor.snapshots;
    let pixels = tensor.pixels;
    let noise_values = noise_matrix(snapshots, pixels, noise)?;

    let mut data = vec![0.0f64; snapshots * pixels];
    data.par_chunks_mut(snapshots).enumerate().for_each(|(j, col)| {
        let spectrum = cube.spectrum(j);
        for (s, out) in col.iter_mut().enumerate() {
            let code = tensor.code(s, j);
            let mut acc = 0.0;
            for (k, &t) in code.iter().enumerate() {
                if t != 0 {
                    acc += spectrum[k];
                }
            }
            if let Some(nv) = &noise_values {
                acc += nv[s * pixels + j];
            }
            *out = acc;
        }
    });

    let matrix = DMatrix::from_vec(snapshots, pixels, data);
    MeasurementSet::new(cube.rows(), cube.cols(), matrix, tensor.digest(), noise.sigma)
}
