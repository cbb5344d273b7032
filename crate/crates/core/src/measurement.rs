//! Compressed measurement sets.
//!
//! An `S x MN` matrix: row `s` is snapshot `s` across all pixels, column `j`
//! is the compressed spectral signature of pixel `j`. The column structure is
//! what the subspace clustering stage consumes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    rows: usize,
    cols: usize,
    /// `S x MN` measurement matrix.
    data: DMatrix<f64>,
    /// Digest of the coding pattern (or code tensor) that produced the data.
    pattern_digest: [u8; 32],
    noise_sigma: f64,
}

impl MeasurementSet {
    pub fn new(
        rows: usize,
        cols: usize,
        data: DMatrix<f64>,
        pattern_digest: [u8; 32],
        noise_sigma: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("scene dimensions must be positive"));
        }
        if data.nrows() == 0 {
            return Err(Error::invalid("measurement set needs at least one snapshot"));
        }
        if data.ncols() != rows * cols {
            return Err(Error::invalid(format!(
                "measurement matrix has {} columns, expected {rows}x{cols} = {}",
                data.ncols(),
                rows * cols
            )));
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::invalid(format!(
                "noise sigma must be finite and nonnegative, got {noise_sigma}"
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "measurement value at column-major index {bad} is not finite"
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            pattern_digest,
            noise_sigma,
        })
    }

    pub fn snapshots(&self) -> usize {
        self.data.nrows()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn pattern_digest(&self) -> &[u8; 32] {
        &self.pattern_digest
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Root-mean-square of all measurement values.
    pub fn rms(&self) -> f64 {
        let n = (self.data.nrows() * self.data.ncols()) as f64;
        (self.data.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
    }
}
