//! Spectral datacubes and ground-truth label maps.
//!
//! A [`SpectralCube`] stores an `M x N x L` scene pixel-major: pixels in
//! row-major `(i, j)` order, the `L` spectral values of each pixel
//! contiguous. Every downstream consumer works per pixel spectrum, so this
//! layout keeps spectrum extraction a contiguous slice.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `M x N x L` spectral image, values nonnegative and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    rows: usize,
    cols: usize,
    bands: usize,
    values: Vec<f64>,
}

impl SpectralCube {
    /// Builds a cube, validating shape, finiteness and nonnegativity.
    pub fn new(rows: usize, cols: usize, bands: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || bands == 0 {
            return Err(Error::invalid("cube dimensions must be positive"));
        }
        let expected = rows
            .checked_mul(cols)
            .and_then(|p| p.checked_mul(bands))
            .ok_or_else(|| Error::invalid("cube dimensions overflow"))?;
        if values.len() != expected {
            return Err(Error::invalid(format!(
                "cube payload has {} values, expected {}x{}x{} = {}",
                values.len(),
                rows,
                cols,
                bands,
                expected
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "cube value at index {i} is not finite ({v})"
                )));
            }
            if v < 0.0 {
                return Err(Error::invalid(format!(
                    "cube value at index {i} is negative ({v})"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            bands,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn num_pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major pixel index of spatial site `(i, j)`.
    pub fn pixel_index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    /// The spectrum of pixel `p` (row-major index), a contiguous slice of length `L`.
    pub fn spectrum(&self, p: usize) -> &[f64] {
        &self.values[p * self.bands..(p + 1) * self.bands]
    }

    /// The `L x MN` matrix whose column `j` is the spectral signature of pixel `j`.
    pub fn spectra_matrix(&self) -> DMatrix<f64> {
        // Column-major storage means column j is contiguous, matching the
        // pixel-major layout of `values` exactly.
        DMatrix::from_column_slice(self.bands, self.num_pixels(), &self.values)
    }

    /// Extracts the `height x width` sub-scene with top-left corner `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("crop dimensions must be positive"));
        }
        if row0 + height > self.rows || col0 + width > self.cols {
            return Err(Error::invalid(format!(
                "crop ({row0},{col0})+{height}x{width} exceeds cube {}x{}",
                self.rows, self.cols
            )));
        }
        let mut values = Vec::with_capacity(height * width * self.bands);
        for i in row0..row0 + height {
            for j in col0..col0 + width {
                values.extend_from_slice(self.spectrum(self.pixel_index(i, j)));
            }
        }
        SpectralCube::new(height, width, self.bands, values)
    }
}

/// Per-pixel class labels: 0 = unlabeled, `1..=k` = class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    rows: usize,
    cols: usize,
    labels: Vec<u32>,
    k: u32,
}

impl LabelMap {
    /// Builds a label map; `k` is derived as the maximum label present.
    pub fn new(rows: usize, cols: usize, labels: Vec<u32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("label map dimensions must be positive"));
        }
        if labels.len() != rows * cols {
            return Err(Error::invalid(format!(
                "label map has {} entries, expected {rows}x{cols} = {}",
                labels.len(),
                rows * cols
            )));
        }
        let k = labels.iter().copied().max().unwrap_or(0);
        Ok(Self {
            rows,
            cols,
            labels,
            k,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of classes (the maximum label value; 0 when fully unlabeled).
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize, j: usize) -> u32 {
        self.labels[i * self.cols + j]
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Keeps only `classes`, remapped to `1..=classes.len()` in the given
    /// order; every other pixel becomes unlabeled.
    pub fn remap_subset(&self, classes: &[u32]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("class subset must not be empty"));
        }
        if classes.iter().any(|&c| c == 0) {
            return Err(Error::invalid("class subset cannot include 0 (unlabeled)"));
        }
        let mut seen = std::collections::HashSet::new();
        if !classes.iter().all(|c| seen.insert(c)) {
            return Err(Error::invalid("class subset contains duplicates"));
        }
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                classes
                    .iter()
                    .position(|&c| c == l)
                    .map(|p| p as u32 + 1)
                    .unwrap_or(0)
            })
            .collect();
        LabelMap::new(self.rows, self.cols, labels)
    }

    /// Extracts the `height x width` sub-map with top-left corner `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("crop dimensions must be positive"));
        }
        if row0 + height > self.rows || col0 + width > self.cols {
            return Err(Error::invalid(format!(
                "crop ({row0},{col0})+{height}x{width} exceeds map {}x{}",
                self.rows, self.cols
            )));
        }
        let mut labels = Vec::with_capacity(height * width);
        for i in row0..row0 + height {
            for j in col0..col0 + width {
                labels.push(self.label(i, j));
            }
        }
        LabelMap::new(height, width, labels)
    }
}
