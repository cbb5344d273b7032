//! Binary coding patterns for the snapshot spectral imager.
//!
//! A [`CodingPattern`] is the `S x L` binary matrix whose row `s` selects the
//! spectral bands integrated by snapshot `s`. Each row is confined to a
//! contiguous band window of width `bandwidth`; entries outside the window
//! are zero. Rows are required to be nonzero and pairwise distinct so that no
//! snapshot is redundant.

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CodingPattern {
    snapshots: usize,
    bands: usize,
    bandwidth: usize,
    /// `S x L`, row-major, entries in {0, 1}.
    entries: Vec<u8>,
    /// Per-snapshot inclusive band window `(start, end)` with
    /// `end - start + 1 == bandwidth`.
    windows: Vec<(usize, usize)>,
}

impl CodingPattern {
    pub fn new(
        snapshots: usize,
        bands: usize,
        bandwidth: usize,
        entries: Vec<u8>,
        windows: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if snapshots == 0 {
            return Err(Error::invalid("pattern needs at least one snapshot"));
        }
        if bandwidth == 0 || bandwidth > bands {
            return Err(Error::invalid(format!(
                "bandwidth {bandwidth} must be in 1..={bands}"
            )));
        }
        if entries.len() != snapshots * bands {
            return Err(Error::invalid(format!(
                "pattern has {} entries, expected {snapshots}x{bands}",
                entries.len()
            )));
        }
        if windows.len() != snapshots {
            return Err(Error::invalid("one band window required per snapshot"));
        }
        if let Some(&bad) = entries.iter().find(|&&e| e > 1) {
            return Err(Error::invalid(format!(
                "pattern entries must be 0 or 1, found {bad}"
            )));
        }
        for (s, &(lo, hi)) in windows.iter().enumerate() {
            if lo > hi || hi >= bands || hi - lo + 1 != bandwidth {
                return Err(Error::invalid(format!(
                    "snapshot {s}: window ({lo},{hi}) inconsistent with bandwidth {bandwidth} and {bands} bands"
                )));
            }
            let row = &entries[s * bands..(s + 1) * bands];
            if row.iter().enumerate().any(|(k, &e)| e != 0 && (k < lo || k > hi)) {
                return Err(Error::invalid(format!(
                    "snapshot {s}: nonzero entry outside window ({lo},{hi})"
                )));
            }
            if row.iter().all(|&e| e == 0) {
                return Err(Error::invalid(format!("snapshot {s}: all-zero row")));
            }
        }
        for a in 0..snapshots {
            for b in a + 1..snapshots {
                if entries[a * bands..(a + 1) * bands] == entries[b * bands..(b + 1) * bands] {
                    return Err(Error::invalid(format!(
                        "snapshots {a} and {b} have identical rows"
                    )));
                }
            }
        }
        Ok(Self {
            snapshots,
            bands,
            bandwidth,
            entries,
            windows,
        })
    }

    /// Bypasses row validation; for scoring ad-hoc binary matrices in tests.
    #[doc(hidden)]
    pub fn new_unchecked(
        snapshots: usize,
        bands: usize,
        bandwidth: usize,
        entries: Vec<u8>,
        windows: Vec<(usize, usize)>,
    ) -> Self {
        Self {
            snapshots,
            bands,
            bandwidth,
            entries,
            windows,
        }
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn entry(&self, s: usize, k: usize) -> u8 {
        self.entries[s * self.bands + k]
    }

    pub fn row(&self, s: usize) -> &[u8] {
        &self.entries[s * self.bands..(s + 1) * self.bands]
    }

    /// The pattern as an `S x L` real matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.snapshots, self.bands, |s, k| self.entry(s, k) as f64)
    }

    /// Number of ones in each band column, length `L`.
    pub fn column_sums(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.bands];
        for s in 0..self.snapshots {
            for (k, sum) in sums.iter_mut().enumerate() {
                *sum += self.entry(s, k) as u32;
            }
        }
        sums
    }

    /// SHA-256 over a canonical serialization: dims, entries, windows.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.snapshots as u32).to_le_bytes());
        h.update((self.bands as u32).to_le_bytes());
        h.update((self.bandwidth as u32).to_le_bytes());
        h.update(&self.entries);
        for &(lo, hi) in &self.windows {
            h.update((lo as u32).to_le_bytes());
            h.update((hi as u32).to_le_bytes());
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid() -> CodingPattern {
        CodingPattern::new(2, 4, 2, vec![1, 1, 0, 0, 0, 0, 1, 0], vec![(0, 1), (2, 3)]).unwrap()
    }

    #[test]
    fn accepts_valid_pattern() {
        let p = valid();
        assert_eq!(p.entry(0, 0), 1);
        assert_eq!(p.entry(1, 2), 1);
        assert_eq!(p.column_sums(), vec![1, 1, 1, 0]);
    }

    #[test]
    fn rejects_entry_outside_window() {
        let r = CodingPattern::new(1, 4, 2, vec![1, 0, 1, 0], vec![(0, 1)]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_zero_row() {
        let r = CodingPattern::new(1, 4, 2, vec![0, 0, 0, 0], vec![(0, 1)]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_duplicate_rows() {
        let r = CodingPattern::new(
            2,
            4,
            2,
            vec![1, 1, 0, 0, 1, 1, 0, 0],
            vec![(0, 1), (0, 1)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn rejects_bad_window_length() {
        let r = CodingPattern::new(1, 4, 2, vec![1, 1, 1, 0], vec![(0, 2)]);
        assert!(r.is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = valid();
        let b = valid();
        assert_eq!(a.digest(), b.digest());
        let c = CodingPattern::new(2, 4, 2, vec![1, 0, 0, 0, 0, 0, 1, 0], vec![(0, 1), (2, 3)])
            .unwrap();
        assert_ne!(a.digest(), c.digest());
    }
}
