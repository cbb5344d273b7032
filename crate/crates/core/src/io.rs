//! Bit-exact file I/O for cubes, measurements, labels and patterns.
//!
//! Binary layouts (all integers and floats little-endian):
//!
//! * `SCUBE1` cube file: bytes 0-3 magic `"SCUB"`, u32 version = 1,
//!   u32 M, u32 N, u32 L, then `M*N*L` IEEE-754 f64 values pixel-major.
//! * `SMEAS1` measurement file: bytes 0-3 magic `"SMEA"`, u32 version = 1,
//!   u32 S, u32 M, u32 N, f64 noise sigma, 32-byte pattern hash, then
//!   `S*M*N` f64 values row-major (`S x MN`).
//!
//! Text layouts:
//!
//! * Labels: plain CSV of integers, M rows x N columns.
//! * Patterns: CSV of 0/1, S rows x L columns, plus a JSON sidecar
//!   `{"lambda1": [...], "lambda2": [...], "bandwidth": n}` holding the
//!   per-snapshot band windows.
//!
//! Loaders reject non-finite values and, for cubes, negative values, with
//! errors naming the byte offset. `save(load(p))` reproduces `p` byte for
//! byte on every well-formed file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cube::{LabelMap, SpectralCube};
use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;
use crate::pattern::CodingPattern;

const CUBE_MAGIC: [u8; 4] = *b"SCUB";
const MEAS_MAGIC: [u8; 4] = *b"SMEA";
const FORMAT_VERSION: u32 = 1;

/// Byte cursor with offset-tracking reads.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                offset: self.pos as u64,
                needed: n as u64,
                available: (self.buf.len() - self.pos) as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn expect_magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let b = self.take(4).map_err(|_| Error::Truncated {
            offset: 0,
            needed: 4,
            available: self.buf.len() as u64,
        })?;
        if b != expected {
            return Err(Error::BadMagic {
                expected,
                found: [b[0], b[1], b[2], b[3]],
            });
        }
        Ok(())
    }

    fn expect_version(&mut self) -> Result<()> {
        let offset = self.offset();
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion { found: v, offset });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos < self.buf.len() {
            return Err(Error::TrailingBytes {
                offset: self.pos as u64,
                extra: (self.buf.len() - self.pos) as u64,
            });
        }
        Ok(())
    }

    /// Reads `count` f64 values, rejecting non-finite and (optionally)
    /// negative entries with the byte offset of the offending value.
    fn f64_block(&mut self, count: usize, reject_negative: bool) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        for index in 0..count {
            let offset = self.offset();
            let v = self.f64()?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    offset,
                    index,
                    value: v,
                });
            }
            if reject_negative && v < 0.0 {
                return Err(Error::NegativeValue {
                    offset,
                    index,
                    value: v,
                });
            }
            out.push(v);
        }
        Ok(out)
    }
}

pub fn save_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    let mut buf =
        Vec::with_capacity(4 + 4 * 4 + 8 * cube.rows() * cube.cols() * cube.bands());
    buf.extend_from_slice(&CUBE_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(cube.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(cube.cols() as u32).to_le_bytes());
    buf.extend_from_slice(&(cube.bands() as u32).to_le_bytes());
    for v in cube.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let buf = fs::read(path)?;
    let mut c = Cursor::new(&buf);
    c.expect_magic(CUBE_MAGIC)?;
    c.expect_version()?;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let bands = c.u32()? as usize;
    let count = rows
        .checked_mul(cols)
        .and_then(|p| p.checked_mul(bands))
        .ok_or_else(|| Error::invalid("cube header dimensions overflow"))?;
    let values = c.f64_block(count, true)?;
    c.finish()?;
    SpectralCube::new(rows, cols, bands, values)
}

pub fn save_measurements(meas: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    let s = meas.snapshots();
    let p = meas.num_pixels();
    let mut buf = Vec::with_capacity(4 + 4 * 4 + 8 + 32 + 8 * s * p);
    buf.extend_from_slice(&MEAS_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(s as u32).to_le_bytes());
    buf.extend_from_slice(&(meas.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(meas.cols() as u32).to_le_bytes());
    buf.extend_from_slice(&meas.noise_sigma().to_le_bytes());
    buf.extend_from_slice(meas.pattern_digest());
    // Row-major: snapshot row s across all pixels, then the next snapshot.
    for row in 0..s {
        for col in 0..p {
            buf.extend_from_slice(&meas.data()[(row, col)].to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let buf = fs::read(path)?;
    let mut c = Cursor::new(&buf);
    c.expect_magic(MEAS_MAGIC)?;
    c.expect_version()?;
    let snapshots = c.u32()? as usize;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let sigma_offset = c.offset();
    let noise_sigma = c.f64()?;
    if !noise_sigma.is_finite() {
        return Err(Error::NonFinite {
            offset: sigma_offset,
            index: 0,
            value: noise_sigma,
        });
    }
    let mut digest = [0u8; 32];
    digest.copy_from_slice(c.take(32)?);
    let count = snapshots
        .checked_mul(rows)
        .and_then(|p| p.checked_mul(cols))
        .ok_or_else(|| Error::invalid("measurement header dimensions overflow"))?;
    let values = c.f64_block(count, false)?;
    c.finish()?;
    let pixels = rows * cols;
    let data = nalgebra::DMatrix::from_row_slice(snapshots, pixels, &values);
    MeasurementSet::new(rows, cols, data, digest, noise_sigma)
}

pub fn save_labels(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for i in 0..map.rows() {
        for j in 0..map.cols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&map.label(i, j).to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut row_len = 0usize;
        for field in line.split(',') {
            let field = field.trim();
            let v: i64 = field.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("expected integer label, found {field:?}"),
            })?;
            if v < 0 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("negative label {v}"),
                });
            }
            labels.push(v as u32);
            row_len += 1;
        }
        match cols {
            None => cols = Some(row_len),
            Some(c) if c != row_len => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("ragged row: {row_len} columns, expected {c}"),
                });
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty labels file".to_string(),
    })?;
    LabelMap::new(rows, cols, labels)
}

#[derive(Serialize, Deserialize)]
struct PatternSidecar {
    lambda1: Vec<usize>,
    lambda2: Vec<usize>,
    bandwidth: usize,
}

/// Sidecar path for a pattern CSV: same stem with a `.json` extension.
pub fn pattern_sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

pub fn save_pattern(pattern: &CodingPattern, csv_path: impl AsRef<Path>) -> Result<()> {
    let csv_path = csv_path.as_ref();
    let mut out = String::new();
    for s in 0..pattern.snapshots() {
        let row = pattern.row(s);
        for (k, &e) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push(if e == 0 { '0' } else { '1' });
        }
        out.push('\n');
    }
    fs::write(csv_path, out)?;
    let sidecar = PatternSidecar {
        lambda1: pattern.windows().iter().map(|w| w.0).collect(),
        lambda2: pattern.windows().iter().map(|w| w.1).collect(),
        bandwidth: pattern.bandwidth(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    fs::write(pattern_sidecar_path(csv_path), json + "\n")?;
    Ok(())
}

pub fn load_pattern(csv_path: impl AsRef<Path>) -> Result<CodingPattern> {
    let csv_path = csv_path.as_ref();
    let text = fs::read_to_string(csv_path)?;
    let mut entries = Vec::new();
    let mut bands = None;
    let mut snapshots = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut row_len = 0usize;
        for field in line.split(',') {
            match field.trim() {
                "0" => entries.push(0u8),
                "1" => entries.push(1u8),
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("expected 0 or 1, found {other:?}"),
                    });
                }
            }
            row_len += 1;
        }
        match bands {
            None => bands = Some(row_len),
            Some(c) if c != row_len => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("ragged row: {row_len} columns, expected {c}"),
                });
            }
            _ => {}
        }
        snapshots += 1;
    }
    let bands = bands.ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty pattern file".to_string(),
    })?;
    let sidecar_path = pattern_sidecar_path(csv_path);
    let sidecar: PatternSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    if sidecar.lambda1.len() != snapshots || sidecar.lambda2.len() != snapshots {
        return Err(Error::invalid(format!(
            "sidecar {} lists {} windows, pattern has {snapshots} snapshots",
            sidecar_path.display(),
            sidecar.lambda1.len()
        )));
    }
    let windows = sidecar
        .lambda1
        .into_iter()
        .zip(sidecar.lambda2)
        .collect::<Vec<_>>();
    CodingPattern::new(snapshots, bands, sidecar.bandwidth, entries, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn cube_single_pixel_roundtrip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let cube = SpectralCube::new(1, 1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        save_cube(&cube, &p).unwrap();
        let back = load_cube(&p).unwrap();
        assert_eq!(back, cube);
        assert_eq!(back.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn cube_file_is_byte_stable() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let q = dir.path().join("c2.scube");
        let values: Vec<f64> = (0..2 * 3 * 4).map(|v| v as f64 * 0.25).collect();
        let cube = SpectralCube::new(2, 3, 4, values).unwrap();
        save_cube(&cube, &p).unwrap();
        save_cube(&load_cube(&p).unwrap(), &q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn cube_header_size_arithmetic() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let cube = SpectralCube::new(2, 2, 2, vec![0.5; 8]).unwrap();
        save_cube(&cube, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // magic + version + 3 dims = 20 bytes header, then 8 f64 values.
        assert_eq!(bytes.len(), 20 + 8 * 8);
        assert_eq!(&bytes[0..4], b"SCUB");
    }

    #[test]
    fn cube_bad_magic_names_offset_zero() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        std::fs::write(&p, b"NOPE\x01\x00\x00\x00").unwrap();
        match load_cube(&p) {
            Err(Error::BadMagic { found, .. }) => assert_eq!(&found, b"NOPE"),
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn cube_truncated_payload_names_offset() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let cube = SpectralCube::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        save_cube(&cube, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        match load_cube(&p) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, 20 + 8),
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn cube_nan_rejected_with_offset() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let cube = SpectralCube::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        save_cube(&cube, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[28..36].copy_from_slice(&f64::NAN.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        match load_cube(&p) {
            Err(Error::NonFinite { offset, index, .. }) => {
                assert_eq!(offset, 28);
                assert_eq!(index, 1);
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn cube_negative_rejected_with_offset() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let cube = SpectralCube::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        save_cube(&cube, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[20..28].copy_from_slice(&(-1.0f64).to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        match load_cube(&p) {
            Err(Error::NegativeValue { offset, index, .. }) => {
                assert_eq!(offset, 20);
                assert_eq!(index, 0);
            }
            other => panic!("expected NegativeValue, got {other:?}"),
        }
    }

    #[test]
    fn cube_trailing_bytes_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.scube");
        let cube = SpectralCube::new(1, 1, 1, vec![1.0]).unwrap();
        save_cube(&cube, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.push(0);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_cube(&p), Err(Error::TrailingBytes { .. })));
    }

    #[test]
    fn paper_scale_cube_dimensions() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("big.scube");
        let cube = SpectralCube::new(70, 70, 200, vec![0.0; 70 * 70 * 200]).unwrap();
        save_cube(&cube, &p).unwrap();
        assert_eq!(
            std::fs::metadata(&p).unwrap().len(),
            20 + 8 * 70 * 70 * 200
        );
        let back = load_cube(&p).unwrap();
        assert_eq!((back.rows(), back.cols(), back.bands()), (70, 70, 200));
    }

    #[test]
    fn labels_roundtrip_and_parse() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "0,1\n2,2\n").unwrap();
        let m = load_labels(&p).unwrap();
        assert_eq!((m.rows(), m.cols(), m.k()), (2, 2, 2));
        assert_eq!(m.labeled_count(), 3);
        let q = dir.path().join("l2.csv");
        save_labels(&m, &q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn labels_all_zero_gives_k_zero() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "0,0\n0,0\n").unwrap();
        let m = load_labels(&p).unwrap();
        assert_eq!(m.k(), 0);
    }

    #[test]
    fn labels_reject_ragged_and_negative() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("l.csv");
        std::fs::write(&p, "0,1\n2\n").unwrap();
        assert!(matches!(load_labels(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "0,-1\n").unwrap();
        assert!(matches!(load_labels(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn pattern_roundtrip_with_sidecar() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("pat.csv");
        let pat = CodingPattern::new(
            2,
            4,
            2,
            vec![1, 1, 0, 0, 0, 0, 1, 0],
            vec![(0, 1), (2, 3)],
        )
        .unwrap();
        save_pattern(&pat, &p).unwrap();
        let back = load_pattern(&p).unwrap();
        assert_eq!(back, pat);
    }

    #[test]
    fn measurement_roundtrip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("m.smeas");
        let data = nalgebra::DMatrix::from_row_slice(2, 4, &[1., -2., 3., 4., 5., 6., 7., 8.]);
        let m = MeasurementSet::new(2, 2, data, [7u8; 32], 0.25).unwrap();
        save_measurements(&m, &p).unwrap();
        let back = load_measurements(&p).unwrap();
        assert_eq!(back, m);
    }
}
