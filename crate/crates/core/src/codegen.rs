//! Coding pattern generation and scoring.
//!
//! Two generators share the same constraint set (one contiguous band window
//! of width `bandwidth` per snapshot, Bernoulli(1/2) entries inside it, no
//! zero or duplicate rows):
//!
//! * [`random_pattern`] places every window uniformly at random — the
//!   traditional randomly coded baseline.
//! * [`gp_pattern`] builds the pattern greedily, one snapshot at a time. Each
//!   new window is drawn uniformly from the starts with minimal coverage by
//!   the already-committed snapshots, which pushes windows toward
//!   unsampled spectral regions; the in-window code is then refined by
//!   stochastically resampling entries at positions of minimal adjacent-band
//!   overlap score, spreading the code within the window.
//!
//! [`score_pattern`] evaluates the two-term correlation objective both
//! generators are judged by: squared inner products of adjacent band columns
//! plus squared inner products of distinct snapshot rows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pattern::CodingPattern;
use crate::rng::{stream_rng, streams};

/// Bounded rejection resampling limit for invalid (zero/duplicate) rows.
const MAX_ROW_RETRIES: usize = 64;

/// Correlation scores of a coding pattern, lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternScore {
    /// Sum over adjacent band pairs `(k, k+1)` of the squared inner product
    /// of the two band columns.
    pub band_correlation: f64,
    /// Sum over ordered snapshot pairs `s != s'` of the squared inner
    /// product of the two snapshot rows.
    pub snapshot_correlation: f64,
    /// Smallest per-band column sum.
    pub coverage_min: u32,
    /// Largest per-band column sum.
    pub coverage_max: u32,
}

impl PatternScore {
    /// The combined objective value.
    pub fn total(&self) -> f64 {
        self.band_correlation + self.snapshot_correlation
    }

    /// Spread between the most- and least-sampled band.
    pub fn coverage_spread(&self) -> u32 {
        self.coverage_max - self.coverage_min
    }
}

pub fn score_pattern(pattern: &CodingPattern) -> PatternScore {
    score_entries(pattern.snapshots(), pattern.bands(), pattern.entries())
}

pub(crate) fn score_entries(snapshots: usize, bands: usize, entries: &[u8]) -> PatternScore {
    let at = |s: usize, k: usize| entries[s * bands + k] as u64;

    let mut band = 0.0;
    for k in 0..bands.saturating_sub(1) {
        let dot: u64 = (0..snapshots).map(|s| at(s, k) * at(s, k + 1)).sum();
        band += (dot * dot) as f64;
    }

    let mut snap = 0.0;
    for s in 0..snapshots {
        for t in 0..snapshots {
            if s == t {
                continue;
            }
            let dot: u64 = (0..bands).map(|k| at(s, k) * at(t, k)).sum();
            snap += (dot * dot) as f64;
        }
    }

    let mut cov_min = u32::MAX;
    let mut cov_max = 0u32;
    for k in 0..bands {
        let c: u32 = (0..snapshots).map(|s| at(s, k) as u32).sum();
        cov_min = cov_min.min(c);
        cov_max = cov_max.max(c);
    }

    PatternScore {
        band_correlation: band,
        snapshot_correlation: snap,
        coverage_min: cov_min,
        coverage_max: cov_max,
    }
}

/// Incremental state of the greedy pursuit: the committed snapshot rows and
/// the scores derived from them.
#[derive(Debug, Clone)]
pub struct GpState {
    bands: usize,
    bandwidth: usize,
    rows: Vec<Vec<u8>>,
}

impl GpState {
    pub fn new(bands: usize, bandwidth: usize) -> Self {
        Self {
            bands,
            bandwidth,
            rows: Vec::new(),
        }
    }

    pub fn committed(&self) -> usize {
        self.rows.len()
    }

    pub fn push_row(&mut self, row: Vec<u8>) {
        debug_assert_eq!(row.len(), self.bands);
        self.rows.push(row);
    }

    /// Coverage score of every window start: the number of committed ones
    /// inside the window `[start, start + bandwidth - 1]`. Length
    /// `L - bandwidth + 1`.
    pub fn coverage_scores(&self) -> Vec<u32> {
        let starts = self.bands - self.bandwidth + 1;
        (0..starts)
            .map(|k0| {
                self.rows
                    .iter()
                    .map(|r| {
                        r[k0..k0 + self.bandwidth]
                            .iter()
                            .map(|&e| e as u32)
                            .sum::<u32>()
                    })
                    .sum()
            })
            .collect()
    }

    /// Adjacent-band product score for each in-window band of a candidate
    /// row: at band `k`, the number of snapshots (committed plus the
    /// candidate) with ones at both `k - 1` and `k`. Length `bandwidth`.
    pub fn adjacency_scores(&self, candidate: &[u8], window: (usize, usize)) -> Vec<u32> {
        let (lo, hi) = window;
        (lo..=hi)
            .map(|k| {
                let mut score = 0u32;
                if k > 0 {
                    for r in self.rows.iter() {
                        score += (r[k - 1] * r[k]) as u32;
                    }
                    score += (candidate[k - 1] * candidate[k]) as u32;
                }
                score
            })
            .collect()
    }

    /// Indices attaining the minimum of `scores`; uniform draws come only
    /// from this set.
    pub fn argmin(scores: &[u32]) -> Vec<usize> {
        let min = scores.iter().copied().min().expect("nonempty scores");
        scores
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == min)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-snapshot selection record of a greedy pursuit run.
#[derive(Debug, Clone)]
pub struct GpTrace {
    /// Chosen window start of each snapshot.
    pub window_starts: Vec<usize>,
    /// Coverage scores at the moment each snapshot's window was drawn.
    pub coverage_before: Vec<Vec<u32>>,
    /// Minimum coverage score after each snapshot was committed.
    pub min_coverage_after: Vec<u32>,
}

fn validate_dims(snapshots: usize, bands: usize, bandwidth: usize) -> Result<()> {
    if snapshots == 0 {
        return Err(Error::invalid("need at least one snapshot"));
    }
    if bandwidth == 0 || bandwidth > bands {
        return Err(Error::invalid(format!(
            "bandwidth {bandwidth} must be in 1..={bands}"
        )));
    }
    Ok(())
}

fn draw_window_row(
    rng: &mut ChaCha8Rng,
    bands: usize,
    bandwidth: usize,
    start: usize,
) -> Vec<u8> {
    let mut row = vec![0u8; bands];
    for e in row.iter_mut().skip(start).take(bandwidth) {
        *e = rng.random_bool(0.5) as u8;
    }
    row
}

fn row_ok(row: &[u8], previous: &[Vec<u8>]) -> bool {
    row.iter().any(|&e| e != 0) && previous.iter().all(|p| p != row)
}

/// Uniform window placement with Bernoulli(1/2) in-window entries.
pub fn random_pattern(
    seed: u64,
    snapshots: usize,
    bands: usize,
    bandwidth: usize,
) -> Result<CodingPattern> {
    validate_dims(snapshots, bands, bandwidth)?;
    let mut rng = stream_rng(seed, streams::PATTERN_RANDOM);
    let mut rows: Vec<Vec<u8>> = Vec::with_capacity(snapshots);
    let mut windows = Vec::with_capacity(snapshots);
    for s in 0..snapshots {
        let mut committed = None;
        for _ in 0..MAX_ROW_RETRIES {
            let start = rng.random_range(0..=bands - bandwidth);
            let row = draw_window_row(&mut rng, bands, bandwidth, start);
            if row_ok(&row, &rows) {
                committed = Some((start, row));
                break;
            }
        }
        let (start, row) = committed.ok_or(Error::RetriesExhausted {
            what: format!("drawing a valid random row for snapshot {s}"),
            limit: MAX_ROW_RETRIES,
        })?;
        windows.push((start, start + bandwidth - 1));
        rows.push(row);
    }
    CodingPattern::new(snapshots, bands, bandwidth, rows.concat(), windows)
}

/// Greedy-pursuit pattern; see the module docs for the construction.
pub fn gp_pattern(
    seed: u64,
    snapshots: usize,
    bands: usize,
    bandwidth: usize,
) -> Result<CodingPattern> {
    gp_pattern_traced(seed, snapshots, bands, bandwidth).map(|(p, _)| p)
}

/// [`gp_pattern`] plus the per-snapshot selection trace.
pub fn gp_pattern_traced(
    seed: u64,
    snapshots: usize,
    bands: usize,
    bandwidth: usize,
) -> Result<(CodingPattern, GpTrace)> {
    validate_dims(snapshots, bands, bandwidth)?;
    let mut rng = stream_rng(seed, streams::PATTERN_GP);
    let mut state = GpState::new(bands, bandwidth);
    let mut windows = Vec::with_capacity(snapshots);
    let mut trace = GpTrace {
        window_starts: Vec::with_capacity(snapshots),
        coverage_before: Vec::with_capacity(snapshots),
        min_coverage_after: Vec::with_capacity(snapshots),
    };
    let refinements = bandwidth / 2;

    for s in 0..snapshots {
        let coverage = state.coverage_scores();
        let candidates = GpState::argmin(&coverage);
        let mut committed = None;
        for _ in 0..MAX_ROW_RETRIES {
            // Snapshot 0 sees all-zero coverage, so the argmin set is every
            // start and this draw matches the random baseline's placement.
            let start = candidates[rng.random_range(0..candidates.len())];
            let window = (start, start + bandwidth - 1);
            let mut row = draw_window_row(&mut rng, bands, bandwidth, start);
            if s > 0 {
                for _ in 0..refinements {
                    let adj = state.adjacency_scores(&row, window);
                    let mins = GpState::argmin(&adj);
                    let pick = mins[rng.random_range(0..mins.len())];
                    row[window.0 + pick] = rng.random_bool(0.5) as u8;
                }
            }
            if row_ok(&row, &state.rows) {
                committed = Some((start, row));
                break;
            }
        }
        let (start, row) = committed.ok_or(Error::RetriesExhausted {
            what: format!("drawing a valid greedy-pursuit row for snapshot {s}"),
            limit: MAX_ROW_RETRIES,
        })?;
        windows.push((start, start + bandwidth - 1));
        state.push_row(row);
        trace.window_starts.push(start);
        trace.coverage_before.push(coverage);
        trace
            .min_coverage_after
            .push(*state.coverage_scores().iter().min().expect("nonempty"));
    }

    let entries = state.rows.concat();
    let pattern = CodingPattern::new(snapshots, bands, bandwidth, entries, windows)?;
    Ok((pattern, trace))
}
