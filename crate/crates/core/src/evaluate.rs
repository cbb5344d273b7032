//! Scoring clustered output against ground truth.
//!
//! Cluster indices are arbitrary, so predictions are first aligned to the
//! ground-truth classes by an optimal assignment on the k x k contingency
//! table; the confusion matrix and the overall/average accuracy and kappa
//! statistics are then computed over the labeled pixels only.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterAssignment;
use crate::cube::LabelMap;
use crate::error::{Error, Result};

/// `K x K` contingency counts; rows are ground truth, columns are (aligned)
/// predictions. Only labeled pixels contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize, counts: Vec<u64>) -> Result<Self> {
        if k == 0 || counts.len() != k * k {
            return Err(Error::invalid("confusion matrix must be k x k with k > 0"));
        }
        Ok(Self { k, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.k).map(|p| self.count(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.k).map(|t| self.count(t, pred)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.k)
            .map(|t| (0..self.k).map(|p| self.count(t, p)).collect())
            .collect()
    }
}

/// Clustering quality metrics plus per-stage wall-clock timings, in the
/// shape emitted as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Overall accuracy, percent.
    pub oa: f64,
    /// Average (per-class recall) accuracy, percent.
    pub aa: f64,
    /// Cohen's kappa, percent.
    pub kappa: f64,
    /// Per-class recall, percent, keyed by class label.
    pub per_class: BTreeMap<String, f64>,
    /// Confusion counts, rows = truth.
    pub confusion: Vec<Vec<u64>>,
    /// Wall-clock milliseconds per pipeline stage.
    pub time_ms: BTreeMap<String, f64>,
}

/// Optimal assignment between predicted clusters and truth classes.
///
/// Returns `perm` with `perm[c]` the truth class (0-based) assigned to
/// predicted cluster `c` (0-based), maximizing total agreement.
pub fn align_labels(pred: &ClusterAssignment, truth: &LabelMap) -> Result<Vec<usize>> {
    let k = pred.k();
    if truth.k() as usize != k {
        return Err(Error::invalid(format!(
            "prediction has {k} clusters but ground truth has {} classes",
            truth.k()
        )));
    }
    if pred.labels().len() != truth.labels().len() {
        return Err(Error::invalid("prediction and truth cover different pixel counts"));
    }
    let mut contingency = vec![0u64; k * k];
    let mut labeled = 0u64;
    for (&p, &t) in pred.labels().iter().zip(truth.labels().iter()) {
        if t != 0 {
            contingency[(p as usize - 1) * k + (t as usize - 1)] += 1;
            labeled += 1;
        }
    }
    if labeled == 0 {
        return Err(Error::invalid("ground truth has no labeled pixels"));
    }
    Ok(max_assignment(k, &contingency))
}

/// Maximum-weight perfect assignment on a dense `k x k` benefit matrix
/// (row-major), via the O(k^3) shortest-augmenting-path method with
/// potentials. Returns `assign` with `assign[row] = col`.
fn max_assignment(k: usize, benefit: &[u64]) -> Vec<usize> {
    // Convert to costs for minimization.
    let top = *benefit.iter().max().expect("nonempty") as f64;
    let cost = |r: usize, c: usize| top - benefit[r * k + c] as f64;

    // 1-based arrays per the standard potentials formulation.
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; k + 1];
    let mut v = vec![0.0f64; k + 1];
    let mut way = vec![0usize; k + 1];
    let mut match_col = vec![0usize; k + 1]; // matched row of each column

    for row in 1..=k {
        match_col[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = match_col[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[match_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if match_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            match_col[j0] = match_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; k];
    for j in 1..=k {
        if match_col[j] != 0 {
            assign[match_col[j] - 1] = j - 1;
        }
    }
    assign
}

/// Confusion matrix of an aligned prediction over the labeled pixels.
pub fn confusion_matrix(
    pred: &ClusterAssignment,
    perm: &[usize],
    truth: &LabelMap,
) -> Result<ConfusionMatrix> {
    let k = pred.k();
    if perm.len() != k {
        return Err(Error::invalid("permutation length must equal k"));
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &t) in pred.labels().iter().zip(truth.labels().iter()) {
        if t != 0 {
            let aligned = perm[p as usize - 1];
            counts[(t as usize - 1) * k + aligned] += 1;
        }
    }
    ConfusionMatrix::new(k, counts)
}

/// OA, AA and kappa (all in percent) from a confusion matrix. Truth classes
/// with no evaluated samples are excluded from the AA mean.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix has no samples"));
    }
    let totalf = total as f64;
    let k = cm.k();

    let trace: u64 = (0..k).map(|i| cm.count(i, i)).sum();
    let oa = 100.0 * trace as f64 / totalf;

    let mut per_class = BTreeMap::new();
    let mut recall_sum = 0.0;
    let mut nonempty = 0usize;
    for i in 0..k {
        let row = cm.row_sum(i);
        if row > 0 {
            let recall = 100.0 * cm.count(i, i) as f64 / row as f64;
            per_class.insert((i + 1).to_string(), recall);
            recall_sum += recall;
            nonempty += 1;
        }
    }
    let aa = recall_sum / nonempty as f64;

    let p_o = trace as f64 / totalf;
    let p_e: f64 = (0..k)
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (totalf * totalf);
    let kappa = if (1.0 - p_e).abs() < f64::EPSILON {
        100.0
    } else {
        100.0 * (p_o - p_e) / (1.0 - p_e)
    };

    Ok(Metrics {
        oa,
        aa,
        kappa,
        per_class,
        confusion: cm.to_rows(),
        time_ms: BTreeMap::new(),
    })
}

/// Percentage by which `time_a` undercuts the baseline `time_b`.
pub fn time_reduction_pct(time_a: f64, time_b: f64) -> f64 {
    if time_b == 0.0 {
        return 0.0;
    }
    100.0 * (time_b - time_a) / time_b
}

/// Default rendering palette: background plus 16 distinguishable colors.
pub const PALETTE: [[u8; 3]; 17] = [
    [0, 0, 0],
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
];

/// Binary PGM (P5) with labels scaled onto 0..255; unlabeled pixels black.
pub fn render_map_pgm(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let k = map.k().max(1);
    let mut out = Vec::with_capacity(32 + map.rows() * map.cols());
    write!(out, "P5\n{} {}\n255\n", map.cols(), map.rows())?;
    for &l in map.labels() {
        let v = (l as f64 * 255.0 / k as f64).round().clamp(0.0, 255.0) as u8;
        out.push(v);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Binary PPM (P6) using `palette` cyclically; unlabeled pixels use
/// `palette[0]`.
pub fn render_map_ppm(map: &LabelMap, palette: &[[u8; 3]], path: impl AsRef<Path>) -> Result<()> {
    if palette.is_empty() {
        return Err(Error::invalid("palette must not be empty"));
    }
    let mut out = Vec::with_capacity(32 + 3 * map.rows() * map.cols());
    write!(out, "P6\n{} {}\n255\n", map.cols(), map.rows())?;
    for &l in map.labels() {
        let color = if l == 0 {
            palette[0]
        } else {
            palette[1 + (l as usize - 1) % (palette.len() - 1).max(1)]
        };
        out.extend_from_slice(&color);
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn assignment(labels: Vec<u32>, k: usize) -> ClusterAssignment {
        ClusterAssignment::new(labels, k, 0.0, 0).unwrap()
    }

    #[test]
    fn align_identity_prediction() {
        let truth = LabelMap::new(2, 2, vec![1, 1, 2, 2]).unwrap();
        let pred = assignment(vec![1, 1, 2, 2], 2);
        let perm = align_labels(&pred, &truth).unwrap();
        assert_eq!(perm, vec![0, 1]);
        let cm = confusion_matrix(&pred, &perm, &truth).unwrap();
        assert_eq!(compute_metrics(&cm).unwrap().oa, 100.0);
    }

    #[test]
    fn align_swapped_prediction() {
        let truth = LabelMap::new(2, 2, vec![1, 1, 2, 2]).unwrap();
        let pred = assignment(vec![2, 2, 1, 1], 2);
        let perm = align_labels(&pred, &truth).unwrap();
        assert_eq!(perm, vec![1, 0]);
    }

    #[test]
    fn align_rejects_k_mismatch() {
        let truth = LabelMap::new(1, 3, vec![1, 2, 3]).unwrap();
        let pred = assignment(vec![1, 2, 1], 2);
        assert!(align_labels(&pred, &truth).is_err());
    }

    /// Exhaustive-permutation oracle for the assignment.
    fn brute_force_best(k: usize, contingency: &[u64]) -> u64 {
        fn perms(k: usize) -> Vec<Vec<usize>> {
            if k == 1 {
                return vec![vec![0]];
            }
            let mut out = Vec::new();
            for p in perms(k - 1) {
                for pos in 0..k {
                    let mut q: Vec<usize> = p.iter().map(|&x| x).collect();
                    q.insert(pos, k - 1);
                    out.push(q);
                }
            }
            out
        }
        perms(k)
            .into_iter()
            .map(|p| {
                (0..k)
                    .map(|c| contingency[c * k + p[c]])
                    .sum::<u64>()
            })
            .max()
            .unwrap()
    }

    #[test]
    fn assignment_matches_brute_force_on_random_tables() {
        let mut rng = crate::rng::stream_rng(2, 0x1234);
        for k in 1..=5usize {
            for _ in 0..40 {
                let table: Vec<u64> = (0..k * k).map(|_| rng.random_range(0..30u64)).collect();
                let assign = max_assignment(k, &table);
                let score: u64 = (0..k).map(|r| table[r * k + assign[r]]).sum();
                assert_eq!(score, brute_force_best(k, &table), "table {table:?}");
                // assign must be a permutation.
                let mut seen = vec![false; k];
                for &c in &assign {
                    assert!(!seen[c]);
                    seen[c] = true;
                }
            }
        }
    }

    #[test]
    fn metrics_diagonal_is_perfect() {
        let cm = ConfusionMatrix::new(3, vec![5, 0, 0, 0, 7, 0, 0, 0, 2]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.oa, 100.0);
        assert_eq!(m.aa, 100.0);
        assert_eq!(m.kappa, 100.0);
    }

    #[test]
    fn metrics_match_hand_derivation() {
        // [[25, 5], [10, 60]]: OA = 85, AA = (25/30 + 60/70)/2 * 100,
        // p_e = (30*35 + 70*65)/100^2 = 0.56, kappa = 29/44 * 100.
        let cm = ConfusionMatrix::new(2, vec![25, 5, 10, 60]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert!((m.oa - 85.0).abs() < 1e-10);
        let aa = (25.0 / 30.0 + 60.0 / 70.0) / 2.0 * 100.0;
        assert!((m.aa - aa).abs() < 1e-10);
        assert!((aa - 84.5238095238).abs() < 1e-6);
        let kappa = 100.0 * (0.85 - 0.56) / (1.0 - 0.56);
        assert!((m.kappa - kappa).abs() < 1e-10);
        assert!((kappa - 65.9090909091).abs() < 1e-6);
    }

    #[test]
    fn metrics_skip_empty_truth_rows_in_aa() {
        let cm = ConfusionMatrix::new(3, vec![4, 0, 0, 0, 0, 0, 0, 0, 4]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.aa, 100.0);
        assert!(!m.per_class.contains_key("2"));
    }

    #[test]
    fn metrics_reject_empty_matrix() {
        let cm = ConfusionMatrix::new(2, vec![0, 0, 0, 0]).unwrap();
        assert!(compute_metrics(&cm).is_err());
    }

    #[test]
    fn kappa_not_above_oa_on_random_tables() {
        let mut rng = crate::rng::stream_rng(8, 0x1234);
        for _ in 0..100 {
            let k = rng.random_range(2..=5usize);
            let table: Vec<u64> = (0..k * k).map(|_| rng.random_range(0..50u64)).collect();
            if table.iter().all(|&v| v == 0) {
                continue;
            }
            let cm = ConfusionMatrix::new(k, table).unwrap();
            let m = compute_metrics(&cm).unwrap();
            assert!(
                m.kappa <= m.oa + 1e-9,
                "kappa {} > oa {}",
                m.kappa,
                m.oa
            );
        }
    }

    #[test]
    fn time_reduction_matches_reported_values() {
        let r = time_reduction_pct(46.40, 283.88);
        assert!((r - 83.65).abs() < 5e-3, "reduction {r}");
        let r2 = time_reduction_pct(30.30, 179.13);
        assert!((r2 - 83.08).abs() < 5e-3, "reduction {r2}");
        assert_eq!(time_reduction_pct(5.0, 5.0), 0.0);
    }

    #[test]
    fn pgm_has_expected_gray_levels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let map = LabelMap::new(2, 2, vec![1, 2, 2, 1]).unwrap();
        render_map_pgm(&map, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        let pixels = &bytes[bytes.len() - 4..];
        let mut distinct: Vec<u8> = pixels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn pgm_all_unlabeled_is_black() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let map = LabelMap::new(2, 3, vec![0; 6]).unwrap();
        render_map_pgm(&map, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes[bytes.len() - 6..].iter().all(|&b| b == 0));
    }

    #[test]
    fn ppm_color_count_is_bounded_by_classes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ppm");
        let labels: Vec<u32> = (0..70 * 70).map(|i| (i % 5) as u32).collect();
        let map = LabelMap::new(70, 70, labels).unwrap();
        render_map_ppm(&map, &PALETTE, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header_len = b"P6\n70 70\n255\n".len();
        let mut colors: Vec<[u8; 3]> = bytes[header_len..]
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        colors.sort_unstable();
        colors.dedup();
        assert!(colors.len() <= 5, "found {} colors", colors.len());
    }
}
