//! Normalized spectral clustering of an affinity graph.
//!
//! The pipeline is the standard one: symmetric normalized Laplacian,
//! embedding into the eigenvectors of the `k` smallest eigenvalues with
//! row renormalization, then seeded k-means++ with restarts.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams};
use crate::solver::{AffinityMatrix, MAX_PIXELS};

/// Degree regularization for isolated vertices; high compression can leave
/// a pixel with no affinity mass and it still has to land in some cluster.
const DEGREE_EPS: f64 = 1e-12;

/// Lloyd iteration stops when no centroid moves farther than this.
const KMEANS_MOVE_TOL: f64 = 1e-9;
const KMEANS_MAX_ITERS: usize = 300;

/// A hard partition of `P` points into `k` nonempty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    labels: Vec<u32>,
    k: usize,
    inertia: f64,
    seed: u64,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<u32>, k: usize, inertia: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cluster count must be positive"));
        }
        let mut seen = vec![false; k];
        for &l in &labels {
            if l == 0 || l as usize > k {
                return Err(Error::invalid(format!(
                    "cluster label {l} outside 1..={k}"
                )));
            }
            seen[l as usize - 1] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::invalid("every cluster must be nonempty"));
        }
        Ok(Self {
            labels,
            k,
            inertia,
            seed,
        })
    }

    /// Labels in `1..=k`, one per point.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// `L_sym = I - D^{-1/2} W D^{-1/2}`; zero degrees are regularized rather
/// than rejected.
pub fn normalized_laplacian(w: &AffinityMatrix) -> DMatrix<f64> {
    let m = w.matrix();
    let p = m.nrows();
    let inv_sqrt_deg: Vec<f64> = (0..p)
        .map(|i| {
            let d: f64 = m.row(i).sum();
            1.0 / d.max(DEGREE_EPS).sqrt()
        })
        .collect();
    DMatrix::from_fn(p, p, |i, j| {
        let norm = inv_sqrt_deg[i] * m[(i, j)] * inv_sqrt_deg[j];
        if i == j {
            1.0 - norm
        } else {
            -norm
        }
    })
}

/// Rows of the `P x k` spectral embedding: eigenvectors of the `k` smallest
/// eigenvalues of `l_sym`, rows renormalized to unit length (rows of zeros
/// stay zero).
pub fn spectral_embed(l_sym: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let p = l_sym.nrows();
    if l_sym.ncols() != p {
        return Err(Error::invalid("Laplacian must be square"));
    }
    if k == 0 || k > p {
        return Err(Error::invalid(format!("k = {k} must be in 1..={p}")));
    }
    if p > MAX_PIXELS {
        return Err(Error::TooLarge {
            size: p,
            cap: MAX_PIXELS,
        });
    }
    let eig = SymmetricEigen::try_new(l_sym.clone(), 1e-13, 0)
        .ok_or(Error::EigenFailure { size: p })?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });

    let mut embedding = DMatrix::zeros(p, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        embedding.set_column(col, &eig.eigenvectors.column(idx));
    }
    for i in 0..p {
        let norm = embedding.row(i).norm();
        if norm > 0.0 {
            for j in 0..k {
                embedding[(i, j)] /= norm;
            }
        }
    }
    Ok(embedding)
}

/// Seeded k-means++ with restarts over the rows of `points`.
///
/// Deterministic in `seed`; ties in nearest-centroid assignment break
/// toward the lowest centroid index. A cluster left empty after an
/// assignment step is refilled with the point farthest from its own
/// centroid, so the result always has `k` nonempty clusters.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let p = points.nrows();
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if p < k {
        return Err(Error::invalid(format!(
            "cannot split {p} points into {k} clusters"
        )));
    }
    if restarts == 0 {
        return Err(Error::invalid("need at least one restart"));
    }
    let mut rng = stream_rng(seed, streams::KMEANS);
    let mut best: Option<(Vec<u32>, f64)> = None;
    for _ in 0..restarts {
        let (labels, inertia) = lloyd_once(points, k, &mut rng);
        if best.as_ref().map(|(_, bi)| inertia < *bi).unwrap_or(true) {
            best = Some((labels, inertia));
        }
    }
    let (labels, inertia) = best.expect("at least one restart ran");
    ClusterAssignment::new(labels, k, inertia, seed)
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroid: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..points.ncols() {
        let d = points[(i, j)] - centroid[j];
        acc += d * d;
    }
    acc
}

fn lloyd_once(
    points: &DMatrix<f64>,
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<u32>, f64) {
    let p = points.nrows();
    let dim = points.ncols();

    // k-means++ seeding.
    let mut centroids: Vec<DVector<f64>> = Vec::with_capacity(k);
    centroids.push(points.row(rng.random_range(0..p)).transpose());
    let mut dists = vec![0.0f64; p];
    while centroids.len() < k {
        let mut total = 0.0;
        for i in 0..p {
            let d = centroids
                .iter()
                .map(|c| sq_dist(points, i, c))
                .fold(f64::INFINITY, f64::min);
            dists[i] = d;
            total += d;
        }
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = p - 1;
            for (i, &d) in dists.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with some centroid; any index works.
            rng.random_range(0..p)
        };
        centroids.push(points.row(next).transpose());
    }

    let mut labels = vec![0u32; p];
    let mut inertia = 0.0;
    for _ in 0..KMEANS_MAX_ITERS {
        // Assignment; strict `<` keeps the lowest index on ties.
        inertia = 0.0;
        for i in 0..p {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (ci, c) in centroids.iter().enumerate() {
                let d = sq_dist(points, i, c);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            labels[i] = best as u32 + 1;
            inertia += best_d;
        }

        // Refill empty clusters with the worst-fitting point.
        loop {
            let mut counts = vec![0usize; k];
            for &l in &labels {
                counts[l as usize - 1] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let mut far = 0usize;
            let mut far_d = -1.0;
            for i in 0..p {
                let d = sq_dist(points, i, &centroids[labels[i] as usize - 1]);
                if d > far_d && counts[labels[i] as usize - 1] > 1 {
                    far_d = d;
                    far = i;
                }
            }
            labels[far] = empty as u32 + 1;
        }

        // Centroid update.
        let mut sums = vec![DVector::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for i in 0..p {
            let c = labels[i] as usize - 1;
            counts[c] += 1;
            for j in 0..dim {
                sums[c][j] += points[(i, j)];
            }
        }
        let mut max_move = 0.0f64;
        for c in 0..k {
            if counts[c] > 0 {
                let new_c = &sums[c] / counts[c] as f64;
                max_move = max_move.max((&new_c - &centroids[c]).norm());
                centroids[c] = new_c;
            }
        }
        if max_move < KMEANS_MOVE_TOL {
            break;
        }
    }

    // Final inertia against the converged centroids.
    inertia = 0.0;
    for i in 0..p {
        inertia += sq_dist(points, i, &centroids[labels[i] as usize - 1]);
    }
    (labels, inertia)
}

/// Full spectral clustering: Laplacian, embedding, k-means.
pub fn cluster(
    w: &AffinityMatrix,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let l_sym = normalized_laplacian(w);
    let embedding = spectral_embed(&l_sym, k)?;
    kmeans(&embedding, k, seed, restarts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affinity_from(entries: &[(usize, usize, f64)], p: usize) -> AffinityMatrix {
        let mut w = DMatrix::zeros(p, p);
        for &(i, j, v) in entries {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
        AffinityMatrix::new(w).unwrap()
    }

    #[test]
    fn laplacian_of_single_edge() {
        let w = affinity_from(&[(0, 1, 1.0)], 2);
        let l = normalized_laplacian(&w);
        assert!((l[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((l[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((l[(0, 1)] + 1.0).abs() < 1e-12);
        let eig = SymmetricEigen::new(l);
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ev[0].abs() < 1e-12);
        assert!((ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_zero_multiplicity_counts_components() {
        // Three blocks: {0,1}, {2,3}, {4,5}.
        let w = affinity_from(&[(0, 1, 2.0), (2, 3, 0.5), (4, 5, 1.0)], 6);
        let l = normalized_laplacian(&w);
        let eig = SymmetricEigen::new(l);
        let zeros = eig.eigenvalues.iter().filter(|v| v.abs() < 1e-9).count();
        assert_eq!(zeros, 3);
    }

    #[test]
    fn laplacian_eigenvalues_match_jacobi_oracle() {
        // Independent oracle: classical Jacobi rotations.
        fn jacobi_eigenvalues(mut m: DMatrix<f64>) -> Vec<f64> {
            let n = m.nrows();
            for _ in 0..200 {
                let mut off = 0.0;
                let (mut p, mut q) = (0, 1);
                for i in 0..n {
                    for j in i + 1..n {
                        if m[(i, j)].abs() > off {
                            off = m[(i, j)].abs();
                            p = i;
                            q = j;
                        }
                    }
                }
                if off < 1e-14 {
                    break;
                }
                let theta = 0.5 * (m[(q, q)] - m[(p, p)]) / m[(p, q)];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut rot = DMatrix::identity(n, n);
                rot[(p, p)] = c;
                rot[(q, q)] = c;
                rot[(p, q)] = s;
                rot[(q, p)] = -s;
                m = rot.transpose() * m * rot;
            }
            let mut ev: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ev
        }

        let mut rng = stream_rng(4, 0x99);
        let mut w = DMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..i {
                let v: f64 = rng.random_range(0.0..1.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let aff = AffinityMatrix::new(w).unwrap();
        let l = normalized_laplacian(&aff);
        let oracle = jacobi_eigenvalues(l.clone());
        let eig = SymmetricEigen::new(l);
        let mut ours: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ours.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in ours.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-9, "eigenvalue mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn laplacian_spectrum_is_bounded() {
        let mut rng = stream_rng(9, 0x99);
        let mut w = DMatrix::zeros(8, 8);
        for i in 0..8 {
            for j in 0..i {
                let v: f64 = rng.random_range(0.0..2.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let l = normalized_laplacian(&AffinityMatrix::new(w).unwrap());
        assert!((l.clone() - l.transpose()).norm() < 1e-12);
        let eig = SymmetricEigen::new(l);
        for v in eig.eigenvalues.iter() {
            assert!(*v > -1e-9 && *v < 2.0 + 1e-9, "eigenvalue {v} outside [0,2]");
        }
    }

    #[test]
    fn embedding_of_two_blocks_has_two_row_values() {
        let w = affinity_from(&[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0)], 6);
        let l = normalized_laplacian(&w);
        let e = spectral_embed(&l, 2).unwrap();
        for block in [[0usize, 1, 2], [3, 4, 5]] {
            for pair in block.windows(2) {
                let diff = (e.row(pair[0]) - e.row(pair[1])).norm();
                assert!(diff < 1e-6, "within-block rows differ by {diff}");
            }
        }
        let across = (e.row(0) - e.row(3)).norm();
        assert!(across > 1e-3, "blocks should embed apart, got {across}");
    }

    #[test]
    fn embedding_with_k_equal_p_spans_everything() {
        let w = affinity_from(&[(0, 1, 1.0), (1, 2, 0.5), (0, 2, 0.25)], 3);
        let l = normalized_laplacian(&w);
        let e = spectral_embed(&l, 3).unwrap();
        // Rows renormalized to unit norm and the embedding has full rank.
        for i in 0..3 {
            assert!((e.row(i).norm() - 1.0).abs() < 1e-9);
        }
        assert_eq!(e.rank(1e-9), 3);
    }

    #[test]
    fn kmeans_bipartitions_separated_pairs() {
        let pts = DMatrix::from_row_slice(
            4,
            1,
            &[0.0, 0.1, 10.0, 10.1],
        );
        let a = kmeans(&pts, 2, 3, 5).unwrap();
        assert_eq!(a.labels()[0], a.labels()[1]);
        assert_eq!(a.labels()[2], a.labels()[3]);
        assert_ne!(a.labels()[0], a.labels()[2]);
        // Each pair contributes 2 * (half distance)^2 = 0.005.
        assert!((a.inertia() - 0.01).abs() < 1e-9, "inertia {}", a.inertia());
    }

    #[test]
    fn kmeans_with_k_equal_p_is_exact() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 5.0, 0.0, 0.0, 5.0]);
        let a = kmeans(&pts, 3, 1, 3).unwrap();
        assert_eq!(a.inertia(), 0.0);
        let mut sorted = a.labels().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3]);
    }

    #[test]
    fn kmeans_recovers_three_tight_gaussians() {
        use rand_distr::{Distribution, Normal};
        let mut rng = stream_rng(12, 0x55);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let centers = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut rows = Vec::new();
        for c in &centers {
            for _ in 0..10 {
                rows.push(c[0] + normal.sample(&mut rng));
                rows.push(c[1] + normal.sample(&mut rng));
            }
        }
        let pts = DMatrix::from_row_slice(30, 2, &rows);
        let a = kmeans(&pts, 3, 0, 10).unwrap();
        // Oracle: many independent restarts must agree on the partition.
        for seed in 1..=20u64 {
            let b = kmeans(&pts, 3, seed, 10).unwrap();
            let mut mapping = std::collections::HashMap::new();
            for (x, y) in a.labels().iter().zip(b.labels().iter()) {
                let prev = mapping.insert(*x, *y);
                assert!(prev.is_none() || prev == Some(*y), "partitions disagree");
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic_in_seed() {
        let pts = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let a = kmeans(&pts, 4, 9, 8).unwrap();
        let b = kmeans(&pts, 4, 9, 8).unwrap();
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.inertia(), b.inertia());
    }

    #[test]
    fn kmeans_handles_duplicate_points() {
        let pts = DMatrix::from_element(5, 2, 1.0);
        let a = kmeans(&pts, 2, 0, 3).unwrap();
        let mut counts = [0usize; 2];
        for &l in a.labels() {
            counts[l as usize - 1] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "clusters must be nonempty");
    }

    #[test]
    fn cluster_recovers_perfect_blocks() {
        let w = affinity_from(&[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0)], 5);
        let a = cluster(&w, 2, 0, 5).unwrap();
        assert_eq!(a.labels()[0], a.labels()[1]);
        assert_eq!(a.labels()[1], a.labels()[2]);
        assert_eq!(a.labels()[3], a.labels()[4]);
        assert_ne!(a.labels()[0], a.labels()[3]);
    }

    #[test]
    fn cluster_is_equivariant_under_permutation() {
        let w = affinity_from(&[(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0)], 6);
        let a = cluster(&w, 2, 7, 5).unwrap();

        // Reverse the pixel order.
        let p = 6;
        let m = w.matrix();
        let wp = DMatrix::from_fn(p, p, |i, j| m[(p - 1 - i, p - 1 - j)]);
        let b = cluster(&AffinityMatrix::new(wp).unwrap(), 2, 7, 5).unwrap();

        // Same partition up to label renaming.
        let mut mapping = std::collections::HashMap::new();
        for i in 0..p {
            let (x, y) = (a.labels()[i], b.labels()[p - 1 - i]);
            let prev = mapping.insert(x, y);
            assert!(prev.is_none() || prev == Some(y), "partitions disagree");
        }
    }

    #[test]
    fn assignment_rejects_empty_cluster() {
        assert!(ClusterAssignment::new(vec![1, 1, 1], 2, 0.0, 0).is_err());
        assert!(ClusterAssignment::new(vec![1, 2, 3], 2, 0.0, 0).is_err());
        assert!(ClusterAssignment::new(vec![1, 2, 0], 2, 0.0, 0).is_err());
    }
}
