//! 2D-PCA features and device clustering.
//!
//! Each link is described by the projection of its latest channel matrix
//! onto the leading eigenvectors of its auto-covariance across training
//! samples. Links are then paired by the low-complexity heuristic, or by
//! exhaustive search on small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::topology::ChannelRealization;

/// Off-diagonal tolerance of the Jacobi solver, relative to `||S||_F`.
pub const EIGEN_REL_TOL: f64 = 1e-12;

/// Largest `M` accepted by [`exhaustive_cluster`].
pub const EXHAUSTIVE_MAX_LINKS: usize = 12;

/// Auto-covariance `(1/I) sum (H_i - mean)^T (H_i - mean)` of `I` samples.
pub fn compute_acv(samples: &[Matrix]) -> Result<Matrix> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!("ACV needs at least 2 samples, got {}", samples.len())));
    }
    let (rows, cols) = samples[0].shape();
    if samples.iter().any(|s| s.shape() != (rows, cols)) {
        return Err(Error::Shape("ACV samples differ in shape".into()));
    }
    let count = samples.len() as f64;
    let mut mean = Matrix::zeros(rows, cols);
    for s in samples {
        for i in 0..rows {
            for j in 0..cols {
                mean[(i, j)] += s[(i, j)] / count;
            }
        }
    }
    let mut acv = Matrix::zeros(cols, cols);
    for s in samples {
        let c = s.sub(&mean)?;
        for i in 0..rows {
            for a in 0..cols {
                let x = c[(i, a)];
                if x == 0.0 {
                    continue;
                }
                for b in a..cols {
                    acv[(a, b)] += x * c[(i, b)];
                }
            }
        }
    }
    for a in 0..cols {
        for b in a..cols {
            let v = acv[(a, b)] / count;
            acv[(a, b)] = v;
            acv[(b, a)] = v;
        }
    }
    Ok(acv)
}

/// Projection of `latest` onto the top-`d` eigenvectors of the samples' ACV.
pub fn principal_projection(samples: &[Matrix], d: usize) -> Result<Matrix> {
    let acv = compute_acv(samples)?;
    if d == 0 || d > acv.cols() {
        return Err(Error::Shape(format!("d = {d} outside [1, {}]", acv.cols())));
    }
    let eig = symmetric_eigen(&acv, EIGEN_REL_TOL)?;
    samples[samples.len() - 1].matmul(&eig.vectors.leading_columns(d))
}

/// Features of one D2D link: `b1` from the CH-DU channels, `b2` from the CR-DU channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub b1: Matrix,
    pub b2: Matrix,
}

pub fn extract_features(samples_h: &[Matrix], samples_g: &[Matrix], d: usize) -> Result<FeatureMatrix> {
    Ok(FeatureMatrix { b1: principal_projection(samples_h, d)?, b2: principal_projection(samples_g, d)? })
}

/// Per-link `L x N` first-hop and second-hop channel matrices.
pub fn link_channel_matrices(ch: &ChannelRealization, m: usize) -> (Matrix, Matrix) {
    let h = Matrix::from_rows(&ch.h[m]).expect("rectangular channel table");
    let g = Matrix::from_rows(&ch.g[m]).expect("rectangular channel table");
    (h, g)
}

/// 2D-PCA features for every link, projecting the last training sample.
pub fn features_from_training(training: &[ChannelRealization], d: usize) -> Result<Vec<FeatureMatrix>> {
    let links = training.last().ok_or_else(|| Error::InsufficientData("no training samples".into()))?.num_links();
    (0..links)
        .map(|m| {
            let (hs, gs): (Vec<Matrix>, Vec<Matrix>) =
                training.iter().map(|c| link_channel_matrices(c, m)).unzip();
            extract_features(&hs, &gs, d)
        })
        .collect()
}

/// Raw channel matrices of the latest sample used as features (no projection).
pub fn global_csi_features(ch: &ChannelRealization) -> Vec<FeatureMatrix> {
    (0..ch.num_links())
        .map(|m| {
            let (b1, b2) = link_channel_matrices(ch, m);
            FeatureMatrix { b1, b2 }
        })
        .collect()
}

/// `w ||dB2||_F + (1 - w) ||dB1||_F`.
pub fn feature_distance(a: &FeatureMatrix, b: &FeatureMatrix, w: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("weight {w} outside [0, 1]")));
    }
    Ok(w * a.b2.sub(&b.b2)?.frobenius() + (1.0 - w) * a.b1.sub(&b.b1)?.frobenius())
}

pub fn distance_matrix(features: &[FeatureMatrix], w: f64) -> Result<Vec<Vec<f64>>> {
    let m = features.len();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let x = feature_distance(&features[i], &features[j], w)?;
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    Ok(d)
}

/// A partition of the links into pairs, plus one singleton when `M` is odd.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceClusterSet {
    pub pairs: Vec<(usize, usize)>,
    pub singleton: Option<usize>,
}

impl DeviceClusterSet {
    /// Member lists in cluster order: pairs first, then the singleton.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        self.pairs
            .iter()
            .map(|&(a, b)| vec![a, b])
            .chain(self.singleton.map(|s| vec![s]))
            .collect()
    }

    pub fn num_clusters(&self) -> usize {
        self.pairs.len() + usize::from(self.singleton.is_some())
    }

    /// Checks disjointness and coverage of `0..num_links`.
    pub fn is_partition_of(&self, num_links: usize) -> bool {
        let mut seen = vec![false; num_links];
        let members = self.pairs.iter().flat_map(|&(a, b)| [a, b]).chain(self.singleton);
        for m in members {
            if m >= num_links || seen[m] {
                return false;
            }
            seen[m] = true;
        }
        self.pairs.iter().all(|(a, b)| a != b) && seen.iter().all(|&s| s)
    }

    /// Multiset of pairs with each pair sorted, for order-free comparison.
    pub fn canonical(&self) -> (Vec<(usize, usize)>, Option<usize>) {
        let mut p: Vec<_> = self.pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        p.sort_unstable();
        (p, self.singleton)
    }

    /// Largest intra-pair distance (the min-max clustering objective).
    pub fn max_pair_distance(&self, dist: &[Vec<f64>]) -> f64 {
        self.pairs.iter().map(|&(a, b)| dist[a][b]).fold(0.0, f64::max)
    }

    pub fn sum_pair_distance(&self, dist: &[Vec<f64>]) -> f64 {
        self.pairs.iter().map(|&(a, b)| dist[a][b]).sum()
    }
}

/// Best cross-swap of two pairs, if one strictly lowers their summed distance.
fn improving_swap(dist: &[Vec<f64>], p: (usize, usize), q: (usize, usize)) -> Option<((usize, usize), (usize, usize))> {
    let ((a, b), (c, d)) = (p, q);
    let current = dist[a][b] + dist[c][d];
    let cross = dist[a][d] + dist[c][b];
    let parallel = dist[a][c] + dist[b][d];
    if cross < current && cross <= parallel {
        Some(((a, d), (c, b)))
    } else if parallel < current {
        Some(((a, c), (b, d)))
    } else {
        None
    }
}

/// Low-complexity clustering on a precomputed distance matrix.
pub fn cluster_by_distance(dist: &[Vec<f64>]) -> Result<DeviceClusterSet> {
    let m = dist.len();
    if m < 2 {
        return Err(Error::Domain(format!("clustering needs at least 2 links, got {m}")));
    }
    let mut free: Vec<usize> = (0..m).collect();
    let mut pairs = Vec::with_capacity(m / 2);
    while free.len() >= 2 {
        // (cost, link, nearest)
        let mut pick = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
        for &a in &free {
            let mut nearest = (f64::INFINITY, usize::MAX);
            for &b in &free {
                if b != a && dist[a][b] < nearest.0 {
                    nearest = (dist[a][b], b);
                }
            }
            let runner_up = free
                .iter()
                .filter(|&&b| b != a && b != nearest.1)
                .map(|&b| dist[a][b])
                .fold(f64::INFINITY, f64::min);
            let cost = runner_up - nearest.0;
            if cost > pick.0 || pick.1 == usize::MAX {
                pick = (cost, a, nearest.1);
            }
        }
        let (_, a, k) = pick;
        pairs.push((a.min(k), a.max(k)));
        free.retain(|&x| x != a && x != k);
    }
    let singleton = free.pop();

    // Swap pass to a fixed point; each accepted swap strictly lowers the total.
    let mut guard = 0usize;
    loop {
        let mut changed = false;
        for i in 0..pairs.len() {
            for j in i + 1..pairs.len() {
                if let Some((p, q)) = improving_swap(dist, pairs[i], pairs[j]) {
                    pairs[i] = (p.0.min(p.1), p.0.max(p.1));
                    pairs[j] = (q.0.min(q.1), q.0.max(q.1));
                    changed = true;
                }
            }
        }
        guard += 1;
        if !changed || guard > 10_000 {
            break;
        }
    }
    Ok(DeviceClusterSet { pairs, singleton })
}

pub fn cluster_devices(features: &[FeatureMatrix], w: f64) -> Result<DeviceClusterSet> {
    cluster_by_distance(&distance_matrix(features, w)?)
}

/// True when no two pairs admit a cross-swap that strictly lowers their summed distance.
pub fn is_pareto_efficient_by_distance(clusters: &DeviceClusterSet, dist: &[Vec<f64>]) -> bool {
    let p = &clusters.pairs;
    (0..p.len()).all(|i| (i + 1..p.len()).all(|j| improving_swap(dist, p[i], p[j]).is_none()))
}

pub fn is_pareto_efficient(clusters: &DeviceClusterSet, features: &[FeatureMatrix], w: f64) -> Result<bool> {
    Ok(is_pareto_efficient_by_distance(clusters, &distance_matrix(features, w)?))
}

fn enumerate_matchings(
    free: &mut Vec<usize>,
    current: &mut Vec<(usize, usize)>,
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    if free.is_empty() {
        visit(current);
        return;
    }
    let a = free.remove(0);
    for idx in 0..free.len() {
        let b = free.remove(idx);
        current.push((a, b));
        enumerate_matchings(free, current, visit);
        current.pop();
        free.insert(idx, b);
    }
    free.insert(0, a);
}

/// Exhaustive search over all pairings minimizing the largest pair distance;
/// ties go to the smaller summed distance, then to enumeration order.
pub fn exhaustive_by_distance(dist: &[Vec<f64>]) -> Result<DeviceClusterSet> {
    let m = dist.len();
    if m < 2 {
        return Err(Error::Domain(format!("clustering needs at least 2 links, got {m}")));
    }
    if m > EXHAUSTIVE_MAX_LINKS {
        return Err(Error::TooLarge(format!("exhaustive clustering limited to {EXHAUSTIVE_MAX_LINKS} links, got {m}")));
    }
    let singles: Vec<Option<usize>> = if m % 2 == 1 { (0..m).map(Some).collect() } else { vec![None] };
    let mut best: Option<(f64, f64, DeviceClusterSet)> = None;
    for singleton in singles {
        let mut free: Vec<usize> = (0..m).filter(|&x| Some(x) != singleton).collect();
        let mut visit = |pairs: &[(usize, usize)]| {
            let max = pairs.iter().map(|&(a, b)| dist[a][b]).fold(0.0, f64::max);
            let sum: f64 = pairs.iter().map(|&(a, b)| dist[a][b]).sum();
            let better = match &best {
                None => true,
                Some((bm, bs, _)) => max < *bm || (max == *bm && sum < *bs),
            };
            if better {
                best = Some((max, sum, DeviceClusterSet { pairs: pairs.to_vec(), singleton }));
            }
        };
        enumerate_matchings(&mut free, &mut Vec::new(), &mut visit);
    }
    Ok(best.expect("at least one pairing exists").2)
}

pub fn exhaustive_cluster(features: &[FeatureMatrix], w: f64) -> Result<DeviceClusterSet> {
    if features.len() > EXHAUSTIVE_MAX_LINKS {
        return Err(Error::TooLarge(format!(
            "exhaustive clustering limited to {EXHAUSTIVE_MAX_LINKS} links, got {}",
            features.len()
        )));
    }
    exhaustive_by_distance(&distance_matrix(features, w)?)
}
