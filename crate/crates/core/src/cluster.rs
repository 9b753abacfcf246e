//! K-Means with k-means++ seeding, elbow-based selection of the cluster
//! count, and the three cluster-validity indices used to judge a
//! partition: silhouette (higher is better), Calinski-Harabasz (higher is
//! better) and Davies-Bouldin (lower is better).

use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{euclidean_distance, pairwise_sq_distances, squared_distance, Matrix, SeedStream};

/// Lloyd iterations cap per restart.
const MAX_LLOYD_ITERATIONS: usize = 300;

/// Calibrated cluster model: the chosen centroids plus the distance
/// statistics needed to judge production sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k_prime: usize,
    pub centroids: Matrix,
    /// `(percentile, nearest-centroid distance)` ladder over the
    /// calibration set, non-decreasing in both components.
    pub distance_percentiles: Vec<(f64, f64)>,
    /// Distance above which a session counts as emerging.
    pub threshold: f64,
    pub threshold_percentile: f64,
}

impl ClusterModel {
    /// Index and distance of the nearest centroid.
    pub fn nearest(&self, embedding: &[f64]) -> (usize, f64) {
        nearest_centroid(&self.centroids, embedding)
    }
}

pub fn nearest_centroid(centroids: &Matrix, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centroids.rows() {
        let d2 = squared_distance(centroids.row(j), point);
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    (best.0, best.1.sqrt())
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

/// Lloyd's algorithm from k-means++ seeds; the best of `restarts` runs by
/// inertia wins. Deterministic for a given seed.
pub fn kmeans_fit(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    let n = points.rows();
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} points into {k} clusters"
        )));
    }
    let restarts = restarts.max(1);
    let mut best: Option<KMeansFit> = None;
    for restart in 0..restarts {
        let mut rng = SeedStream::substream(seed, 0x4B00 + restart as u64);
        let fit = lloyd(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &Matrix, k: usize, rng: &mut SeedStream) -> KMeansFit {
    let n = points.rows();
    let d = points.cols();
    let mut centroids = kmeanspp_init(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut inertia_history = Vec::new();
    let mut inertia = f64::INFINITY;

    for _ in 0..MAX_LLOYD_ITERATIONS {
        // Assignment step.
        let d2 = pairwise_sq_distances(points, &centroids);
        let mut changed = false;
        inertia = 0.0;
        for i in 0..n {
            let row = d2.row(i);
            let mut best = (0, row[0]);
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v < best.1 {
                    best = (j, v);
                }
            }
            inertia += best.1;
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }
        inertia_history.push(inertia);
        if !changed {
            break;
        }

        // Update step.
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &label) in labels.iter().enumerate() {
            counts[label] += 1;
            for (s, &v) in sums.row_mut(label).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Re-seed an emptied cluster at the point farthest from its
                // assigned centroid.
                let mut far = (0, -1.0);
                for i in 0..n {
                    let dist = squared_distance(points.row(i), centroids.row(labels[i]));
                    if dist > far.1 {
                        far = (i, dist);
                    }
                }
                centroids.row_mut(j).copy_from_slice(points.row(far.0));
            } else {
                let inv = 1.0 / counts[j] as f64;
                for (c, &s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *c = s * inv;
                }
            }
        }
    }

    KMeansFit {
        labels,
        centroids,
        inertia,
        inertia_history,
    }
}

/// k-means++: first seed uniform, the rest sampled proportionally to the
/// squared distance from the nearest already-chosen seed.
fn kmeanspp_init(points: &Matrix, k: usize, rng: &mut SeedStream) -> Matrix {
    let n = points.rows();
    let d = points.cols();
    let mut centroids = Matrix::zeros(k, d);
    let first = rng.uniform_usize(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(points.row(i), points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = min_d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.uniform(0.0, total);
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                acc += w;
                if target < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.uniform_usize(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(idx));
        for (i, slot) in min_d2.iter_mut().enumerate() {
            let d2 = squared_distance(points.row(i), centroids.row(c));
            *slot = slot.min(d2);
        }
    }
    centroids
}

/// Number of clusters named by a labeling and per-cluster member lists.
fn cluster_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members.retain(|m| !m.is_empty());
    members
}

fn require_two_clusters(members: &[Vec<usize>], what: &str) -> Result<()> {
    if members.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "{what} needs at least two non-empty clusters"
        )));
    }
    Ok(())
}

/// Mean silhouette: per point, `(b - a) / max(a, b)` where `a` is the mean
/// distance to its own cluster and `b` the smallest mean distance to
/// another cluster. Singleton clusters contribute 0.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(points, labels)?;
    let members = cluster_members(labels);
    require_two_clusters(&members, "silhouette")?;
    let n = points.rows();
    // Mean distance from every point to every cluster.
    let mut mean_dist = vec![vec![0.0; members.len()]; n];
    for (c, cluster) in members.iter().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for &j in cluster {
                acc += euclidean_distance(points.row(i), points.row(j));
            }
            mean_dist[i][c] = acc;
        }
    }
    // Map original label -> compacted cluster index.
    let mut label_to_cluster = std::collections::BTreeMap::new();
    for (c, cluster) in members.iter().enumerate() {
        label_to_cluster.insert(labels[cluster[0]], c);
    }
    let mut total = 0.0;
    for i in 0..n {
        let c = label_to_cluster[&labels[i]];
        let own_size = members[c].len();
        if own_size <= 1 {
            continue; // singleton contributes 0
        }
        let a = mean_dist[i][c] / (own_size - 1) as f64;
        let mut b = f64::INFINITY;
        for (other, cluster) in members.iter().enumerate() {
            if other != c {
                b = b.min(mean_dist[i][other] / cluster.len() as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Calinski-Harabasz: `(tr B / (k - 1)) / (tr W / (n - k))`. Degenerate
/// zero within-cluster dispersion yields `f64::INFINITY`.
pub fn calinski_harabasz(points: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(points, labels)?;
    let members = cluster_members(labels);
    require_two_clusters(&members, "calinski-harabasz")?;
    let (n, d) = (points.rows(), points.cols());
    let k = members.len();
    let mut grand = vec![0.0; d];
    for i in 0..n {
        for (g, &v) in grand.iter_mut().zip(points.row(i)) {
            *g += v;
        }
    }
    grand.iter_mut().for_each(|g| *g /= n as f64);

    let mut within = 0.0;
    let mut between = 0.0;
    for cluster in &members {
        let mut centroid = vec![0.0; d];
        for &i in cluster {
            for (c, &v) in centroid.iter_mut().zip(points.row(i)) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= cluster.len() as f64);
        for &i in cluster {
            within += squared_distance(points.row(i), &centroid);
        }
        between += cluster.len() as f64 * squared_distance(&centroid, &grand);
    }
    if within <= 0.0 || n == k {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

/// Davies-Bouldin: mean over clusters of `max_{j != i} (S_i + S_j) / M_ij`
/// where `S` is the mean distance to the cluster centroid and `M` the
/// distance between centroids. Coinciding centroids yield `f64::INFINITY`.
pub fn davies_bouldin(points: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(points, labels)?;
    let members = cluster_members(labels);
    require_two_clusters(&members, "davies-bouldin")?;
    let d = points.cols();
    let k = members.len();
    let mut centroids = Matrix::zeros(k, d);
    let mut spreads = vec![0.0; k];
    for (c, cluster) in members.iter().enumerate() {
        for &i in cluster {
            for (slot, &v) in centroids.row_mut(c).iter_mut().zip(points.row(i)) {
                *slot += v;
            }
        }
        let inv = 1.0 / cluster.len() as f64;
        centroids.row_mut(c).iter_mut().for_each(|v| *v *= inv);
        let mut acc = 0.0;
        for &i in cluster {
            acc += euclidean_distance(points.row(i), centroids.row(c));
        }
        spreads[c] = acc * inv;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i == j {
                continue;
            }
            let m = euclidean_distance(centroids.row(i), centroids.row(j));
            let ratio = if m > 0.0 {
                (spreads[i] + spreads[j]) / m
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

fn check_labels(points: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != points.rows() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} points",
            labels.len(),
            points.rows()
        )));
    }
    Ok(())
}

/// Validity indices for one choice of k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub k: usize,
    pub silhouette: f64,
    pub calinski_harabasz: f64,
    pub davies_bouldin: f64,
    /// True when a degenerate guard (zero dispersion or coinciding
    /// centroids) produced an infinite sentinel.
    pub degenerate: bool,
}

/// Validity indices across a k range, for plotting and review.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    /// CSV with header `k,silhouette,calinski_harabasz,davies_bouldin`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "silhouette", "calinski_harabasz", "davies_bouldin"])?;
        for row in &self.rows {
            w.write_record([
                row.k.to_string(),
                row.silhouette.to_string(),
                row.calinski_harabasz.to_string(),
                row.davies_bouldin.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run K-Means across `k_range`, compute all three indices per k, and pick
/// the k with the best silhouette (ties: lower Davies-Bouldin, then
/// smaller k). The full curve comes back for human review.
pub fn elbow_select(
    points: &Matrix,
    k_range: RangeInclusive<usize>,
    seed: u64,
    restarts: usize,
) -> Result<(usize, MetricReport)> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo > hi {
        return Err(Error::InvalidInput("empty k range".into()));
    }
    if lo < 2 || hi > points.rows().saturating_sub(1) {
        return Err(Error::InvalidInput(format!(
            "k range {lo}..={hi} outside [2, {}]",
            points.rows().saturating_sub(1)
        )));
    }
    let mut report = MetricReport::default();
    let mut best: Option<(usize, f64, f64)> = None; // (k, silhouette, db)
    for k in k_range {
        let fit = kmeans_fit(points, k, seed, restarts)?;
        let sil = silhouette(points, &fit.labels)?;
        let ch = calinski_harabasz(points, &fit.labels)?;
        let db = davies_bouldin(points, &fit.labels)?;
        report.rows.push(MetricRow {
            k,
            silhouette: sil,
            calinski_harabasz: ch,
            davies_bouldin: db,
            degenerate: ch.is_infinite() || db.is_infinite(),
        });
        let better = match best {
            None => true,
            Some((_, best_sil, best_db)) => {
                sil > best_sil || (sil == best_sil && db < best_db)
            }
        };
        if better {
            best = Some((k, sil, db));
        }
    }
    Ok((best.expect("non-empty range").0, report))
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().copied().max().unwrap_or(0) + 1;
    let kb = b.iter().copied().max().unwrap_or(0) + 1;
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut sum_ij = 0.0;
    for row in &table {
        for &v in row {
            sum_ij += comb2(v);
        }
    }
    let sum_a: f64 = table.iter().map(|row| comb2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let expected = sum_a * sum_b / comb2(n as u64);
    let max_index = 0.5 * (sum_a + sum_b);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        return if (sum_ij - expected).abs() < 1e-12 { 1.0 } else { 0.0 };
    }
    (sum_ij - expected) / denom
}
