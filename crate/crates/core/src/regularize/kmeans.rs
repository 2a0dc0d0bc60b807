//! k-means++ / Lloyd clustering and per-cluster core extraction.

use super::{retained_count, RegularizeError};
use crate::cloud::{bounding_diagonal, ColoredPointCloud};
use crate::spatial::KdTree;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const MAX_LLOYD_ITERS: usize = 50;
pub const MOTION_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vector3<f64>>,
}

impl ClusterAssignment {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }
}

fn seed_centroids(points: &[Vector3<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centroids[0]).norm_squared()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        centroids.push(c);
        d2.par_iter_mut().zip(points.par_iter()).for_each(|(d, p)| *d = d.min((p - c).norm_squared()));
    }
    centroids
}

fn assign(points: &[Vector3<f64>], centroids: &[Vector3<f64>]) -> Vec<usize> {
    let tree = KdTree::new(centroids);
    points.par_iter().map(|p| tree.nearest(p).expect("centroids non-empty").index).collect()
}

fn repair_empty(points: &[Vector3<f64>], labels: &mut [usize], centroids: &[Vector3<f64>], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        // Largest cluster, lowest label on ties.
        let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).expect("k >= 1");
        let victim = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                let da = (points[a] - centroids[largest]).norm_squared();
                let db = (points[b] - centroids[largest]).norm_squared();
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("largest cluster non-empty");
        labels[victim] = empty;
    }
}

fn update(points: &[Vector3<f64>], labels: &[usize], k: usize) -> Vec<Vector3<f64>> {
    let mut sums = vec![Vector3::zeros(); k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l] += p;
        counts[l] += 1;
    }
    sums.into_iter().zip(counts).map(|(s, c)| s / c as f64).collect()
}

/// Deterministic k-means under a fixed seed. `k` is lowered to the number of
/// points when it exceeds it.
pub fn kmeans(points: &[Vector3<f64>], k: usize, seed: u64) -> Result<ClusterAssignment, RegularizeError> {
    if k == 0 {
        return Err(RegularizeError::InvalidParameter("k must be >= 1".into()));
    }
    if points.is_empty() {
        return Err(RegularizeError::EmptyInput);
    }
    let k = if k > points.len() {
        log::warn!("k-means: k={k} exceeds {} points; using k={}", points.len(), points.len());
        points.len()
    } else {
        k
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = MOTION_TOLERANCE * bounding_diagonal(points.iter());
    let mut centroids = seed_centroids(points, k, &mut rng);
    let mut labels = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        labels = assign(points, &centroids);
        repair_empty(points, &mut labels, &centroids, k);
        let next = update(points, &labels, k);
        let motion = next.iter().zip(&centroids).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        centroids = next;
        if motion < tol {
            break;
        }
    }
    Ok(ClusterAssignment { k, labels, centroids })
}

/// Per cluster, indices of the `ceil(keep_fraction * |Q_c|)` points nearest
/// its centroid (at least one), returned in input order.
pub fn cluster_denoise_indices(
    points: &[Vector3<f64>],
    assignment: &ClusterAssignment,
    keep_fraction: f64,
) -> Result<Vec<usize>, RegularizeError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(RegularizeError::InvalidParameter(format!("cluster keep fraction {keep_fraction}")));
    }
    let mut out = Vec::new();
    for (c, members) in assignment.members().into_iter().enumerate() {
        let mut ranked: Vec<(f64, usize)> =
            members.iter().map(|&i| ((points[i] - assignment.centroids[c]).norm_squared(), i)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(ranked.iter().take(retained_count(keep_fraction, ranked.len())).map(|r| r.1));
    }
    out.sort_unstable();
    Ok(out)
}

pub fn cluster_denoise(
    cloud: &ColoredPointCloud,
    assignment: &ClusterAssignment,
    keep_fraction: f64,
) -> Result<ColoredPointCloud, RegularizeError> {
    Ok(cloud.select(&cluster_denoise_indices(&cloud.positions(), assignment, keep_fraction)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, per: usize) -> (Vec<Vector3<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 0.1).unwrap();
        let centers = [Vector3::new(0.0, 0.0, 0.0), Vector3::new(10.0, 0.0, 0.0), Vector3::new(0.0, 10.0, 5.0)];
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (b, c) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(c + Vector3::from_fn(|_, _| n.sample(&mut rng)));
                truth.push(b);
            }
        }
        (pts, truth)
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (pts, truth) = blobs(5, 50);
        let a = kmeans(&pts, 3, 42).unwrap();
        // Same partition up to label permutation.
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                assert_eq!(truth[i] == truth[j], a.labels[i] == a.labels[j]);
            }
        }
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let (pts, _) = blobs(6, 20);
        let a = kmeans(&pts, 1, 1).unwrap();
        let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
        assert!((a.centroids[0] - mean).norm() < 1e-12);
    }

    #[test]
    fn deterministic_and_k_lowered() {
        let (pts, _) = blobs(7, 30);
        assert_eq!(kmeans(&pts, 8, 9).unwrap(), kmeans(&pts, 8, 9).unwrap());
        assert_eq!(kmeans(&pts[..4], 10, 0).unwrap().k, 4);
    }

    #[test]
    fn ten_point_cluster_keeps_three() {
        let pts: Vec<Vector3<f64>> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let a = ClusterAssignment { k: 1, labels: vec![0; 10], centroids: vec![Vector3::new(4.5, 0.0, 0.0)] };
        assert_eq!(cluster_denoise_indices(&pts, &a, 0.3).unwrap(), vec![3, 4, 5]);
        let single = ClusterAssignment { k: 1, labels: vec![0], centroids: vec![pts[0]] };
        assert_eq!(cluster_denoise_indices(&pts[..1], &single, 0.3).unwrap(), vec![0]);
    }

    #[test]
    fn empty_cluster_is_repaired() {
        let pts = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(5.0, 0.0, 0.0)];
        let mut labels = vec![0, 0, 0];
        repair_empty(&pts, &mut labels, &[Vector3::zeros(), Vector3::new(100.0, 0.0, 0.0)], 2);
        assert_eq!(labels, vec![0, 0, 1]);
    }

    proptest! {
        #[test]
        fn exact_per_cluster_retention(seed in 0u64..500, k in 1usize..12, frac in 0.01f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vector3<f64>> = (0..80).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
            let a = kmeans(&pts, k, seed).unwrap();
            let kept = cluster_denoise_indices(&pts, &a, frac).unwrap();
            for (c, members) in a.members().iter().enumerate() {
                prop_assert!(!members.is_empty(), "cluster {} empty", c);
                let n = kept.iter().filter(|&&i| a.labels[i] == c).count();
                prop_assert_eq!(n, retained_count(frac, members.len()));
            }
        }
    }
}
