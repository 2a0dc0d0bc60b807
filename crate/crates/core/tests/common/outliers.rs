//! Planted-outlier fixtures for the cluster and normal stages, with
//! exhaustive-scan oracles.

use nalgebra::{SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use seedcloud::geometry::{CameraIntrinsics, CameraModel, CameraPose};
use seedcloud::spatial::brute_force_knn;

pub const BLOBS: usize = 8;
pub const BLOB_POINTS: usize = 95;
pub const OUTLIERS_PER_BLOB: usize = 5;

/// Tight Gaussian blobs 10 units apart, each with five points planted
/// 0.9-1.5 units from its centre. Returns points and the planted flags.
pub fn cluster_fixture(seed: u64) -> (Vec<Vector3<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut pts = Vec::new();
    let mut planted = Vec::new();
    for b in 0..BLOBS {
        let c = Vector3::new((b % 4) as f64 * 10.0, (b / 4) as f64 * 10.0, 0.0);
        for _ in 0..BLOB_POINTS {
            pts.push(c + Vector3::from_fn(|_, _| noise.sample(&mut rng)));
            planted.push(false);
        }
        for _ in 0..OUTLIERS_PER_BLOB {
            let dir = Vector3::from_fn(|_, _| noise.sample(&mut rng)).normalize();
            pts.push(c + dir * rng.random_range(0.9..1.5));
            planted.push(true);
        }
    }
    (pts, planted)
}

/// Expected survivors of cluster denoising by exhaustive scan: per label,
/// the `ceil(keep * n)` members nearest the centroid, ties to lower index.
pub fn brute_force_cluster_keep(points: &[Vector3<f64>], labels: &[usize], centroids: &[Vector3<f64>], keep: f64) -> Vec<usize> {
    let mut kept = Vec::new();
    for (c, mu) in centroids.iter().enumerate() {
        let mut members: Vec<(f64, usize)> =
            (0..points.len()).filter(|&i| labels[i] == c).map(|i| ((points[i] - mu).norm(), i)).collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = ((keep * members.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        kept.extend(members.iter().take(n.min(members.len())).map(|m| m.1));
    }
    kept.sort_unstable();
    kept
}

pub struct PlaneFixture {
    pub points: Vec<Vector3<f64>>,
    /// True for the randomly placed off-plane points.
    pub planted: Vec<bool>,
    pub cameras: Vec<CameraModel>,
}

pub const PLANE_SIDE: usize = 60;
pub const PLANTED_OFF_PLANE: usize = 20;

/// 60x60 grid (spacing 0.1) on z = 0 plus 20 isolated points: uniform over
/// the plane footprint, 0.4-0.8 units above it, pairwise at least 1.2 apart
/// (rejection sampled). Two cameras look down from z = 8.
pub fn plane_fixture(seed: u64) -> PlaneFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (PLANE_SIDE as f64 - 1.0) * 0.05;
    let mut points: Vec<Vector3<f64>> = (0..PLANE_SIDE)
        .flat_map(|i| (0..PLANE_SIDE).map(move |j| Vector3::new(i as f64 * 0.1 - half, j as f64 * 0.1 - half, 0.0)))
        .collect();
    let mut planted = vec![false; points.len()];
    let mut extra: Vec<Vector3<f64>> = Vec::new();
    while extra.len() < PLANTED_OFF_PLANE {
        let q = Vector3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(0.4..0.8));
        if extra.iter().all(|e| (e - q).norm() >= 1.2) {
            extra.push(q);
        }
    }
    planted.extend(std::iter::repeat_n(true, extra.len()));
    points.extend(extra);
    let k = CameraIntrinsics::new(200.0, 200.0, 160.0, 120.0, 320, 240).unwrap();
    let cameras = [Vector3::new(0.5, 0.2, 8.0), Vector3::new(-0.6, -0.3, 8.0)]
        .iter()
        .map(|c| CameraModel::new(k, CameraPose::look_at(*c, Vector3::zeros(), Vector3::y())))
        .collect();
    PlaneFixture { points, planted, cameras }
}

/// Mean neighbour cosine by exhaustive scan: brute-force k-NN (self
/// excluded), PCA of the point with its neighbours, normals oriented toward
/// the nearest camera that sees the point.
pub fn brute_force_consistency(points: &[Vector3<f64>], cameras: &[CameraModel], k: usize) -> Vec<f64> {
    let neighbors: Vec<Vec<usize>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| brute_force_knn(points, p, k + 1).into_iter().map(|n| n.index).filter(|&j| j != i).take(k).collect())
        .collect();
    let normals: Vec<Vector3<f64>> = points
        .iter()
        .zip(&neighbors)
        .map(|(p, nb)| {
            let set: Vec<Vector3<f64>> = std::iter::once(*p).chain(nb.iter().map(|&j| points[j])).collect();
            let mean = set.iter().sum::<Vector3<f64>>() / set.len() as f64;
            let cov = set.iter().map(|q| (q - mean) * (q - mean).transpose()).sum::<nalgebra::Matrix3<f64>>() / set.len() as f64;
            let eig = SymmetricEigen::new(cov);
            let i = eig.eigenvalues.imin();
            let n = eig.eigenvectors.column(i).normalize();
            let cam = cameras
                .iter()
                .filter(|c| c.sees(p))
                .map(|c| c.center())
                .min_by(|a, b| (a - p).norm().total_cmp(&(b - p).norm()))
                .unwrap_or_else(|| cameras[0].center());
            if n.dot(&(cam - p)) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    neighbors
        .iter()
        .enumerate()
        .map(|(i, nb)| nb.iter().map(|&j| normals[i].dot(&normals[j])).sum::<f64>() / nb.len() as f64)
        .collect()
}
