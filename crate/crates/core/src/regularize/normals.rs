//! PCA normals and the neighbour-consistency filter.

use super::RegularizeError;
use crate::geometry::CameraModel;
use crate::spatial::KdTree;
use nalgebra::{SymmetricEigen, Vector3};
use rayon::prelude::*;

/// Relative gap below which the two smallest covariance eigenvalues are
/// considered equal.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub normals: Vec<Vector3<f64>>,
    /// Neighbour indices used for each point (the point itself excluded).
    pub neighbors: Vec<Vec<usize>>,
    pub degenerate: Vec<bool>,
}

impl NormalField {
    /// Mean cosine between each normal and its neighbours' normals.
    pub fn consistency(&self) -> Vec<f64> {
        self.neighbors
            .par_iter()
            .enumerate()
            .map(|(i, nb)| {
                if nb.is_empty() {
                    return 1.0;
                }
                nb.iter().map(|&j| self.normals[i].dot(&self.normals[j])).sum::<f64>() / nb.len() as f64
            })
            .collect()
    }
}

fn orient(normal: Vector3<f64>, point: &Vector3<f64>, cameras: &[CameraModel]) -> Vector3<f64> {
    let nearest = |cams: &mut dyn Iterator<Item = &CameraModel>| {
        cams.map(|c| c.center()).min_by(|a, b| (a - point).norm_squared().total_cmp(&(b - point).norm_squared()))
    };
    let center = nearest(&mut cameras.iter().filter(|c| c.sees(point))).or_else(|| nearest(&mut cameras.iter()));
    match center {
        Some(c) if normal.dot(&(c - point)) < 0.0 => -normal,
        _ => normal,
    }
}

/// Smallest-eigenvalue eigenvector of the covariance of each point and its
/// `k` nearest neighbours, oriented toward the nearest observing camera.
pub fn estimate_normals(
    positions: &[Vector3<f64>],
    cameras: &[CameraModel],
    k: usize,
) -> Result<NormalField, RegularizeError> {
    if positions.len() <= k {
        return Err(RegularizeError::TooFewPoints { needed: k + 1, got: positions.len() });
    }
    let tree = KdTree::new(positions);
    let per_point: Vec<(Vector3<f64>, Vec<usize>, bool)> = positions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nb: Vec<usize> = tree.knn_excluding(p, k, i).into_iter().map(|n| n.index).collect();
            let n = (nb.len() + 1) as f64;
            let mean = (p + nb.iter().map(|&j| positions[j]).sum::<Vector3<f64>>()) / n;
            let mut cov = (p - mean) * (p - mean).transpose();
            for &j in &nb {
                let d = positions[j] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov / n);
            let mut order = [0usize, 1, 2];
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (l0, l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
            let degenerate = (l1 - l0) <= DEGENERACY_TOLERANCE * l2.abs().max(f64::MIN_POSITIVE);
            let normal = eig.eigenvectors.column(order[0]).normalize();
            (orient(normal, p, cameras), nb, degenerate)
        })
        .collect();
    let mut field = NormalField { normals: Vec::new(), neighbors: Vec::new(), degenerate: Vec::new() };
    for (n, nb, d) in per_point {
        field.normals.push(n);
        field.neighbors.push(nb);
        field.degenerate.push(d);
    }
    Ok(field)
}

/// Indices whose mean neighbour cosine is at least `threshold`.
pub fn normal_filter_indices(normals: &NormalField, threshold: f64) -> Vec<usize> {
    normals.consistency().iter().enumerate().filter(|(_, c)| **c >= threshold).map(|(i, _)| i).collect()
}
