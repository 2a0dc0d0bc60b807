//! Image and point-cloud quality metrics.

use crate::image::{Image, ImageError};
use crate::regularize::StageReport;
use crate::spatial::KdTree;
use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("cannot measure an empty cloud")]
    EmptyCloud,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// `10 log10(1 / MSE)`; identical images give `+inf`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    let n = a.data().len().max(1) as f64;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

fn mean_nn_distance(from: &[Vector3<f64>], to: &KdTree) -> f64 {
    // Collect before summing so the reduction order is fixed.
    let d: Vec<f64> = from.par_iter().map(|p| to.nearest(p).expect("non-empty").dist_sq.sqrt()).collect();
    d.iter().sum::<f64>() / from.len() as f64
}

/// Symmetric chamfer distance: the average of the two directional mean
/// nearest-neighbour distances.
pub fn chamfer(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    Ok(0.5 * (mean_nn_distance(a, &tb) + mean_nn_distance(b, &ta)))
}

/// Exhaustive-scan chamfer, used as an oracle.
pub fn chamfer_brute_force(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let dir = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
        from.iter().map(|p| to.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).sum::<f64>() / from.len() as f64
    };
    Ok(0.5 * (dir(a, b) + dir(b, a)))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub chamfer: f64,
    pub point_count: usize,
    pub stages: Option<StageReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn psnr_closed_forms() {
        let a = Image::filled(4, 4, [0.2; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::filled(4, 4, [0.3; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&Image::filled(4, 4, [0.0; 3]), &Image::filled(4, 4, [1.0; 3])).unwrap().abs() < 1e-12);
        assert!(psnr(&a, &Image::new(3, 4)).is_err());
    }

    #[test]
    fn interleaved_lattices_are_half_apart() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    let p = Vector3::new(i as f64, j as f64, k as f64);
                    a.push(p);
                    b.push(p + Vector3::new(0.5, 0.0, 0.0));
                }
            }
        }
        assert!((chamfer(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &[]), Err(MetricError::EmptyCloud));
    }

    #[test]
    fn indexed_chamfer_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for n in [1usize, 17, 400, 2000] {
            let a: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
            let b: Vec<Vector3<f64>> = (0..n / 2 + 1).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
            let fast = chamfer(&a, &b).unwrap();
            let slow = chamfer_brute_force(&a, &b).unwrap();
            assert!((fast - slow).abs() <= 1e-12, "{n}: {fast} vs {slow}");
        }
    }
}
