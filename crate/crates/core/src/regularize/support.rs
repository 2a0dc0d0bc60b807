//! Single-view filtering: depth-ambiguous points survive only when close to
//! the multi-view-supported set.

use super::{retained_count, RegularizeError};
use crate::cloud::{ColoredPointCloud, Provenance};
use crate::geometry::CameraModel;
use crate::spatial::KdTree;
use nalgebra::Vector3;
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportPartition {
    pub single_view: Vec<usize>,
    pub multi_view: Vec<usize>,
    /// Number of supporting views per point.
    pub support: Vec<usize>,
}

/// SfM points are supported by their track views (or, when only the track
/// length is known, by that many views); other points by every camera whose
/// image contains their projection.
pub fn classify_support(cloud: &ColoredPointCloud, cameras: &[CameraModel]) -> SupportPartition {
    let support: Vec<usize> = cloud
        .points
        .par_iter()
        .map(|p| match p.provenance {
            Provenance::Sfm if !p.support_views.is_empty() => p.support_views.len(),
            Provenance::Sfm if p.track_len.is_some() => p.track_len.unwrap_or(0) as usize,
            _ => cameras.iter().filter(|c| c.sees(&p.position)).count(),
        })
        .collect();
    let mut part = SupportPartition::default();
    for (i, &s) in support.iter().enumerate() {
        if s >= 2 {
            part.multi_view.push(i);
        } else {
            part.single_view.push(i);
        }
    }
    part.support = support;
    part
}

/// Negative distance to the nearest reference point.
pub fn reliability(point: &Vector3<f64>, reference: &KdTree) -> Result<f64, RegularizeError> {
    reference.nearest(point).map(|n| -n.dist_sq.sqrt()).ok_or(RegularizeError::EmptyReference)
}

/// Reliability of every single-view point; unsupported points score `-inf`.
pub fn single_view_scores(cloud: &ColoredPointCloud, part: &SupportPartition) -> Result<Vec<f64>, RegularizeError> {
    let reference: Vec<Vector3<f64>> = part.multi_view.iter().map(|&i| cloud.points[i].position).collect();
    if reference.is_empty() {
        return Err(RegularizeError::EmptyReference);
    }
    let tree = KdTree::new(&reference);
    part.single_view
        .par_iter()
        .map(|&i| {
            if part.support[i] == 0 {
                Ok(f64::NEG_INFINITY)
            } else {
                reliability(&cloud.points[i].position, &tree)
            }
        })
        .collect()
}

/// Indices kept by the single-view filter, in input order: all multi-view
/// points plus the `ceil(keep_fraction * |sv|)` most reliable single-view
/// points (ties to the lower index).
pub fn single_view_filter_indices(
    cloud: &ColoredPointCloud,
    part: &SupportPartition,
    keep_fraction: f64,
) -> Result<Vec<usize>, RegularizeError> {
    if !(0.0..=1.0).contains(&keep_fraction) {
        return Err(RegularizeError::InvalidParameter(format!("single-view keep fraction {keep_fraction}")));
    }
    let scores = match single_view_scores(cloud, part) {
        Ok(s) => s,
        Err(RegularizeError::EmptyReference) => {
            log::warn!("no multi-view points; single-view filter passes everything through");
            return Ok((0..cloud.len()).collect());
        }
        Err(e) => return Err(e),
    };
    let mut ranked: Vec<(f64, usize)> = scores.into_iter().zip(part.single_view.iter().copied()).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let keep = retained_count(keep_fraction, ranked.len());
    let mut out: Vec<usize> = part.multi_view.clone();
    out.extend(ranked[..keep].iter().map(|r| r.1));
    out.sort_unstable();
    Ok(out)
}

pub fn single_view_filter(
    cloud: &ColoredPointCloud,
    part: &SupportPartition,
    keep_fraction: f64,
) -> Result<ColoredPointCloud, RegularizeError> {
    Ok(cloud.select(&single_view_filter_indices(cloud, part, keep_fraction)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::CloudPoint;
    use crate::geometry::{CameraIntrinsics, CameraPose};
    use proptest::prelude::*;

    fn sfm(x: f64, views: &[usize]) -> CloudPoint {
        let mut p = CloudPoint::new(Vector3::new(x, 0.0, 5.0), [0.5; 3], Provenance::Sfm);
        p.support_views = views.iter().copied().collect();
        p
    }

    fn selfinit(p: Vector3<f64>) -> CloudPoint {
        CloudPoint::new(p, [0.5; 3], Provenance::SelfInit)
    }

    fn cameras() -> Vec<CameraModel> {
        let k = CameraIntrinsics::new(50.0, 50.0, 50.0, 50.0, 100, 100).unwrap();
        vec![
            CameraModel::new(k, CameraPose::identity()),
            CameraModel::new(k, CameraPose { translation: Vector3::new(-40.0, 0.0, 0.0), ..CameraPose::identity() }),
        ]
    }

    #[test]
    fn classification_rules() {
        let cloud = ColoredPointCloud::new(vec![
            sfm(0.0, &[0, 1]),
            selfinit(Vector3::new(0.0, 0.0, 5.0)),
            selfinit(Vector3::new(0.0, 0.0, -5.0)),
            selfinit(Vector3::new(40.0, 0.0, 20.0)),
        ]);
        let part = classify_support(&cloud, &cameras());
        assert_eq!(part.multi_view, vec![0]);
        assert_eq!(part.single_view, vec![1, 2, 3]);
        assert_eq!(part.support, vec![2, 1, 0, 1]);
        let scores = single_view_scores(&cloud, &part).unwrap();
        assert_eq!(scores[0], 0.0);
        assert_eq!(scores[1], f64::NEG_INFINITY);
    }

    fn filter_fixture(n_sv: usize) -> (ColoredPointCloud, SupportPartition) {
        let mut pts = vec![sfm(0.0, &[0, 1]), sfm(1.0, &[0, 1])];
        for i in 0..n_sv {
            pts.push(sfm(2.0 + i as f64 * 0.5, &[0]));
        }
        let cloud = ColoredPointCloud::new(pts);
        let part = classify_support(&cloud, &cameras());
        (cloud, part)
    }

    #[test]
    fn keeps_top_fifth_of_single_view_points() {
        let (cloud, part) = filter_fixture(10);
        let kept = single_view_filter_indices(&cloud, &part, 0.2).unwrap();
        assert_eq!(kept, vec![0, 1, 2, 3]);
    }

    #[test]
    fn extreme_fractions() {
        let (cloud, part) = filter_fixture(7);
        assert_eq!(single_view_filter(&cloud, &part, 1.0).unwrap(), cloud);
        assert_eq!(single_view_filter_indices(&cloud, &part, 0.0).unwrap(), part.multi_view);
    }

    #[test]
    fn nearer_point_ranks_higher() {
        let tree = KdTree::new(&[Vector3::zeros()]);
        let near = reliability(&Vector3::new(0.1, 0.0, 0.0), &tree).unwrap();
        let far = reliability(&Vector3::new(1.0, 0.0, 0.0), &tree).unwrap();
        assert!(near > far);
        assert_eq!(reliability(&Vector3::zeros(), &tree).unwrap(), 0.0);
        assert_eq!(reliability(&Vector3::zeros(), &KdTree::new(&[])), Err(RegularizeError::EmptyReference));
    }

    #[test]
    fn no_reference_passes_through() {
        let cloud = ColoredPointCloud::new(vec![sfm(0.0, &[0]), sfm(1.0, &[1])]);
        let part = classify_support(&cloud, &cameras());
        assert_eq!(single_view_filter(&cloud, &part, 0.2).unwrap(), cloud);
    }

    proptest! {
        #[test]
        fn exact_retention_count(n_sv in 0usize..60, n_mv in 1usize..10, frac in 0.0f64..=1.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::new();
            for i in 0..n_sv + n_mv {
                let mut p = CloudPoint::new(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)), [0.5; 3], Provenance::Sfm);
                p.support_views = if i < n_sv { [0].into() } else { [0, 1].into() };
                pts.push(p);
            }
            let cloud = ColoredPointCloud::new(pts);
            let part = classify_support(&cloud, &[]);
            let kept = single_view_filter_indices(&cloud, &part, frac).unwrap();
            prop_assert_eq!(kept.len(), n_mv + retained_count(frac, n_sv));
            prop_assert!(part.multi_view.iter().all(|i| kept.contains(i)));
        }
    }
}
