//! Three-stage regulariser for the merged seed cloud: single-view
//! filtering, cluster-core extraction, and normal-consistency filtering.
//! Each stage only removes points and keeps input order.

pub mod kmeans;
pub mod normals;
pub mod support;

pub use kmeans::{cluster_denoise, kmeans, ClusterAssignment};
pub use normals::{estimate_normals, NormalField};
pub use support::{classify_support, reliability, single_view_filter, SupportPartition};

use crate::cloud::ColoredPointCloud;
use crate::geometry::CameraModel;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularizeError {
    #[error("input cloud is empty")]
    EmptyInput,
    #[error("stage {0} removed every point")]
    EmptyOutput(&'static str),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no multi-view points to measure reliability against")]
    EmptyReference,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `ceil(fraction * n)`, at least one when both are positive. A small slack
/// absorbs products such as `0.3 * 10 = 3.0000000000000004`.
pub fn retained_count(fraction: f64, n: usize) -> usize {
    if n == 0 || fraction <= 0.0 {
        return 0;
    }
    ((fraction * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizeParams {
    pub keep_single_view: f64,
    pub kmeans_k: usize,
    pub keep_cluster: f64,
    pub k_neighbors: usize,
    pub normal_threshold: f64,
    pub seed: u64,
}

impl Default for RegularizeParams {
    fn default() -> Self {
        Self { keep_single_view: 0.2, kmeans_k: 1000, keep_cluster: 0.3, k_neighbors: 10, normal_threshold: 0.2, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StageReport {
    pub input: usize,
    pub single_view: usize,
    pub multi_view: usize,
    pub after_single_view: usize,
    pub clusters: usize,
    pub after_cluster: usize,
    pub after_normal: usize,
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stage.input={}", self.input)?;
        writeln!(f, "stage.single_view_points={}", self.single_view)?;
        writeln!(f, "stage.multi_view_points={}", self.multi_view)?;
        writeln!(f, "stage.after_single_view_filter={}", self.after_single_view)?;
        writeln!(f, "stage.clusters={}", self.clusters)?;
        writeln!(f, "stage.after_cluster_denoise={}", self.after_cluster)?;
        write!(f, "stage.after_normal_filter={}", self.after_normal)
    }
}

/// Runs the three stages in order and reports the count after each.
pub fn regularize(
    p_init: &ColoredPointCloud,
    cameras: &[CameraModel],
    params: &RegularizeParams,
) -> Result<(ColoredPointCloud, StageReport), RegularizeError> {
    if p_init.is_empty() {
        return Err(RegularizeError::EmptyInput);
    }
    if !(-1.0..=1.0).contains(&params.normal_threshold) {
        return Err(RegularizeError::InvalidParameter(format!("normal threshold {}", params.normal_threshold)));
    }
    let mut report = StageReport { input: p_init.len(), ..Default::default() };

    let part = classify_support(p_init, cameras);
    report.single_view = part.single_view.len();
    report.multi_view = part.multi_view.len();
    let stage1 = single_view_filter(p_init, &part, params.keep_single_view)?;
    report.after_single_view = stage1.len();
    if stage1.is_empty() {
        return Err(RegularizeError::EmptyOutput("single_view_filter"));
    }

    let assignment = kmeans(&stage1.positions(), params.kmeans_k, params.seed)?;
    report.clusters = assignment.k;
    let stage2 = cluster_denoise(&stage1, &assignment, params.keep_cluster)?;
    report.after_cluster = stage2.len();

    let nf = estimate_normals(&stage2.positions(), cameras, params.k_neighbors)?;
    let stage3 = stage2.select(&normals::normal_filter_indices(&nf, params.normal_threshold));
    report.after_normal = stage3.len();
    if stage3.is_empty() {
        return Err(RegularizeError::EmptyOutput("normal_filter"));
    }
    Ok((stage3, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{CloudPoint, Provenance};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    #[test]
    fn retained_count_rules() {
        assert_eq!(retained_count(0.3, 10), 3);
        assert_eq!(retained_count(0.2, 10), 2);
        assert_eq!(retained_count(0.2, 11), 3);
        assert_eq!(retained_count(0.3, 1), 1);
        assert_eq!(retained_count(0.0, 5), 0);
        assert_eq!(retained_count(1.0, 7), 7);
        assert_eq!(retained_count(0.5, 0), 0);
    }

    fn random_cloud(n: usize) -> ColoredPointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        ColoredPointCloud::new(
            (0..n)
                .map(|i| {
                    let mut p = CloudPoint::new(Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)), [0.3; 3], Provenance::Sfm);
                    p.support_views = if i % 3 == 0 { [0].into() } else { [0, 1].into() };
                    p
                })
                .collect(),
        )
    }

    #[test]
    fn identity_parameters_keep_everything() {
        let cloud = random_cloud(200);
        let params = RegularizeParams { keep_single_view: 1.0, keep_cluster: 1.0, normal_threshold: -1.0, kmeans_k: 20, ..Default::default() };
        let (out, report) = regularize(&cloud, &[], &params).unwrap();
        assert_eq!(out, cloud);
        assert_eq!(report.after_normal, 200);
    }

    #[test]
    fn stage_counts_telescope() {
        let cloud = random_cloud(300);
        let (out, r) = regularize(&cloud, &[], &RegularizeParams { kmeans_k: 30, normal_threshold: -1.0, ..Default::default() }).unwrap();
        assert!(r.input >= r.after_single_view && r.after_single_view >= r.after_cluster && r.after_cluster >= r.after_normal);
        assert_eq!(out.len(), r.after_normal);
        assert_eq!(r.after_single_view, 200 + retained_count(0.2, 100));
        let text = r.to_string();
        assert!(text.lines().all(|l| l.split_once('=').is_some()));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(regularize(&ColoredPointCloud::default(), &[], &RegularizeParams::default()), Err(RegularizeError::EmptyInput));
    }
}
