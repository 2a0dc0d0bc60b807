//! Low-frequency-aware sparse reconstruction.
//!
//! Each input view gets a companion in which its high-gradient pixels are
//! replaced by a fill color. Features are detected on all `2N` views, matched
//! under the known poses, and every track seen in at least two distinct views
//! is triangulated and robustly refined into the initial cloud.

pub mod features;
pub mod gradient;
pub mod matching;

use crate::cloud::{CloudPoint, ColoredPointCloud, Provenance};
use crate::geometry::{self, CameraModel, FeatureTrack, RefineConfig, RefinedPoint};
use crate::image::Image;
use features::{detect_features, HarrisConfig, Keypoint};
use gradient::{high_frequency_mask, GradientMask};
use matching::{match_and_track, MatchConfig};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfmError {
    #[error("need at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("percentile {0} outside [0, 100]")]
    InvalidPercentile(f64),
    #[error("original views must carry ids 0..N in order (view {index} has id {id})")]
    InvalidViewIds { index: usize, id: usize },
    #[error("image of view {0} does not match its camera size")]
    SizeMismatch(usize),
    #[error("no track survived triangulation")]
    EmptyOutput,
    #[error("track references unknown view {0}")]
    UnknownView(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    /// Physical view id; a masked variant carries its original's id.
    pub view_id: usize,
    pub image: Image,
    pub camera: CameraModel,
    pub is_masked_variant: bool,
    /// Mask used to build a variant.
    pub mask: Option<GradientMask>,
}

impl ViewImage {
    pub fn new(view_id: usize, image: Image, camera: CameraModel) -> Self {
        Self { view_id, image, camera, is_masked_variant: false, mask: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FillMode {
    /// Mean color of the source image.
    ImageMean,
    Constant([f64; 3]),
}

/// Copy of `view` with its high-frequency pixels replaced by the fill color.
pub fn masked_variant(view: &ViewImage, percentile: f64, fill: FillMode) -> Result<ViewImage, SfmError> {
    let mask = high_frequency_mask(&view.image, percentile)?;
    let color = match fill {
        FillMode::ImageMean => view.image.mean_color(),
        FillMode::Constant(c) => c,
    };
    let mut image = view.image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if mask.get(x, y) {
                image.set(x, y, color);
            }
        }
    }
    Ok(ViewImage { view_id: view.view_id, image, camera: view.camera, is_masked_variant: true, mask: Some(mask) })
}

/// Originals followed by one masked variant per original, in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedViewSet {
    pub views: Vec<ViewImage>,
}

impl AugmentedViewSet {
    pub fn originals(&self) -> impl Iterator<Item = &ViewImage> {
        self.views.iter().filter(|v| !v.is_masked_variant)
    }

    pub fn variants(&self) -> impl Iterator<Item = &ViewImage> {
        self.views.iter().filter(|v| v.is_masked_variant)
    }
}

fn validate_views(views: &[ViewImage]) -> Result<(), SfmError> {
    for (index, v) in views.iter().filter(|v| !v.is_masked_variant).enumerate() {
        if v.view_id != index {
            return Err(SfmError::InvalidViewIds { index, id: v.view_id });
        }
        if v.image.width() != v.camera.width() || v.image.height() != v.camera.height() {
            return Err(SfmError::SizeMismatch(v.view_id));
        }
    }
    Ok(())
}

pub fn build_augmented_set(views: &[ViewImage], percentile: f64, fill: FillMode) -> Result<AugmentedViewSet, SfmError> {
    if views.len() < 2 {
        return Err(SfmError::TooFewViews(views.len()));
    }
    validate_views(views)?;
    let variants: Vec<ViewImage> =
        views.par_iter().map(|v| masked_variant(v, percentile, fill)).collect::<Result<_, _>>()?;
    let mut all: Vec<ViewImage> = views.iter().map(|v| ViewImage { is_masked_variant: false, mask: None, ..v.clone() }).collect();
    all.extend(variants);
    Ok(AugmentedViewSet { views: all })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfmConfig {
    pub percentile: f64,
    pub fill: FillMode,
    /// Use the masked companion views; when false only originals are used.
    pub augment: bool,
    pub harris: HarrisConfig,
    pub matching: MatchConfig,
    pub refine: RefineConfig,
    /// Points whose reprojection error exceeds this in any supporting view are dropped.
    pub max_reprojection_error: f64,
}

impl Default for SfmConfig {
    fn default() -> Self {
        Self {
            percentile: 70.0,
            fill: FillMode::ImageMean,
            augment: true,
            harris: HarrisConfig::default(),
            matching: MatchConfig::default(),
            refine: RefineConfig::default(),
            max_reprojection_error: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfmOutput {
    pub cloud: ColoredPointCloud,
    pub tracks: Vec<FeatureTrack>,
    /// Refinement result per cloud point, aligned with `cloud.points`.
    pub refined: Vec<RefinedPoint>,
}

/// Cameras of the original views indexed by view id.
pub fn cameras_of(views: &[ViewImage]) -> Vec<CameraModel> {
    views.iter().filter(|v| !v.is_masked_variant).map(|v| v.camera).collect()
}

/// Detect, match and reconstruct from an explicit list of views (originals
/// and, optionally, masked variants).
pub fn reconstruct_views(views: &[ViewImage], cfg: &SfmConfig) -> Result<SfmOutput, SfmError> {
    validate_views(views)?;
    let keypoints: Vec<Vec<Keypoint>> = views.par_iter().map(|v| detect_features(v, &cfg.harris)).collect();
    let tracks = match_and_track(views, &keypoints, &cfg.matching);
    let originals: Vec<&Image> = views.iter().filter(|v| !v.is_masked_variant).map(|v| &v.image).collect();
    reconstruct_from_tracks(tracks, &cameras_of(views), &originals, cfg)
}

/// Builds the initial cloud `P0` from the views, augmenting with masked
/// variants when `cfg.augment` is set.
pub fn reconstruct_p0(views: &[ViewImage], cfg: &SfmConfig) -> Result<SfmOutput, SfmError> {
    if views.len() < 2 {
        return Err(SfmError::TooFewViews(views.len()));
    }
    if cfg.augment {
        let aug = build_augmented_set(views, cfg.percentile, cfg.fill)?;
        reconstruct_views(&aug.views, cfg)
    } else {
        reconstruct_views(views, cfg)
    }
}

/// Triangulates and refines externally supplied or matched tracks. Point
/// colors average the observed pixels of `images` (indexed by view id).
pub fn reconstruct_from_tracks(
    tracks: Vec<FeatureTrack>,
    cameras: &[CameraModel],
    images: &[&Image],
    cfg: &SfmConfig,
) -> Result<SfmOutput, SfmError> {
    for t in &tracks {
        if let Some(v) = t.view_ids().find(|&v| v >= cameras.len()) {
            return Err(SfmError::UnknownView(v));
        }
    }
    let refined = geometry::refine_points(&tracks, cameras, &cfg.refine);
    let mut points = Vec::with_capacity(refined.len());
    let mut kept = Vec::with_capacity(refined.len());
    for mut r in refined {
        let track = &tracks[r.track_index];
        let max_err = track
            .observations
            .iter()
            .map(|o| cameras[o.view_id].project(&r.point.position).map(|p| (p - o.pixel).norm()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        if max_err > cfg.max_reprojection_error {
            continue;
        }
        let mut color = [0.0; 3];
        let mut n = 0.0;
        for o in &track.observations {
            if let Some(img) = images.get(o.view_id) {
                let c = img.sample_bilinear(o.pixel.x, o.pixel.y);
                for k in 0..3 {
                    color[k] += c[k];
                }
                n += 1.0;
            }
        }
        if n > 0.0 {
            color = color.map(|c| (c / n).clamp(0.0, 1.0));
        }
        r.point.color = color;
        let mut p = CloudPoint::new(r.point.position, color, Provenance::Sfm);
        p.support_views = track.view_ids().collect();
        p.track_len = Some(track.len() as u32);
        points.push(p);
        kept.push(r);
    }
    if points.is_empty() {
        return Err(SfmError::EmptyOutput);
    }
    Ok(SfmOutput { cloud: ColoredPointCloud::new(points), tracks, refined: kept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose};

    fn views(n: usize) -> Vec<ViewImage> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32).unwrap();
        (0..n)
            .map(|i| {
                let img = Image::from_fn(32, 32, |_, _| {
                    let v: f64 = rng.random();
                    [v, v, v]
                });
                ViewImage::new(i, img, CameraModel::new(k, CameraPose::identity()))
            })
            .collect()
    }

    #[test]
    fn augmented_set_doubles_views() {
        let aug = build_augmented_set(&views(3), 70.0, FillMode::ImageMean).unwrap();
        assert_eq!(aug.views.len(), 6);
        assert_eq!(aug.variants().count(), 3);
        for (o, v) in aug.originals().zip(aug.variants()) {
            assert_eq!(o.view_id, v.view_id);
            assert_eq!(o.camera, v.camera);
        }
    }

    #[test]
    fn percentile_hundred_leaves_variants_unchanged() {
        let aug = build_augmented_set(&views(2), 100.0, FillMode::ImageMean).unwrap();
        for (o, v) in aug.originals().zip(aug.variants()) {
            assert_eq!(o.image, v.image);
        }
    }

    #[test]
    fn percentile_zero_on_noise_fills_everything() {
        let aug = build_augmented_set(&views(2), 0.0, FillMode::Constant([0.0; 3])).unwrap();
        for v in aug.variants() {
            assert!(v.mask.as_ref().unwrap().mask.iter().all(|m| *m));
            assert!(v.image.data().iter().all(|c| *c == 0.0));
        }
    }

    #[test]
    fn single_view_is_rejected() {
        assert_eq!(build_augmented_set(&views(1), 70.0, FillMode::ImageMean), Err(SfmError::TooFewViews(1)));
    }
}
