//! Lightweight first-pass training used for self-initialisation.

use super::field::{GaussianField, GaussianPrimitive};
use super::optim::{Adam, LearningRates, Origin};
use super::render::RenderOptions;
use super::{loss_and_gradient, objective, SplatError};
use crate::cloud::{CloudPoint, ColoredPointCloud, Provenance};
use crate::geometry::CameraModel;
use crate::image::Image;
use crate::sfm::ViewImage;
use crate::spatial::KdTree;
use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub downsample_factor: usize,
    pub lambda_ssim: f64,
    /// Weight of the scale prior; 0 disables it.
    pub beta: f64,
    pub densify_interval: usize,
    /// Mean screen-space (NDC) positional gradient that triggers densification.
    pub densify_grad_threshold: f64,
    /// Primitives larger than this fraction of the scene extent are split, smaller ones cloned.
    pub percent_dense: f64,
    pub prune_opacity: f64,
    /// Densification never grows the field past this many primitives.
    pub max_primitives: usize,
    pub plateau_window: usize,
    /// Relative primitive-count growth over `plateau_window` below which training stops.
    pub plateau_growth: f64,
    /// Stop on plateau; disable for fixed-budget training.
    pub early_stop: bool,
    /// Interval at which the held-in view loss is recorded.
    pub log_interval: usize,
    pub initial_opacity: f64,
    pub lr: LearningRates,
    pub render: RenderOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            downsample_factor: 2,
            lambda_ssim: 0.2,
            beta: 0.0,
            densify_interval: 100,
            densify_grad_threshold: 2e-3,
            percent_dense: 0.01,
            prune_opacity: 0.005,
            max_primitives: 50_000,
            plateau_window: 200,
            plateau_growth: 0.01,
            early_stop: true,
            log_interval: 200,
            initial_opacity: 0.1,
            lr: LearningRates::default(),
            render: RenderOptions::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SplatError> {
        let bad = |m: &str| Err(SplatError::InvalidConfig(m.to_string()));
        if self.max_steps == 0 {
            return bad("max_steps must be > 0");
        }
        if self.downsample_factor == 0 {
            return bad("downsample_factor must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return bad("lambda_ssim must lie in [0, 1]");
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return bad("beta must be >= 0");
        }
        if self.densify_interval == 0 || self.plateau_window == 0 || self.log_interval == 0 {
            return bad("intervals must be > 0");
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return bad("initial_opacity must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean objective over all training views before the first step.
    pub initial_loss: f64,
    /// Mean objective over all training views after the last step.
    pub final_loss: f64,
    /// Per-step loss of the sampled view.
    pub step_losses: Vec<f64>,
    /// `(step, loss)` on training view 0, every `log_interval` steps.
    pub held_in: Vec<(usize, f64)>,
    /// `(step, primitive count)` after every densification.
    pub counts: Vec<(usize, usize)>,
    pub stopped_on_plateau: bool,
}

/// Accumulated screen-space positional gradient per primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub visible: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self { sum: vec![0.0; n], visible: vec![0; n] }
    }

    pub fn record(&mut self, index: usize, mean2_grad: &Vector2<f64>, width: usize, height: usize) {
        let ndc = Vector2::new(mean2_grad.x * width as f64 * 0.5, mean2_grad.y * height as f64 * 0.5);
        self.sum[index] += ndc.norm();
        self.visible[index] += 1;
    }

    pub fn average(&self, index: usize) -> f64 {
        if self.visible[index] == 0 {
            0.0
        } else {
            self.sum[index] / self.visible[index] as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DensifyCounts {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

const SPLIT_SHRINK: f64 = 1.6;

/// Clones or splits high-gradient primitives, then prunes transparent ones.
/// Returns the origin of every primitive in the new field.
pub fn densify(
    field: &mut GaussianField,
    stats: &GradStats,
    cfg: &TrainConfig,
    extent: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<Origin>, DensifyCounts) {
    let mut counts = DensifyCounts::default();
    let mut prims = Vec::with_capacity(field.len());
    let mut origins = Vec::with_capacity(field.len());
    let mut budget = cfg.max_primitives.saturating_sub(field.len());
    let mut extra: Vec<GaussianPrimitive> = Vec::new();
    for (i, p) in field.primitives.iter().enumerate() {
        let hot = stats.average(i) >= cfg.densify_grad_threshold && stats.visible[i] > 0;
        if hot && budget > 0 {
            budget -= 1;
            if p.scale().max() <= cfg.percent_dense * extent {
                counts.cloned += 1;
                prims.push(p.clone());
                origins.push(Origin::Kept(i));
                extra.push(p.clone());
            } else {
                counts.split += 1;
                let rot = p.rotation_matrix();
                let s = p.scale();
                for _ in 0..2 {
                    let u: [f64; 3] = UnitBall.sample(rng);
                    let mut child = p.clone();
                    child.mean = p.mean + rot * s.component_mul(&Vector3::from(u));
                    child.log_scale = p.log_scale.add_scalar(-SPLIT_SHRINK.ln());
                    extra.push(child);
                }
            }
        } else {
            prims.push(p.clone());
            origins.push(Origin::Kept(i));
        }
    }
    origins.extend(std::iter::repeat_n(Origin::New, extra.len()));
    prims.extend(extra);

    let before = prims.len();
    let (kept_p, kept_o): (Vec<_>, Vec<_>) =
        prims.into_iter().zip(origins).filter(|(p, _)| p.opacity() >= cfg.prune_opacity).unzip();
    counts.pruned = before - kept_p.len();
    field.primitives = kept_p;
    (kept_o, counts)
}

/// 1.1 times the largest distance of a camera centre from their centroid.
pub fn scene_extent(cameras: &[CameraModel]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<Vector3<f64>> = cameras.iter().map(|c| c.center()).collect();
    let mid = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let r = centers.iter().map(|c| (c - mid).norm()).fold(0.0, f64::max);
    if r > 0.0 {
        1.1 * r
    } else {
        1.0
    }
}

/// One isotropic primitive per seed point, sized by the mean distance to its
/// three nearest neighbours.
pub fn initial_field(p0: &ColoredPointCloud, opacity: f64) -> GaussianField {
    let positions = p0.positions();
    let tree = KdTree::new(&positions);
    let fallback = (0.01 * p0.extent()).max(1e-3);
    let prims = positions
        .iter()
        .zip(&p0.points)
        .enumerate()
        .map(|(i, (x, pt))| {
            let nn = tree.knn_excluding(x, 3, i);
            let scale = if nn.is_empty() {
                fallback
            } else {
                nn.iter().map(|n| n.dist_sq.sqrt()).sum::<f64>() / nn.len() as f64
            };
            GaussianPrimitive::isotropic(*x, scale.max(1e-7), opacity, pt.color)
        })
        .collect();
    GaussianField::new(prims)
}

struct TrainView {
    camera: CameraModel,
    image: Image,
}

fn mean_objective(field: &GaussianField, views: &[TrainView], cfg: &TrainConfig) -> Result<f64, SplatError> {
    let mut total = 0.0;
    for v in views {
        total += objective(field, &v.camera, &v.image, cfg.lambda_ssim, cfg.beta, &cfg.render)?;
    }
    Ok(total / views.len() as f64)
}

/// Trains a field from `p0` on the original (unmasked) views.
pub fn train_lightweight(
    p0: &ColoredPointCloud,
    views: &[ViewImage],
    cfg: &TrainConfig,
) -> Result<(GaussianField, TrainReport), SplatError> {
    cfg.validate()?;
    if p0.is_empty() {
        return Err(SplatError::EmptySeed);
    }
    let train: Vec<TrainView> = views
        .iter()
        .filter(|v| !v.is_masked_variant)
        .map(|v| TrainView {
            camera: CameraModel::new(v.camera.intrinsics.downsampled(cfg.downsample_factor), v.camera.pose),
            image: v.image.downsample(cfg.downsample_factor),
        })
        .collect();
    if train.is_empty() {
        return Err(SplatError::NoViews);
    }
    let cameras: Vec<CameraModel> = train.iter().map(|v| v.camera).collect();
    let extent = scene_extent(&cameras);
    let mut field = initial_field(p0, cfg.initial_opacity);
    let mut adam = Adam::new(field.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = GradStats::new(field.len());
    let mut report = TrainReport { counts: vec![(0, field.len())], ..Default::default() };
    report.initial_loss = mean_objective(&field, &train, cfg)?;
    let held_in = |f: &GaussianField| objective(f, &train[0].camera, &train[0].image, cfg.lambda_ssim, cfg.beta, &cfg.render);
    report.held_in.push((0, held_in(&field)?));

    let mut order: Vec<usize> = Vec::new();
    for step in 0..cfg.max_steps {
        if order.is_empty() {
            order = (0..train.len()).collect();
            order.shuffle(&mut rng);
        }
        let view = &train[order.pop().expect("non-empty order")];
        let (loss, grad, out) = loss_and_gradient(&field, &view.camera, &view.image, cfg.lambda_ssim, cfg.beta, &cfg.render)?;
        report.step_losses.push(loss);
        for p in &out.projected {
            stats.record(p.index, &grad.mean2[p.index], view.camera.width(), view.camera.height());
        }
        adam.step(&mut field, &grad, &cfg.lr, cfg.lr.mean_at(step, cfg.max_steps, extent));
        let done = step + 1;
        report.steps = done;

        if done % cfg.log_interval == 0 {
            report.held_in.push((done, held_in(&field)?));
        }
        if done % cfg.densify_interval == 0 && done < cfg.max_steps {
            let (origins, counts) = densify(&mut field, &stats, cfg, extent, &mut rng);
            log::debug!("step {done}: densify {counts:?}, {} primitives", field.len());
            adam.remap(&origins);
            stats = GradStats::new(field.len());
            report.counts.push((done, field.len()));
            if field.is_empty() {
                return Err(SplatError::EmptySeed);
            }
            if cfg.early_stop && done >= cfg.plateau_window {
                let then = report.counts.iter().rev().find(|(s, _)| *s <= done - cfg.plateau_window).map(|c| c.1);
                if let Some(then) = then {
                    let growth = (field.len() as f64 - then as f64) / then as f64;
                    if growth < cfg.plateau_growth {
                        log::info!("densification plateau at step {done} (growth {growth:.4})");
                        report.stopped_on_plateau = true;
                        break;
                    }
                }
            }
        }
    }
    field.iteration = report.steps;
    report.final_loss = mean_objective(&field, &train, cfg)?;
    Ok((field, report))
}

/// Primitive centres and DC colors as a point cloud, each tagged with the
/// cameras whose frustum contains it.
pub fn extract_p1(field: &GaussianField, cameras: &[CameraModel]) -> ColoredPointCloud {
    let points = field
        .primitives
        .iter()
        .map(|p| {
            let color = [p.color[0].clamp(0.0, 1.0), p.color[1].clamp(0.0, 1.0), p.color[2].clamp(0.0, 1.0)];
            let mut pt = CloudPoint::new(p.mean, color, Provenance::SelfInit);
            pt.support_views = cameras.iter().enumerate().filter(|(_, c)| c.sees(&p.mean)).map(|(i, _)| i).collect();
            pt
        })
        .collect();
    ColoredPointCloud::new(points)
}
