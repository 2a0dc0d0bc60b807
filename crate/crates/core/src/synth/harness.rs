//! Evaluation drivers: held-out split, seed evaluation, pipeline metrics and
//! the initialisation-strength sweep.

use super::metrics::{chamfer, psnr, MetricReport};
use super::scene::SyntheticScene;
use crate::cloud::ColoredPointCloud;
use crate::geometry::CameraModel;
use crate::image::Image;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineError, PipelineOutput};
use crate::sfm::ViewImage;
use crate::splat::{self, loss::ssim, train_lightweight, TrainConfig};
use nalgebra::Vector3;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Number of ground-truth surface samples used for chamfer.
pub const GT_SAMPLES: usize = 4000;

/// `(train, test)` view indices; every `holdout`-th view (starting at 0) is held out.
pub fn holdout_split(n: usize, holdout: usize) -> (Vec<usize>, Vec<usize>) {
    if holdout < 2 {
        return ((0..n).collect(), Vec::new());
    }
    (0..n).partition(|i| i % holdout != 0)
}

/// Views for the given indices, renumbered `0..`.
pub fn select_views(scene: &SyntheticScene, images: &[Image], indices: &[usize]) -> Vec<ViewImage> {
    indices.iter().enumerate().map(|(k, &i)| ViewImage::new(k, images[i].clone(), scene.cameras[i])).collect()
}

/// `n` of `available` ordered arc positions, evenly spaced in arc length and
/// always including both ends.
pub fn arc_uniform_subset(available: usize, n: usize) -> Result<Vec<usize>, PipelineError> {
    if n < 2 || n > available {
        return Err(PipelineError::InvalidBudget { budget: n, available });
    }
    Ok((0..n).map(|i| ((i * (available - 1)) as f64 / (n - 1) as f64).round() as usize).collect())
}

/// Trains a fixed-budget field from `seed_cloud` on `train` and reports mean
/// PSNR and SSIM on `test` at the training resolution.
pub fn evaluate_seed(
    seed_cloud: &ColoredPointCloud,
    train: &[ViewImage],
    test: &[(CameraModel, Image)],
    cfg: &TrainConfig,
) -> Result<(f64, f64), PipelineError> {
    let (field, _) = train_lightweight(seed_cloud, train, cfg)?;
    if test.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (cam, img) in test {
        let cam = CameraModel::new(cam.intrinsics.downsampled(cfg.downsample_factor), cam.pose);
        let gt = img.downsample(cfg.downsample_factor);
        let mut rendered = splat::render_with(&field, &cam, &cfg.render).image;
        rendered.clamp01();
        p += psnr(&rendered, &gt).map_err(|e| PipelineError::Metric(e.to_string()))?;
        s += ssim(&rendered, &gt).map_err(|e| PipelineError::Metric(e.to_string()))?;
    }
    Ok((p / test.len() as f64, s / test.len() as f64))
}

pub fn ground_truth_points(scene: &SyntheticScene) -> Vec<Vector3<f64>> {
    scene.surface_samples(GT_SAMPLES, scene.seed ^ 0x5EED).into_iter().map(|s| s.0).collect()
}

pub fn cloud_chamfer(cloud: &ColoredPointCloud, gt: &[Vector3<f64>]) -> Result<f64, PipelineError> {
    chamfer(&cloud.positions(), gt).map_err(|e| PipelineError::Metric(e.to_string()))
}

/// Runs the pipeline on the training split and evaluates the regularised
/// seed on the held-out views.
pub fn pipeline_eval(
    scene: &SyntheticScene,
    images: &[Image],
    cfg: &PipelineConfig,
) -> Result<(MetricReport, PipelineOutput), PipelineError> {
    let (train_idx, test_idx) = holdout_split(images.len(), scene.spec.holdout);
    let train = select_views(scene, images, &train_idx);
    let test: Vec<(CameraModel, Image)> = test_idx.iter().map(|&i| (scene.cameras[i], images[i].clone())).collect();
    let out = run_pipeline(&train, cfg)?;
    let (psnr, ssim) = evaluate_seed(&out.regularized, &train, &test, &cfg.eval_train)?;
    let gt = ground_truth_points(scene);
    let report = MetricReport {
        psnr,
        ssim,
        chamfer: cloud_chamfer(&out.regularized, &gt)?,
        point_count: out.regularized.len(),
        stages: Some(out.stages.clone()),
    };
    Ok((report, out))
}

/// Regularized seed and raw SfM seed evaluated under the same training budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEval {
    pub regularized: MetricReport,
    pub raw: MetricReport,
    /// Chamfer distance of the unregularized union `P0 + P1`.
    pub p_init_chamfer: f64,
}

pub fn paired_eval(scene: &SyntheticScene, images: &[Image], cfg: &PipelineConfig) -> Result<PairedEval, PipelineError> {
    let (regularized, out) = pipeline_eval(scene, images, cfg)?;
    let (train_idx, test_idx) = holdout_split(images.len(), scene.spec.holdout);
    let train = select_views(scene, images, &train_idx);
    let test: Vec<(CameraModel, Image)> = test_idx.iter().map(|&i| (scene.cameras[i], images[i].clone())).collect();
    let (psnr, ssim) = evaluate_seed(&out.p0.cloud, &train, &test, &cfg.eval_train)?;
    let gt = ground_truth_points(scene);
    let raw = MetricReport {
        psnr,
        ssim,
        chamfer: cloud_chamfer(&out.p0.cloud, &gt)?,
        point_count: out.p0.cloud.len(),
        stages: None,
    };
    Ok(PairedEval { regularized, raw, p_init_chamfer: cloud_chamfer(&out.p_init, &gt)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrengthRow {
    pub budget: usize,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub chamfer: f64,
    pub points: usize,
}

/// For each budget, reconstructs the seed from an arc-uniform subset of the
/// training views, then trains with a fixed budget on all training views and
/// reports held-out quality. `None` as a budget means all training views.
pub fn init_strength_experiment(
    scene: &SyntheticScene,
    images: &[Image],
    budgets: &[Option<usize>],
    seeds: &[u64],
    cfg: &PipelineConfig,
) -> Result<Vec<StrengthRow>, PipelineError> {
    let (train_idx, test_idx) = holdout_split(images.len(), scene.spec.holdout);
    let train = select_views(scene, images, &train_idx);
    let test: Vec<(CameraModel, Image)> = test_idx.iter().map(|&i| (scene.cameras[i], images[i].clone())).collect();
    let gt = ground_truth_points(scene);
    let mut cells = Vec::new();
    for b in budgets {
        let n = b.unwrap_or(train.len());
        let subset = arc_uniform_subset(train.len(), n)?;
        for &s in seeds {
            cells.push((n, s, subset.clone()));
        }
    }
    cells
        .par_iter()
        .map(|(n, s, subset)| {
            let cfg = cfg.clone().with_seed(*s);
            let views: Vec<ViewImage> = subset
                .iter()
                .enumerate()
                .map(|(k, &i)| ViewImage::new(k, train[i].image.clone(), train[i].camera))
                .collect();
            let out = run_pipeline(&views, &cfg)?;
            let (psnr, ssim) = evaluate_seed(&out.regularized, &train, &test, &cfg.eval_train)?;
            Ok(StrengthRow {
                budget: *n,
                seed: *s,
                psnr,
                ssim,
                chamfer: cloud_chamfer(&out.regularized, &gt)?,
                points: out.regularized.len(),
            })
        })
        .collect()
}

/// CSV with a leading `#` provenance block.
pub fn strength_csv(rows: &[StrengthRow], provenance: &[String]) -> String {
    let mut s = String::new();
    for line in provenance {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("budget,seed,psnr,ssim,chamfer,points\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.6},{:.6},{:.6},{}", r.budget, r.seed, r.psnr, r.ssim, r.chamfer, r.points);
    }
    s
}

/// Whitespace-separated columns for plotting budget against PSNR.
pub fn strength_gnuplot(rows: &[StrengthRow], provenance: &[String]) -> String {
    let mut s = String::new();
    for line in provenance {
        let _ = writeln!(s, "# {line}");
    }
    s.push_str("# budget psnr ssim chamfer points seed\n");
    for r in rows {
        let _ = writeln!(s, "{} {:.6} {:.6} {:.6} {} {}", r.budget, r.psnr, r.ssim, r.chamfer, r.points, r.seed);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_holds_out_every_eighth() {
        let (train, test) = holdout_split(12, 8);
        assert_eq!(test, vec![0, 8]);
        assert_eq!(train.len(), 10);
        assert_eq!(holdout_split(5, 0).1, Vec::<usize>::new());
    }

    #[test]
    fn arc_subsets() {
        assert_eq!(arc_uniform_subset(10, 2).unwrap(), vec![0, 9]);
        assert_eq!(arc_uniform_subset(10, 4).unwrap(), vec![0, 3, 6, 9]);
        assert_eq!(arc_uniform_subset(10, 10).unwrap(), (0..10).collect::<Vec<_>>());
        assert!(arc_uniform_subset(10, 1).is_err());
        assert!(arc_uniform_subset(10, 11).is_err());
    }

    #[test]
    fn csv_layout() {
        let rows = vec![StrengthRow { budget: 4, seed: 42, psnr: 20.0, ssim: 0.5, chamfer: 0.1, points: 10 }];
        let csv = strength_csv(&rows, &["config_hash=abc".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config_hash=abc");
        assert_eq!(lines[1], "budget,seed,psnr,ssim,chamfer,points");
        assert!(lines[2].starts_with("4,42,20.000000,"));
    }
}
