//! End-to-end seed construction: augmented SfM (P0), self-initialisation
//! (P1), merge, and regularisation.

use crate::cloud::{merge, ColoredPointCloud};
use crate::geometry::CameraModel;
use crate::regularize::{regularize, RegularizeError, RegularizeParams, StageReport};
use crate::sfm::{cameras_of, reconstruct_p0, SfmConfig, SfmError, SfmOutput, ViewImage};
use crate::splat::{extract_p1, train_lightweight, GaussianField, SplatError, TrainConfig, TrainReport};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("reconstruction: {0}")]
    Sfm(#[from] SfmError),
    #[error("self-initialisation: {0}")]
    Splat(#[from] SplatError),
    #[error("regularisation: {0}")]
    Regularize(#[from] RegularizeError),
    #[error("invalid view budget {budget} (have {available} views, minimum 2)")]
    InvalidBudget { budget: usize, available: usize },
    #[error("{0}")]
    Metric(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sfm: SfmConfig,
    pub selfinit: TrainConfig,
    pub regularize: RegularizeParams,
    /// Fixed-budget training used when evaluating a seed cloud.
    pub eval_train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sfm: SfmConfig::default(),
            selfinit: TrainConfig::default(),
            regularize: RegularizeParams::default(),
            eval_train: TrainConfig { max_steps: 600, early_stop: false, ..TrainConfig::default() },
            seed: 42,
        }
    }
}

impl PipelineConfig {
    /// Propagates `seed` to every randomised stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.selfinit.seed = seed;
        self.regularize.seed = seed;
        self.eval_train.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub p0: SfmOutput,
    pub field: GaussianField,
    pub train_report: TrainReport,
    pub p1: ColoredPointCloud,
    pub p_init: ColoredPointCloud,
    pub regularized: ColoredPointCloud,
    pub stages: StageReport,
}

/// Self-initialisation from an existing P0: trains the lightweight field and
/// extracts P1.
pub fn self_initialize(
    p0: &ColoredPointCloud,
    views: &[ViewImage],
    cfg: &TrainConfig,
) -> Result<(GaussianField, TrainReport, ColoredPointCloud), PipelineError> {
    let (field, report) = train_lightweight(p0, views, cfg)?;
    let p1 = extract_p1(&field, &cameras_of(views));
    Ok((field, report, p1))
}

pub fn run_pipeline(views: &[ViewImage], cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let p0 = reconstruct_p0(views, &cfg.sfm)?;
    log::info!("P0: {} points from {} tracks", p0.cloud.len(), p0.tracks.len());
    let (field, train_report, p1) = self_initialize(&p0.cloud, views, &cfg.selfinit)?;
    log::info!(
        "self-init: {} steps, loss {:.4} -> {:.4}, {} primitives",
        train_report.steps,
        train_report.initial_loss,
        train_report.final_loss,
        field.len()
    );
    let p_init = merge(&p0.cloud, &p1);
    let cameras: Vec<CameraModel> = cameras_of(views);
    let (regularized, stages) = regularize(&p_init, &cameras, &cfg.regularize)?;
    Ok(PipelineOutput { p0, field, train_report, p1, p_init, regularized, stages })
}
