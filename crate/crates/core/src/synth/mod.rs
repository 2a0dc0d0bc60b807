//! Synthetic ground truth, metrics and evaluation harness.

pub mod harness;
pub mod metrics;
pub mod scene;

pub use harness::{init_strength_experiment, paired_eval, pipeline_eval, strength_csv, strength_gnuplot, PairedEval, StrengthRow};
pub use metrics::{chamfer, psnr, MetricReport};
pub use scene::{builtin, generate_scene, SceneSpec, SyntheticScene};
