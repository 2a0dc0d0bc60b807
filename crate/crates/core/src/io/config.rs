//! Flat `key = value` configuration covering every pipeline tunable.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Unknown keys are rejected. The canonical text form written by
//! [`to_text`] lists every key in a fixed order and parses back to the same
//! config, and its SHA-256 is the config hash stamped on output files.

use crate::pipeline::PipelineConfig;
use crate::sfm::FillMode;
use crate::splat::TrainConfig;
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

trait Value {
    fn parse_from(&mut self, s: &str) -> Option<()>;
    fn render(&self) -> String;
}

impl Value for f64 {
    fn parse_from(&mut self, s: &str) -> Option<()> {
        let v: f64 = s.parse().ok()?;
        v.is_finite().then(|| *self = v)
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl Value for usize {
    fn parse_from(&mut self, s: &str) -> Option<()> {
        *self = s.parse().ok()?;
        Some(())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for u64 {
    fn parse_from(&mut self, s: &str) -> Option<()> {
        *self = s.parse().ok()?;
        Some(())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl Value for bool {
    fn parse_from(&mut self, s: &str) -> Option<()> {
        *self = s.parse().ok()?;
        Some(())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// `mean` or `r,g,b`.
impl Value for FillMode {
    fn parse_from(&mut self, s: &str) -> Option<()> {
        if s == "mean" {
            *self = FillMode::ImageMean;
            return Some(());
        }
        let parts: Vec<f64> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
        let rgb: [f64; 3] = parts.try_into().ok()?;
        rgb.iter().all(|c| (0.0..=1.0).contains(c)).then(|| *self = FillMode::Constant(rgb))
    }
    fn render(&self) -> String {
        match self {
            FillMode::ImageMean => "mean".into(),
            FillMode::Constant(c) => format!("{:?},{:?},{:?}", c[0], c[1], c[2]),
        }
    }
}

type Entries<'a> = Vec<(String, &'a mut dyn Value)>;

fn train_entries<'a>(prefix: &str, t: &'a mut TrainConfig, out: &mut Entries<'a>) {
    let fields: Vec<(&str, &'a mut dyn Value)> = vec![
        ("max_steps", &mut t.max_steps),
        ("downsample_factor", &mut t.downsample_factor),
        ("lambda_ssim", &mut t.lambda_ssim),
        ("beta", &mut t.beta),
        ("densify_interval", &mut t.densify_interval),
        ("densify_grad_threshold", &mut t.densify_grad_threshold),
        ("percent_dense", &mut t.percent_dense),
        ("prune_opacity", &mut t.prune_opacity),
        ("max_primitives", &mut t.max_primitives),
        ("plateau_window", &mut t.plateau_window),
        ("plateau_growth", &mut t.plateau_growth),
        ("early_stop", &mut t.early_stop),
        ("log_interval", &mut t.log_interval),
        ("initial_opacity", &mut t.initial_opacity),
        ("lr.mean_init", &mut t.lr.mean_init),
        ("lr.mean_final", &mut t.lr.mean_final),
        ("lr.log_scale", &mut t.lr.log_scale),
        ("lr.rotation", &mut t.lr.rotation),
        ("lr.opacity", &mut t.lr.opacity),
        ("lr.color", &mut t.lr.color),
        ("render.blur", &mut t.render.blur),
        ("render.near", &mut t.render.near),
        ("render.cutoff_sigma", &mut t.render.cutoff_sigma),
    ];
    out.extend(fields.into_iter().map(|(k, v)| (format!("{prefix}.{k}"), v)));
}

fn entries(c: &mut PipelineConfig) -> Entries<'_> {
    let s = &mut c.sfm;
    let mut out: Entries<'_> = vec![
        ("seed".into(), &mut c.seed),
        ("sfm.percentile".into(), &mut s.percentile),
        ("sfm.fill".into(), &mut s.fill),
        ("sfm.augment".into(), &mut s.augment),
        ("sfm.max_reprojection_error".into(), &mut s.max_reprojection_error),
        ("sfm.harris.max_corners".into(), &mut s.harris.max_corners),
        ("sfm.harris.k".into(), &mut s.harris.k),
        ("sfm.harris.relative_threshold".into(), &mut s.harris.relative_threshold),
        ("sfm.harris.absolute_threshold".into(), &mut s.harris.absolute_threshold),
        ("sfm.harris.nms_radius".into(), &mut s.harris.nms_radius),
        ("sfm.harris.border".into(), &mut s.harris.border),
        ("sfm.harris.mask_guard".into(), &mut s.harris.mask_guard),
        ("sfm.match.epipolar_threshold".into(), &mut s.matching.epipolar_threshold),
        ("sfm.match.zncc_threshold".into(), &mut s.matching.zncc_threshold),
        ("sfm.match.patch_radius".into(), &mut s.matching.patch_radius),
        ("sfm.match.same_view_tolerance".into(), &mut s.matching.same_view_tolerance),
        ("sfm.refine.min_track".into(), &mut s.refine.min_track),
        ("sfm.refine.huber_delta".into(), &mut s.refine.huber_delta),
        ("sfm.refine.max_iters".into(), &mut s.refine.max_iters),
        ("sfm.refine.step_tolerance".into(), &mut s.refine.step_tolerance),
        ("sfm.refine.initial_damping".into(), &mut s.refine.initial_damping),
        ("sfm.refine.min_ray_angle".into(), &mut s.refine.min_ray_angle),
    ];
    train_entries("selfinit", &mut c.selfinit, &mut out);
    let r = &mut c.regularize;
    let reg: Entries<'_> = vec![
        ("regularize.keep_single_view".into(), &mut r.keep_single_view),
        ("regularize.kmeans_k".into(), &mut r.kmeans_k),
        ("regularize.keep_cluster".into(), &mut r.keep_cluster),
        ("regularize.k_neighbors".into(), &mut r.k_neighbors),
        ("regularize.normal_threshold".into(), &mut r.normal_threshold),
    ];
    out.extend(reg);
    train_entries("eval", &mut c.eval_train, &mut out);
    out
}

/// All recognised keys in canonical order.
pub fn keys() -> Vec<String> {
    let mut c = PipelineConfig::default();
    entries(&mut c).into_iter().map(|(k, _)| k).collect()
}

/// Sets one key. The top-level `seed` is propagated to every stage.
pub fn set(cfg: &mut PipelineConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    let mut list = entries(cfg);
    let (_, slot) = list
        .iter_mut()
        .find(|(k, _)| k == key)
        .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
    slot.parse_from(value.trim())
        .ok_or_else(|| ConfigError::InvalidValue { key: key.to_string(), value: value.to_string() })?;
    drop(list);
    if key == "seed" {
        *cfg = cfg.clone().with_seed(cfg.seed);
    }
    Ok(())
}

/// Applies `key = value` lines on top of `base`.
pub fn apply_text(base: &PipelineConfig, text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = base.clone();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
        set(&mut cfg, k.trim(), v)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn parse(text: &str) -> Result<PipelineConfig, ConfigError> {
    apply_text(&PipelineConfig::default(), text)
}

pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn validate(cfg: &PipelineConfig) -> Result<(), ConfigError> {
    let invalid = |m: String| Err(ConfigError::Invalid(m));
    if !(cfg.sfm.percentile > 0.0 && cfg.sfm.percentile <= 100.0) {
        return invalid(format!("sfm.percentile {} outside (0, 100]", cfg.sfm.percentile));
    }
    if cfg.sfm.harris.max_corners == 0 {
        return invalid("sfm.harris.max_corners must be > 0".into());
    }
    if cfg.sfm.refine.min_track < 2 {
        return invalid("sfm.refine.min_track must be >= 2".into());
    }
    let r = &cfg.regularize;
    for (name, f) in [("keep_single_view", r.keep_single_view), ("keep_cluster", r.keep_cluster)] {
        if !(0.0..=1.0).contains(&f) {
            return invalid(format!("regularize.{name} {f} outside [0, 1]"));
        }
    }
    if !(-1.0..=1.0).contains(&r.normal_threshold) {
        return invalid(format!("regularize.normal_threshold {} outside [-1, 1]", r.normal_threshold));
    }
    if r.kmeans_k == 0 || r.k_neighbors == 0 {
        return invalid("regularize.kmeans_k and regularize.k_neighbors must be > 0".into());
    }
    for (name, t) in [("selfinit", &cfg.selfinit), ("eval", &cfg.eval_train)] {
        t.validate().map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))?;
    }
    Ok(())
}

/// Canonical text form: every key, one per line, in [`keys`] order.
pub fn to_text(cfg: &PipelineConfig) -> String {
    let mut c = cfg.clone();
    entries(&mut c).into_iter().map(|(k, v)| format!("{k} = {}\n", v.render())).collect()
}

/// Hex SHA-256 of the canonical text form.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    hex::encode(Sha256::digest(to_text(cfg).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::RegularizeParams;
    use crate::sfm::SfmConfig;

    #[test]
    fn empty_text_gives_module_defaults() {
        let cfg = parse("# nothing set\n\n").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.sfm, SfmConfig::default());
        assert_eq!(cfg.selfinit, TrainConfig::default());
        assert_eq!(cfg.regularize, RegularizeParams::default());
        assert_eq!(cfg.regularize.kmeans_k, 1000);
        assert_eq!(cfg.regularize.keep_single_view, 0.2);
        assert_eq!(cfg.regularize.keep_cluster, 0.3);
        assert_eq!(cfg.regularize.normal_threshold, 0.2);
        assert_eq!(cfg.regularize.k_neighbors, 10);
        assert_eq!(cfg.selfinit.lambda_ssim, 0.2);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = PipelineConfig::default().with_seed(7);
        cfg.sfm.fill = FillMode::Constant([0.1, 0.2, 0.3]);
        cfg.regularize.keep_cluster = 0.45;
        cfg.selfinit.lr.color = 1.0 / 3.0;
        let text = to_text(&cfg);
        assert_eq!(text.lines().count(), keys().len());
        assert_eq!(parse(&text).unwrap(), cfg);
        assert_eq!(config_hash(&parse(&text).unwrap()), config_hash(&cfg));
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(parse("regularize.kmeans = 10"), Err(ConfigError::UnknownKey(k)) if k == "regularize.kmeans"));
    }

    #[test]
    fn bad_values_and_syntax() {
        assert!(matches!(parse("seed = -1"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(parse("sfm.augment = yes"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse("regularize.keep_cluster = 1.5"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse("selfinit.max_steps = 0"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn seed_propagates_to_stages() {
        let cfg = parse("seed = 9").unwrap();
        assert_eq!((cfg.selfinit.seed, cfg.regularize.seed, cfg.eval_train.seed), (9, 9, 9));
    }

    #[test]
    fn hash_changes_with_any_value() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.eval_train.render.blur = 0.31;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
