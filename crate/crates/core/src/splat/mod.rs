//! Differentiable Gaussian splatting on the CPU: field representation,
//! rasteriser with analytic gradients, photometric loss, and the lightweight
//! self-initialisation trainer that turns a seed cloud into extra points.

pub mod field;
pub mod loss;
pub mod optim;
pub mod render;
pub mod train;

pub use field::{GaussianField, GaussianPrimitive};
pub use loss::{d_ssim, photometric_loss, ssim};
pub use render::{backward, render, render_with, FieldGradient, RenderOptions, RenderOutput};
pub use train::{densify, extract_p1, train_lightweight, TrainConfig, TrainReport};

use crate::geometry::CameraModel;
use crate::image::{Image, ImageError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplatError {
    #[error("seed cloud is empty")]
    EmptySeed,
    #[error("no training views")]
    NoViews,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Scale-magnitude prior: mean over primitives of the summed axis lengths.
pub fn scale_regularizer(field: &GaussianField) -> f64 {
    if field.is_empty() {
        return 0.0;
    }
    field.primitives.iter().map(|p| p.scale().sum()).sum::<f64>() / field.len() as f64
}

/// Full objective `(1 - lambda) L1 + lambda D-SSIM + beta R_reg` for one view
/// and its gradient with respect to every primitive parameter.
pub fn loss_and_gradient(
    field: &GaussianField,
    camera: &CameraModel,
    gt: &Image,
    lambda_ssim: f64,
    beta: f64,
    opts: &RenderOptions,
) -> Result<(f64, FieldGradient, RenderOutput), SplatError> {
    let out = render_with(field, camera, opts);
    let (mut loss, d_image) = loss::photometric_loss_with_grad(&out.image, gt, lambda_ssim)?;
    let mut grad = backward(field, camera, &out, &d_image);
    if beta > 0.0 && !field.is_empty() {
        loss += beta * scale_regularizer(field);
        let m = field.len() as f64;
        for (g, p) in grad.log_scale.iter_mut().zip(&field.primitives) {
            *g += p.scale() * (beta / m);
        }
    }
    Ok((loss, grad, out))
}

/// Objective value only.
pub fn objective(
    field: &GaussianField,
    camera: &CameraModel,
    gt: &Image,
    lambda_ssim: f64,
    beta: f64,
    opts: &RenderOptions,
) -> Result<f64, SplatError> {
    let img = render_with(field, camera, opts).image;
    let mut loss = photometric_loss(&img, gt, lambda_ssim)?;
    if beta > 0.0 {
        loss += beta * scale_regularizer(field);
    }
    Ok(loss)
}
