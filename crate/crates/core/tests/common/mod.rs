#![allow(dead_code)]

use nalgebra::{Vector2, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seedcloud::geometry::{CameraIntrinsics, CameraModel, CameraPose};
use seedcloud::image::Image;
use seedcloud::splat::{self, GaussianField, GaussianPrimitive, RenderOptions};

pub mod outliers;
pub mod scenes;
pub mod sparse;
pub mod tracks;

/// Fixture directory, resolved from any crate under `crates/`.
pub fn fixture_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

pub const FD_STEP: f64 = 1e-4;
pub const LAMBDA: f64 = 0.2;

pub struct SplatFixture {
    pub field: GaussianField,
    pub camera: CameraModel,
    pub gt: Image,
}

fn near_cutoff(field: &GaussianField, camera: &CameraModel, margin: f64) -> bool {
    let k = &camera.intrinsics;
    let w = camera.pose.rotation_matrix();
    for p in &field.primitives {
        let c = camera.to_camera(&p.mean);
        let j = nalgebra::Matrix2x3::new(k.fx / c.z, 0.0, -k.fx * c.x / (c.z * c.z), 0.0, k.fy / c.z, -k.fy * c.y / (c.z * c.z));
        let t = j * w;
        let cov2 = t * p.covariance() * t.transpose() + nalgebra::Matrix2::identity() * 0.3;
        let q = cov2.try_inverse().unwrap();
        let m = Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy);
        for y in 0..k.height {
            for x in 0..k.width {
                let d = Vector2::new(x as f64, y as f64) - m;
                let d2 = (d.transpose() * q * d)[0];
                if (d2 - 9.0).abs() < margin {
                    return true;
                }
            }
        }
    }
    false
}

/// Random 5-primitive field in front of a 16x16 camera, with a target image
/// offset from the render so no pixel sits on the L1 kink. Fixtures with a
/// pixel near a footprint cutoff or near-equal depths are rejected.
pub fn splat_fixture(seed: u64) -> SplatFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = CameraIntrinsics::new(18.0, 18.0, 7.5, 7.5, 16, 16).unwrap();
    let camera = CameraModel::new(k, CameraPose::identity());
    loop {
        let mut depths: Vec<f64> = (0..5).map(|_| rng.random_range(2.5..5.0)).collect();
        depths.sort_by(f64::total_cmp);
        if depths.windows(2).any(|w| w[1] - w[0] < 0.05) {
            continue;
        }
        let prims: Vec<GaussianPrimitive> = depths
            .iter()
            .map(|&z| {
                let mean = Vector3::new(rng.random_range(-0.3..0.3) * z, rng.random_range(-0.3..0.3) * z, z);
                let log_scale = Vector3::from_fn(|_, _| rng.random_range(0.1f64..0.4).ln());
                let rotation = Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
                let opacity: f64 = rng.random_range(0.2..0.8);
                let color = Vector3::from_fn(|_, _| rng.random_range(0.0..1.0));
                GaussianPrimitive { mean, log_scale, rotation, opacity_logit: (opacity / (1.0 - opacity)).ln(), color }
            })
            .collect();
        let field = GaussianField::new(prims);
        if near_cutoff(&field, &camera, 0.05) {
            continue;
        }
        let rendered = splat::render(&field, &camera);
        let mut gt = rendered.clone();
        for v in gt.data_mut() {
            let off = rng.random_range(0.05..0.25);
            *v += if rng.random_bool(0.5) { off } else { -off };
        }
        return SplatFixture { field, camera, gt };
    }
}

fn params(p: &GaussianPrimitive) -> [f64; 14] {
    let (m, s, r, c) = (p.mean, p.log_scale, p.rotation, p.color);
    [m[0], m[1], m[2], s[0], s[1], s[2], r[0], r[1], r[2], r[3], p.opacity_logit, c[0], c[1], c[2]]
}

fn set_param(p: &mut GaussianPrimitive, k: usize, v: f64) {
    match k {
        0..=2 => p.mean[k] = v,
        3..=5 => p.log_scale[k - 3] = v,
        6..=9 => p.rotation[k - 6] = v,
        10 => p.opacity_logit = v,
        _ => p.color[k - 11] = v,
    }
}

/// Max relative error between analytic and central-difference gradients,
/// with the denominator floored at 1e-3 of the largest numeric gradient.
pub fn max_gradient_error(f: &SplatFixture) -> f64 {
    let opts = RenderOptions::default();
    let (_, grad, _) = splat::loss_and_gradient(&f.field, &f.camera, &f.gt, LAMBDA, 0.0, &opts).unwrap();
    let loss = |field: &GaussianField| splat::objective(field, &f.camera, &f.gt, LAMBDA, 0.0, &opts).unwrap();
    let mut pairs = Vec::new();
    for i in 0..f.field.len() {
        let base = params(&f.field.primitives[i]);
        let analytic = {
            let (m, s, r, c) = (grad.mean[i], grad.log_scale[i], grad.rotation[i], grad.color[i]);
            [m[0], m[1], m[2], s[0], s[1], s[2], r[0], r[1], r[2], r[3], grad.opacity_logit[i], c[0], c[1], c[2]]
        };
        for k in 0..14 {
            let mut plus = f.field.clone();
            set_param(&mut plus.primitives[i], k, base[k] + FD_STEP);
            let mut minus = f.field.clone();
            set_param(&mut minus.primitives[i], k, base[k] - FD_STEP);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            pairs.push((analytic[k], numeric));
        }
    }
    let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    pairs.iter().map(|&(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale)).fold(0.0, f64::max)
}
