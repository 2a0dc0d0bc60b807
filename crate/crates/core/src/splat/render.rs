//! Software splat rasteriser and its analytic backward pass.
//!
//! Primitives are projected with the first-order (EWA) approximation, sorted
//! by camera-frame depth of their means and alpha-composited front to back
//! over a black background. The forward pass records every
//! (pixel, primitive, alpha, transmittance) contribution so the backward pass
//! can replay them in reverse without dividing by `1 - alpha`.

use super::field::{quat_to_matrix, GaussianField};
use crate::geometry::CameraModel;
use crate::image::Image;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector4};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Isotropic screen-space blur added to every projected covariance (px²).
    pub blur: f64,
    /// Primitives with camera depth at or below this are culled.
    pub near: f64,
    /// Footprint truncation radius in standard deviations.
    pub cutoff_sigma: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { blur: 0.3, near: 0.01, cutoff_sigma: 3.0 }
    }
}

/// Screen-space footprint of one primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected {
    pub index: usize,
    pub cam: Vector3<f64>,
    pub mean2: Vector2<f64>,
    pub jacobian: Matrix2x3<f64>,
    pub cov3: Matrix3<f64>,
    pub conic: Matrix2<f64>,
    pub opacity: f64,
    pub color: Vector3<f64>,
    x_range: (usize, usize),
    y_range: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Record {
    pixel: u32,
    slot: u32,
    alpha: f64,
    transmittance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    /// Transmittance left at each pixel after compositing.
    pub transmittance: Vec<f64>,
    /// Visible primitives in compositing order.
    pub projected: Vec<Projected>,
    records: Vec<Record>,
}

impl RenderOutput {
    pub fn contribution_count(&self) -> usize {
        self.records.len()
    }
}

/// Per-primitive gradients, indexed like `field.primitives`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub mean: Vec<Vector3<f64>>,
    pub log_scale: Vec<Vector3<f64>>,
    pub rotation: Vec<Vector4<f64>>,
    pub opacity_logit: Vec<f64>,
    pub color: Vec<Vector3<f64>>,
    /// Gradient of the projected 2D mean, used as the densification signal.
    pub mean2: Vec<Vector2<f64>>,
}

impl FieldGradient {
    pub fn zeros(n: usize) -> Self {
        Self {
            mean: vec![Vector3::zeros(); n],
            log_scale: vec![Vector3::zeros(); n],
            rotation: vec![Vector4::zeros(); n],
            opacity_logit: vec![0.0; n],
            color: vec![Vector3::zeros(); n],
            mean2: vec![Vector2::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

fn projection_jacobian(cam: &Vector3<f64>, fx: f64, fy: f64) -> Matrix2x3<f64> {
    let (x, y, z) = (cam.x, cam.y, cam.z);
    Matrix2x3::new(fx / z, 0.0, -fx * x / (z * z), 0.0, fy / z, -fy * y / (z * z))
}

fn project_all(field: &GaussianField, camera: &CameraModel, opts: &RenderOptions) -> Vec<Projected> {
    let k = &camera.intrinsics;
    let w_rot = camera.pose.rotation_matrix();
    let (w, h) = (k.width as f64, k.height as f64);
    let mut out: Vec<Projected> = field
        .primitives
        .par_iter()
        .enumerate()
        .filter_map(|(index, p)| {
            let cam = camera.to_camera(&p.mean);
            if !(cam.z > opts.near) {
                return None;
            }
            let jacobian = projection_jacobian(&cam, k.fx, k.fy);
            let t = jacobian * w_rot;
            let cov3 = p.covariance();
            let cov2 = t * cov3 * t.transpose() + Matrix2::identity() * opts.blur;
            let conic = cov2.try_inverse()?;
            let mean2 = Vector2::new(k.fx * cam.x / cam.z + k.cx, k.fy * cam.y / cam.z + k.cy);
            let (a, b, c) = (cov2[(0, 0)], cov2[(0, 1)], cov2[(1, 1)]);
            let mid = 0.5 * (a + c);
            let lambda_max = mid + (mid * mid - (a * c - b * b)).max(0.0).sqrt();
            let r = opts.cutoff_sigma * lambda_max.sqrt();
            let (x0, x1) = ((mean2.x - r).ceil().max(0.0), (mean2.x + r).floor().min(w - 1.0));
            let (y0, y1) = ((mean2.y - r).ceil().max(0.0), (mean2.y + r).floor().min(h - 1.0));
            if !(x0 <= x1 && y0 <= y1) {
                return None;
            }
            Some(Projected {
                index,
                cam,
                mean2,
                jacobian,
                cov3,
                conic,
                opacity: p.opacity(),
                color: p.color,
                x_range: (x0 as usize, x1 as usize),
                y_range: (y0 as usize, y1 as usize),
            })
        })
        .collect();
    out.sort_by(|a, b| a.cam.z.total_cmp(&b.cam.z).then(a.index.cmp(&b.index)));
    out
}

pub fn render(field: &GaussianField, camera: &CameraModel) -> Image {
    render_with(field, camera, &RenderOptions::default()).image
}

pub fn render_with(field: &GaussianField, camera: &CameraModel, opts: &RenderOptions) -> RenderOutput {
    let (w, h) = (camera.width(), camera.height());
    let projected = project_all(field, camera, opts);
    let mut image = Image::new(w, h);
    let mut transmittance = vec![1.0; w * h];
    let mut records = Vec::new();
    let cutoff2 = opts.cutoff_sigma * opts.cutoff_sigma;
    for (slot, p) in projected.iter().enumerate() {
        for y in p.y_range.0..=p.y_range.1 {
            for x in p.x_range.0..=p.x_range.1 {
                let d = Vector2::new(x as f64, y as f64) - p.mean2;
                let d2 = (d.transpose() * p.conic * d)[0];
                if d2 > cutoff2 {
                    continue;
                }
                let alpha = p.opacity * (-0.5 * d2).exp();
                let pix = y * w + x;
                let t = transmittance[pix];
                let data = image.data_mut();
                for c in 0..3 {
                    data[pix * 3 + c] += p.color[c] * alpha * t;
                }
                transmittance[pix] = t * (1.0 - alpha);
                records.push(Record { pixel: pix as u32, slot: slot as u32, alpha, transmittance: t });
            }
        }
    }
    RenderOutput { image, transmittance, projected, records }
}

/// Partial derivatives of the rotation matrix with respect to (w, x, y, z).
fn rotation_partials(q: &Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

/// Back-propagates `d_image` (dL/d pixel) through a recorded render.
pub fn backward(field: &GaussianField, camera: &CameraModel, out: &RenderOutput, d_image: &Image) -> FieldGradient {
    let n = out.projected.len();
    let g_img = d_image.data();
    let mut d_color = vec![Vector3::<f64>::zeros(); n];
    let mut d_alpha_conic = vec![Matrix2::<f64>::zeros(); n];
    let mut d_mean2 = vec![Vector2::<f64>::zeros(); n];
    let mut d_opacity = vec![0.0; n];
    // Color composited behind the current record, per pixel, normalised by
    // the transmittance in front of it.
    let mut behind = vec![Vector3::<f64>::zeros(); g_img.len() / 3];

    for r in out.records.iter().rev() {
        let pix = r.pixel as usize;
        let slot = r.slot as usize;
        let p = &out.projected[slot];
        let g = Vector3::new(g_img[pix * 3], g_img[pix * 3 + 1], g_img[pix * 3 + 2]);
        d_color[slot] += g * (r.alpha * r.transmittance);
        let b = behind[pix];
        let g_alpha = r.transmittance * g.dot(&(p.color - b));
        behind[pix] = p.color * r.alpha + b * (1.0 - r.alpha);

        let w = camera.width();
        let d = Vector2::new((pix % w) as f64, (pix / w) as f64) - p.mean2;
        let falloff = r.alpha / p.opacity;
        d_opacity[slot] += g_alpha * falloff;
        // d alpha / d(d²) = -alpha / 2
        let g_d2 = -0.5 * r.alpha * g_alpha;
        d_alpha_conic[slot] += d * d.transpose() * g_d2;
        d_mean2[slot] += p.conic * d * (-2.0 * g_d2);
    }

    let k = &camera.intrinsics;
    let w_rot = camera.pose.rotation_matrix();
    let mut grad = FieldGradient::zeros(field.len());
    for (slot, p) in out.projected.iter().enumerate() {
        let prim = &field.primitives[p.index];
        let i = p.index;
        grad.color[i] = d_color[slot];
        grad.opacity_logit[i] = d_opacity[slot] * p.opacity * (1.0 - p.opacity);
        grad.mean2[i] = d_mean2[slot];

        let g_cov2 = -p.conic * d_alpha_conic[slot] * p.conic;
        let t = p.jacobian * w_rot;
        let g_cov3 = t.transpose() * g_cov2 * t;
        let g_t = 2.0 * g_cov2 * t * p.cov3;
        let g_j = g_t * w_rot.transpose();

        let q_raw = prim.rotation;
        let q_norm = q_raw.norm();
        let q = q_raw / q_norm;
        let rot = quat_to_matrix(&q);
        let s = prim.scale();
        let m = rot * Matrix3::from_diagonal(&s);
        let g_m = 2.0 * g_cov3 * m;
        let g_s = rot.transpose() * g_m;
        grad.log_scale[i] = Vector3::new(g_s[(0, 0)] * s[0], g_s[(1, 1)] * s[1], g_s[(2, 2)] * s[2]);
        let g_r = g_m * Matrix3::from_diagonal(&s);
        let partials = rotation_partials(&q);
        let g_q = Vector4::from_fn(|c, _| g_r.component_mul(&partials[c]).sum());
        grad.rotation[i] = (g_q - q * q.dot(&g_q)) / q_norm;

        let (x, y, z) = (p.cam.x, p.cam.y, p.cam.z);
        let gm = d_mean2[slot];
        let mut g_cam = Vector3::new(k.fx / z * gm.x, k.fy / z * gm.y, -k.fx * x / (z * z) * gm.x - k.fy * y / (z * z) * gm.y);
        let z2 = z * z;
        let z3 = z2 * z;
        g_cam.x += g_j[(0, 2)] * (-k.fx / z2);
        g_cam.y += g_j[(1, 2)] * (-k.fy / z2);
        g_cam.z += g_j[(0, 0)] * (-k.fx / z2)
            + g_j[(0, 2)] * (2.0 * k.fx * x / z3)
            + g_j[(1, 1)] * (-k.fy / z2)
            + g_j[(1, 2)] * (2.0 * k.fy * y / z3);
        grad.mean[i] = w_rot.transpose() * g_cam;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, CameraPose};
    use crate::splat::field::GaussianPrimitive;

    fn camera(w: usize, h: usize) -> CameraModel {
        let k = CameraIntrinsics::new(20.0, 20.0, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h).unwrap();
        CameraModel::new(k, CameraPose::identity())
    }

    #[test]
    fn primitives_behind_camera_render_black() {
        let field = GaussianField::new(vec![
            GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, -2.0), 0.3, 0.9, [1.0; 3]),
            GaussianPrimitive::isotropic(Vector3::new(0.1, 0.0, 0.005), 0.3, 0.9, [1.0; 3]),
        ]);
        let img = render(&field, &camera(16, 16));
        assert!(img.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_splat_matches_closed_form() {
        let (w, h) = (21, 21);
        let cam = camera(w, h);
        let (depth, sigma, opacity) = (4.0, 0.4, 0.999);
        let field = GaussianField::new(vec![GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, depth), sigma, opacity, [1.0; 3])]);
        let img = render(&field, &cam);
        // Isotropic, on axis: screen variance (f sigma / z)^2 + blur.
        let var = (20.0 * sigma / depth).powi(2) + 0.3;
        for y in 0..h {
            for x in 0..w {
                let d2 = ((x as f64 - 10.0).powi(2) + (y as f64 - 10.0).powi(2)) / var;
                let expect = if d2 <= 9.0 { opacity * (-0.5 * d2).exp() } else { 0.0 };
                assert!((img.get(x, y)[0] - expect).abs() < 1e-12, "({x},{y})");
            }
        }
        let peak = img.get(10, 10)[0];
        assert!(img.data().iter().all(|v| *v <= peak));
        assert_eq!(img.get(8, 10), img.get(12, 10));
        assert_eq!(img.get(10, 8), img.get(10, 12));
    }

    #[test]
    fn opaque_front_hides_back() {
        let mut front = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.5, 0.5, [1.0, 0.0, 0.0]);
        front.opacity_logit = 60.0;
        let back = GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 4.0), 0.5, 0.9, [0.0, 1.0, 0.0]);
        let out = render_with(&GaussianField::new(vec![back, front]), &camera(9, 9), &RenderOptions::default());
        let c = out.image.get(4, 4);
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn transmittance_stays_in_unit_interval() {
        let prims: Vec<_> = (0..30)
            .map(|i| {
                let f = i as f64;
                GaussianPrimitive::isotropic(Vector3::new((f * 0.37).sin() * 0.5, (f * 0.71).cos() * 0.5, 3.0 + f * 0.05), 0.3, 0.8, [0.5; 3])
            })
            .collect();
        let out = render_with(&GaussianField::new(prims), &camera(24, 24), &RenderOptions::default());
        assert!(out.transmittance.iter().all(|t| (0.0..=1.0).contains(t)));
        assert!(out.image.data().iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn out_of_frustum_has_zero_gradient() {
        let field = GaussianField::new(vec![
            GaussianPrimitive::isotropic(Vector3::new(0.0, 0.0, 3.0), 0.3, 0.5, [0.8; 3]),
            GaussianPrimitive::isotropic(Vector3::new(40.0, 0.0, 3.0), 0.3, 0.5, [0.8; 3]),
        ]);
        let cam = camera(16, 16);
        let out = render_with(&field, &cam, &RenderOptions::default());
        let grad = backward(&field, &cam, &out, &Image::filled(16, 16, [1.0; 3]));
        assert_eq!(grad.opacity_logit[1], 0.0);
        assert!(grad.opacity_logit[0] != 0.0);
    }
}
