use nalgebra::{Matrix3, Vector3, Vector4};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of a unit quaternion stored as (w, x, y, z).
pub fn quat_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Anisotropic 3D Gaussian. Scale and opacity are stored in their
/// unconstrained parameterisations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    /// Unit quaternion (w, x, y, z).
    pub rotation: Vector4<f64>,
    pub opacity_logit: f64,
    /// View-independent (DC) color; not clamped during optimisation.
    pub color: Vector3<f64>,
}

impl GaussianPrimitive {
    pub fn isotropic(mean: Vector3<f64>, scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        Self {
            mean,
            log_scale: Vector3::repeat(scale.ln()),
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            opacity_logit: logit(opacity),
            color: Vector3::from(color),
        }
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn unit_rotation(&self) -> Vector4<f64> {
        let n = self.rotation.norm();
        if n > 0.0 {
            self.rotation / n
        } else {
            Vector4::new(1.0, 0.0, 0.0, 0.0)
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.unit_rotation())
    }

    /// World-space covariance `R diag(s^2) R^T`.
    pub fn covariance(&self) -> Matrix3<f64> {
        let m = self.rotation_matrix() * Matrix3::from_diagonal(&self.scale());
        m * m.transpose()
    }

    pub fn is_valid(&self) -> bool {
        let o = self.opacity();
        self.mean.iter().all(|v| v.is_finite())
            && self.log_scale.iter().all(|v| v.is_finite())
            && (self.rotation.norm() - 1.0).abs() < 1e-6
            && o > 0.0
            && o < 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianField {
    pub primitives: Vec<GaussianPrimitive>,
    pub iteration: usize,
}

impl GaussianField {
    pub fn new(primitives: Vec<GaussianPrimitive>) -> Self {
        Self { primitives, iteration: 0 }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn normalize_rotations(&mut self) {
        for p in &mut self.primitives {
            p.rotation = p.unit_rotation();
        }
    }
}
