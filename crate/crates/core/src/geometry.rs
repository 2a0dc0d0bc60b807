//! Pinhole cameras, projection, two-view triangulation and fixed-pose robust
//! refinement of 3D points from multi-view tracks.
//!
//! Pixel coordinates put the centre of pixel `(u, v)` at integer `(u, v)`.

use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

/// Points closer than this to the camera plane are rejected by [`CameraModel::project`].
pub const MIN_DEPTH: f64 = 1e-9;

/// Default minimum angle between two rays for a usable triangulation (radians).
pub const DEFAULT_MIN_RAY_ANGLE: f64 = 1e-3;

/// Default Huber knee in pixels.
pub const DEFAULT_HUBER_DELTA: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth {0} in the camera frame")]
    NonPositiveDepth(f64),
    #[error("rays are degenerate (angle {angle} rad, baseline {baseline})")]
    DegenerateRays { angle: f64, baseline: f64 },
    #[error("triangulated point lies behind camera {view}")]
    BehindCamera { view: usize },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("track is invalid: {0}")]
    InvalidTrack(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics of the same camera after box-downsampling by `factor`.
    pub fn downsampled(&self, factor: usize) -> Self {
        let f = factor.max(1) as f64;
        let shift = (f - 1.0) / 2.0;
        Self {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: ((self.cx - shift) / f).max(0.0),
            cy: ((self.cy - shift) / f).max(0.0),
            width: (self.width / factor.max(1)).max(1),
            height: (self.height / factor.max(1)).max(1),
        }
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= -0.5
            && pixel.y >= -0.5
            && pixel.x < self.width as f64 - 0.5
            && pixel.y < self.height as f64 - 0.5
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros() }
    }

    /// Pose of a camera centred at `center` looking at `target`, with image `y`
    /// pointing along `-up` (camera looks down +z, y down).
    pub fn look_at(center: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Self {
        let z = (target - center).normalize();
        let mut x = z.cross(&up);
        if x.norm() < 1e-12 {
            x = z.cross(&Vector3::new(1.0, 0.0, 0.0));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // Rows of the world->camera rotation are the camera axes in world coordinates.
        let r = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
        let translation = -(rotation * center);
        Self { rotation, translation }
    }

    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl CameraModel {
    pub fn new(intrinsics: CameraIntrinsics, pose: CameraPose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.center()
    }

    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.pose.rotation * world + self.pose.translation
    }

    pub fn to_world(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.pose.rotation.inverse() * (cam - self.pose.translation)
    }

    /// Perspective projection of a world point.
    pub fn project(&self, world: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        let p = self.to_camera(world);
        if p.z <= MIN_DEPTH {
            return Err(GeometryError::NonPositiveDepth(p.z));
        }
        let k = &self.intrinsics;
        Ok(Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy))
    }

    /// World point at camera-frame depth `depth` along the ray through `pixel`.
    pub fn backproject(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let k = &self.intrinsics;
        let cam = Vector3::new((pixel.x - k.cx) / k.fx * depth, (pixel.y - k.cy) / k.fy * depth, depth);
        self.to_world(&cam)
    }

    /// Unit world-space direction of the ray through `pixel`.
    pub fn ray_direction(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let k = &self.intrinsics;
        let cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        (self.pose.rotation.inverse() * cam).normalize()
    }

    /// True when `world` projects inside the image with positive depth.
    pub fn sees(&self, world: &Vector3<f64>) -> bool {
        self.project(world).map(|px| self.intrinsics.contains(&px)).unwrap_or(false)
    }

    /// Jacobian of the projection with respect to the world point.
    fn projection_jacobian(&self, world: &Vector3<f64>) -> Option<(Vector2<f64>, nalgebra::Matrix2x3<f64>)> {
        let p = self.to_camera(world);
        if p.z <= MIN_DEPTH {
            return None;
        }
        let k = &self.intrinsics;
        let iz = 1.0 / p.z;
        let px = Vector2::new(k.fx * p.x * iz + k.cx, k.fy * p.y * iz + k.cy);
        let dcam = nalgebra::Matrix2x3::new(
            k.fx * iz,
            0.0,
            -k.fx * p.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * p.y * iz * iz,
        );
        Some((px, dcam * self.pose.rotation_matrix()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub view_id: usize,
    pub pixel: Vector2<f64>,
}

impl Observation {
    pub fn new(view_id: usize, u: f64, v: f64) -> Self {
        Self { view_id, pixel: Vector2::new(u, v) }
    }
}

/// Observations of one 3D point in distinct views.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTrack {
    pub observations: Vec<Observation>,
}

impl FeatureTrack {
    pub fn new(observations: Vec<Observation>) -> Result<Self, GeometryError> {
        let mut ids: Vec<usize> = observations.iter().map(|o| o.view_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(GeometryError::InvalidTrack("duplicate view id".into()));
        }
        Ok(Self { observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn view_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.observations.iter().map(|o| o.view_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3D {
    pub position: Vector3<f64>,
    pub color: [f64; 3],
    pub track_length: usize,
}

/// Midpoint of the shortest segment between the rays through two observations.
pub fn triangulate_two_view(
    obs_a: &Observation,
    obs_b: &Observation,
    cam_a: &CameraModel,
    cam_b: &CameraModel,
) -> Result<Point3D, GeometryError> {
    triangulate_two_view_with(obs_a, obs_b, cam_a, cam_b, DEFAULT_MIN_RAY_ANGLE)
}

pub fn triangulate_two_view_with(
    obs_a: &Observation,
    obs_b: &Observation,
    cam_a: &CameraModel,
    cam_b: &CameraModel,
    min_angle: f64,
) -> Result<Point3D, GeometryError> {
    let ca = cam_a.center();
    let cb = cam_b.center();
    let da = cam_a.ray_direction(&obs_a.pixel);
    let db = cam_b.ray_direction(&obs_b.pixel);
    let baseline = (cb - ca).norm();
    let angle = da.dot(&db).clamp(-1.0, 1.0).acos();
    let scale = ca.norm().max(cb.norm()).max(1.0);
    if angle <= min_angle || baseline <= 1e-12 * scale {
        return Err(GeometryError::DegenerateRays { angle, baseline });
    }
    // Minimise |ca + s da - cb - t db|^2 over (s, t).
    let w = ca - cb;
    let b = da.dot(&db);
    let d = da.dot(&w);
    let e = db.dot(&w);
    let denom = 1.0 - b * b;
    if denom <= 1e-15 {
        return Err(GeometryError::DegenerateRays { angle, baseline });
    }
    let s = (b * e - d) / denom;
    let t = (e - b * d) / denom;
    let position = 0.5 * ((ca + s * da) + (cb + t * db));
    if cam_a.to_camera(&position).z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { view: obs_a.view_id });
    }
    if cam_b.to_camera(&position).z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { view: obs_b.view_id });
    }
    Ok(Point3D { position, color: [0.0; 3], track_length: 2 })
}

/// Huber loss applied to a squared residual norm: `s/2` up to `delta^2`,
/// `delta*sqrt(s) - delta^2/2` above.
pub fn huber(residual_sq: f64, delta: f64) -> f64 {
    let d2 = delta * delta;
    if residual_sq <= d2 {
        0.5 * residual_sq
    } else {
        delta * residual_sq.sqrt() - 0.5 * d2
    }
}

/// d huber / d residual_sq.
pub fn huber_derivative(residual_sq: f64, delta: f64) -> f64 {
    if residual_sq <= delta * delta {
        0.5
    } else {
        0.5 * delta / residual_sq.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig {
    pub min_track: usize,
    pub huber_delta: f64,
    pub max_iters: usize,
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub min_ray_angle: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            min_track: 2,
            huber_delta: DEFAULT_HUBER_DELTA,
            max_iters: 20,
            step_tolerance: 1e-8,
            initial_damping: 1e-3,
            min_ray_angle: DEFAULT_MIN_RAY_ANGLE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedPoint {
    /// Index of the source track in the input list.
    pub track_index: usize,
    pub point: Point3D,
    /// False when the iteration budget ran out before the step tolerance was met.
    pub converged: bool,
    /// Robust cost after initialisation and after every iteration.
    pub cost_history: Vec<f64>,
}

impl RefinedPoint {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().unwrap_or(&f64::NAN)
    }
}

/// Robust reprojection cost of `x` over the observations of a track.
pub fn robust_cost(
    x: &Vector3<f64>,
    track: &FeatureTrack,
    cameras: &[CameraModel],
    delta: f64,
) -> f64 {
    let mut total = 0.0;
    for obs in &track.observations {
        match cameras[obs.view_id].project(x) {
            Ok(px) => total += huber((px - obs.pixel).norm_squared(), delta),
            Err(_) => return f64::INFINITY,
        }
    }
    total
}

/// Best-conditioned two-view triangulation among the observation pairs of a track.
pub fn initial_triangulation(
    track: &FeatureTrack,
    cameras: &[CameraModel],
    min_angle: f64,
) -> Result<Vector3<f64>, GeometryError> {
    let obs = &track.observations;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    let mut last_err = GeometryError::InvalidTrack("fewer than two observations".into());
    for i in 0..obs.len() {
        for j in (i + 1)..obs.len() {
            let (ca, cb) = (&cameras[obs[i].view_id], &cameras[obs[j].view_id]);
            match triangulate_two_view_with(&obs[i], &obs[j], ca, cb, min_angle) {
                Ok(p) => {
                    let angle = ca.ray_direction(&obs[i].pixel).dot(&cb.ray_direction(&obs[j].pixel)).clamp(-1.0, 1.0).acos();
                    if best.as_ref().map_or(true, |(a, _)| angle > *a) {
                        best = Some((angle, p.position));
                    }
                }
                Err(e) => last_err = e,
            }
        }
    }
    best.map(|(_, p)| p).ok_or(last_err)
}

/// Triangulate and refine a single track with damped Gauss-Newton on the
/// robust reprojection objective. Poses are held fixed.
pub fn refine_track(
    track_index: usize,
    track: &FeatureTrack,
    cameras: &[CameraModel],
    cfg: &RefineConfig,
) -> Result<RefinedPoint, GeometryError> {
    if let Some(o) = track.observations.iter().find(|o| o.view_id >= cameras.len()) {
        return Err(GeometryError::InvalidTrack(format!("unknown view {}", o.view_id)));
    }
    let mut x = initial_triangulation(track, cameras, cfg.min_ray_angle)?;
    let delta = cfg.huber_delta;
    let mut cost = robust_cost(&x, track, cameras, delta);
    let mut history = vec![cost];
    let mut damping = cfg.initial_damping;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        // Normal equations of the IRLS-weighted Gauss-Newton model.
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for obs in &track.observations {
            let Some((px, jac)) = cameras[obs.view_id].projection_jacobian(&x) else {
                continue;
            };
            let r = px - obs.pixel;
            let w = 2.0 * huber_derivative(r.norm_squared(), delta);
            h += w * jac.transpose() * jac;
            g += w * jac.transpose() * r;
        }
        if g.norm() == 0.0 {
            converged = true;
            history.push(cost);
            break;
        }
        let mut accepted = false;
        let mut small_step = false;
        // Inner loop: raise damping until the cost does not increase.
        for _ in 0..32 {
            let mut damped = h;
            for k in 0..3 {
                damped[(k, k)] += damping * h[(k, k)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-g))) else {
                damping *= 10.0;
                continue;
            };
            if step.norm() <= cfg.step_tolerance * (1.0 + x.norm()) {
                small_step = true;
                break;
            }
            let candidate = x + step;
            let new_cost = robust_cost(&candidate, track, cameras, delta);
            if new_cost <= cost {
                x = candidate;
                cost = new_cost;
                damping = (damping / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        history.push(cost);
        if small_step || !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!("track {track_index}: no convergence after {} iterations", cfg.max_iters);
    }
    for obs in &track.observations {
        if cameras[obs.view_id].to_camera(&x).z <= MIN_DEPTH {
            return Err(GeometryError::BehindCamera { view: obs.view_id });
        }
    }
    Ok(RefinedPoint {
        track_index,
        point: Point3D { position: x, color: [0.0; 3], track_length: track.len() },
        converged,
        cost_history: history,
    })
}

/// Refine every track of length `>= cfg.min_track`. Tracks that fail to
/// triangulate are dropped; results are ordered by input track index.
pub fn refine_points(
    tracks: &[FeatureTrack],
    cameras: &[CameraModel],
    cfg: &RefineConfig,
) -> Vec<RefinedPoint> {
    tracks
        .par_iter()
        .enumerate()
        .filter(|(_, t)| t.len() >= cfg.min_track.max(2))
        .filter_map(|(i, t)| refine_track(i, t, cameras, cfg).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam(center: Vector3<f64>) -> CameraModel {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        CameraModel::new(k, CameraPose { rotation: UnitQuaternion::identity(), translation: -center })
    }

    #[test]
    fn projects_optical_axis_to_principal_point() {
        let c = cam(Vector3::zeros());
        assert_eq!(c.project(&Vector3::new(0.0, 0.0, 5.0)).unwrap(), Vector2::new(50.0, 50.0));
        assert_eq!(c.project(&Vector3::new(0.5, 0.0, 5.0)).unwrap(), Vector2::new(60.0, 50.0));
        assert!(matches!(
            c.project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn two_view_reference_fixture() {
        let a = cam(Vector3::zeros());
        let b = cam(Vector3::new(1.0, 0.0, 0.0));
        let p = triangulate_two_view(&Observation::new(0, 60.0, 50.0), &Observation::new(1, 40.0, 50.0), &a, &b)
            .unwrap();
        assert_relative_eq!(p.position, Vector3::new(0.5, 0.0, 5.0), epsilon = 1e-12);
    }

    #[test]
    fn identical_cameras_are_degenerate() {
        let a = cam(Vector3::zeros());
        let r = triangulate_two_view(&Observation::new(0, 60.0, 50.0), &Observation::new(1, 40.0, 50.0), &a, &a);
        assert!(matches!(r, Err(GeometryError::DegenerateRays { .. })));
    }

    #[test]
    fn behind_camera_is_reported() {
        let a = cam(Vector3::zeros());
        let b = cam(Vector3::new(1.0, 0.0, 0.0));
        // Diverging rays meet behind both cameras.
        let r = triangulate_two_view(&Observation::new(0, 40.0, 50.0), &Observation::new(1, 60.0, 50.0), &a, &b);
        assert!(matches!(r, Err(GeometryError::BehindCamera { .. })));
    }

    #[test]
    fn huber_closed_forms() {
        assert_eq!(huber(0.0, 2.0), 0.0);
        assert_eq!(huber(4.0, 2.0), 2.0);
        let d = 2.0;
        assert_relative_eq!(huber(100.0 * d * d, d), d * (10.0 * d) - d * d / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn huber_is_c1_at_the_knee() {
        let d: f64 = 1.7;
        let knee = d * d;
        let h = 1e-7;
        let left = (huber(knee, d) - huber(knee - h, d)) / h;
        let right = (huber(knee + h, d) - huber(knee, d)) / h;
        assert!((left - right).abs() < 1e-6, "{left} vs {right}");
        assert!((huber(knee - 1e-12, d) - huber(knee + 1e-12, d)).abs() < 1e-9);
    }

    #[test]
    fn refine_drops_short_tracks_under_min_track_three() {
        let cams: Vec<_> = (0..3).map(|i| cam(Vector3::new(i as f64 * 0.5, 0.0, 0.0))).collect();
        let x = Vector3::new(0.3, -0.2, 4.0);
        let full = FeatureTrack::new(
            (0..3).map(|i| Observation { view_id: i, pixel: cams[i].project(&x).unwrap() }).collect(),
        )
        .unwrap();
        let short = FeatureTrack::new(full.observations[..2].to_vec()).unwrap();
        let tracks = vec![full, short];
        let two = refine_points(&tracks, &cams, &RefineConfig::default());
        let three = refine_points(&tracks, &cams, &RefineConfig { min_track: 3, ..Default::default() });
        assert_eq!(two.len(), 2);
        assert_eq!(three.len(), 1);
        assert_eq!(three[0].track_index, 0);
    }

    #[test]
    fn duplicate_views_rejected_in_track() {
        let t = FeatureTrack::new(vec![Observation::new(1, 0.0, 0.0), Observation::new(1, 1.0, 1.0)]);
        assert!(t.is_err());
    }
}
