//! Random multi-view track fixtures with known 3D points.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use seedcloud::geometry::{CameraIntrinsics, CameraModel, CameraPose, FeatureTrack, Observation};

pub struct TrackFixture {
    pub cameras: Vec<CameraModel>,
    pub points: Vec<Vector3<f64>>,
    pub tracks: Vec<FeatureTrack>,
    /// Largest distance from the origin of any camera centre or point.
    pub scale: f64,
}

/// 2-6 cameras on a sphere of random radius looking at the origin, 1-20
/// points inside the shared field of view, tracks of random length >= 2.
/// Pixel noise of `noise_px` standard deviation is added to observations.
pub fn track_fixture(seed: u64, noise_px: f64) -> TrackFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = 10f64.powf(rng.random_range(-2.0..2.0));
    let n_cams = rng.random_range(2..=6);
    let k = CameraIntrinsics::new(300.0, 300.0, 159.5, 119.5, 320, 240).unwrap();
    let cameras: Vec<CameraModel> = (0..n_cams)
        .map(|_| {
            let az: f64 = rng.random_range(-0.6..0.6);
            let el: f64 = rng.random_range(-0.3..0.3);
            let r = unit * rng.random_range(6.0..10.0);
            let c = Vector3::new(r * az.sin() * el.cos(), r * el.sin(), -r * az.cos() * el.cos());
            CameraModel::new(k, CameraPose::look_at(c, Vector3::zeros(), Vector3::new(0.0, -1.0, 0.0)))
        })
        .collect();
    let noise = Normal::new(0.0, noise_px.max(1e-300)).unwrap();
    let n_points = rng.random_range(1..=20);
    let mut points = Vec::with_capacity(n_points);
    let mut tracks = Vec::with_capacity(n_points);
    while points.len() < n_points {
        let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)) * unit;
        if !cameras.iter().all(|c| c.sees(&p)) {
            continue;
        }
        let len = rng.random_range(2..=n_cams);
        let mut ids: Vec<usize> = (0..n_cams).collect();
        for i in 0..len {
            let j = rng.random_range(i..n_cams);
            ids.swap(i, j);
        }
        let obs = ids[..len]
            .iter()
            .map(|&v| {
                let px = cameras[v].project(&p).unwrap();
                let (du, dv) = if noise_px > 0.0 { (noise.sample(&mut rng), noise.sample(&mut rng)) } else { (0.0, 0.0) };
                Observation::new(v, px.x + du, px.y + dv)
            })
            .collect();
        points.push(p);
        tracks.push(FeatureTrack::new(obs).unwrap());
    }
    let scale = cameras.iter().map(|c| c.center().norm()).chain(points.iter().map(|p| p.norm())).fold(0.0, f64::max);
    TrackFixture { cameras, points, tracks, scale }
}
