//! Synthetic-scene fixtures shared by the integration and acceptance tests.

use seedcloud::cloud::{CloudPoint, ColoredPointCloud, Provenance};
use seedcloud::sfm::{reconstruct_p0, SfmConfig, ViewImage};
use seedcloud::synth::{generate_scene, SceneSpec, SyntheticScene};

pub const SMOOTH_BOX_PAD: f64 = 0.2;

pub fn fixture_spec(name: &str) -> SceneSpec {
    let path = super::fixture_path(name).join("scene.txt");
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.parse().unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn scene_views(spec: &SceneSpec, seed: u64) -> (SyntheticScene, Vec<ViewImage>) {
    let (scene, images) = generate_scene(spec, seed);
    let views = images.into_iter().enumerate().map(|(i, im)| ViewImage::new(i, im, scene.cameras[i])).collect();
    (scene, views)
}

/// The standard scene with 500 grey seeds drawn uniformly from its visible surface.
pub fn five_hundred_seeds() -> (Vec<ViewImage>, ColoredPointCloud) {
    let (scene, views) = scene_views(&fixture_spec("standard"), 42);
    let seeds = scene.surface_samples(500, 7).into_iter().map(|(p, _)| CloudPoint::new(p, [0.5; 3], Provenance::Sfm)).collect();
    (views, ColoredPointCloud::new(seeds))
}

/// P0 points inside the smooth-region box of the half-smooth fixture, with and
/// without the masked companion views.
pub fn smooth_region_counts(seed: u64) -> (usize, usize) {
    let (scene, views) = scene_views(&fixture_spec("half_smooth"), seed);
    let (lo, hi) = scene.smooth_region_box(SMOOTH_BOX_PAD).expect("half_smooth has a split plane");
    let count = |augment: bool| {
        let out = reconstruct_p0(&views, &SfmConfig { augment, ..Default::default() }).unwrap();
        out.cloud.points.iter().filter(|p| (0..3).all(|i| p.position[i] >= lo[i] && p.position[i] <= hi[i])).count()
    };
    (count(true), count(false))
}
