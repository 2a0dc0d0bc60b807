//! Known-pose matching: epipolar gating plus zero-normalised cross-correlation,
//! mutual-best selection and union-find track assembly.

use super::features::Keypoint;
use super::ViewImage;
use crate::geometry::{CameraModel, FeatureTrack, Observation};
use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Maximum point-to-epipolar-line distance in either image (pixels).
    pub epipolar_threshold: f64,
    pub zncc_threshold: f64,
    /// Half size of the correlation window (5 gives 11x11).
    pub patch_radius: usize,
    /// Observations of one physical view inside a track must agree within
    /// this distance, otherwise the track is discarded as ambiguous.
    pub same_view_tolerance: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { epipolar_threshold: 2.0, zncc_threshold: 0.8, patch_radius: 5, same_view_tolerance: 1.0 }
    }
}

fn skew(t: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0)
}

fn intrinsic_matrix(cam: &CameraModel) -> Matrix3<f64> {
    let k = &cam.intrinsics;
    Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0)
}

/// Fundamental matrix with `x_b^T F x_a = 0`, or `None` for a zero baseline.
pub fn fundamental_matrix(cam_a: &CameraModel, cam_b: &CameraModel) -> Option<Matrix3<f64>> {
    let ra = cam_a.pose.rotation_matrix();
    let rb = cam_b.pose.rotation_matrix();
    let r = rb * ra.transpose();
    let t = cam_b.pose.translation - r * cam_a.pose.translation;
    let scale = cam_a.center().norm().max(cam_b.center().norm()).max(1.0);
    if t.norm() <= 1e-9 * scale {
        return None;
    }
    let e = skew(&t) * r;
    let ka_inv = intrinsic_matrix(cam_a).try_inverse()?;
    let kb_inv = intrinsic_matrix(cam_b).try_inverse()?;
    Some(kb_inv.transpose() * e * ka_inv)
}

fn line_distance(line: &Vector3<f64>, p: &Vector2<f64>) -> f64 {
    let n = (line.x * line.x + line.y * line.y).sqrt();
    if n == 0.0 {
        return f64::INFINITY;
    }
    (line.x * p.x + line.y * p.y + line.z).abs() / n
}

/// Larger of the two point-to-epipolar-line distances.
pub fn symmetric_epipolar_distance(f: &Matrix3<f64>, pa: &Vector2<f64>, pb: &Vector2<f64>) -> f64 {
    let xa = Vector3::new(pa.x, pa.y, 1.0);
    let xb = Vector3::new(pb.x, pb.y, 1.0);
    line_distance(&(f * xa), pb).max(line_distance(&(f.transpose() * xb), pa))
}

/// Zero-mean, unit-norm luma patch around a keypoint, or `None` if the patch
/// leaves the image or has no variance.
pub fn normalized_patch(luma: &[f64], w: usize, h: usize, kp: &Keypoint, radius: usize) -> Option<Vec<f64>> {
    let cx = kp.x.round() as isize;
    let cy = kp.y.round() as isize;
    let r = radius as isize;
    if cx - r < 0 || cy - r < 0 || cx + r >= w as isize || cy + r >= h as isize {
        return None;
    }
    let mut patch = Vec::with_capacity((2 * radius + 1).pow(2));
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            patch.push(luma[y as usize * w + x as usize]);
        }
    }
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    patch.iter_mut().for_each(|v| *v -= mean);
    let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-9 {
        return None;
    }
    patch.iter_mut().for_each(|v| *v /= norm);
    Some(patch)
}

fn zncc(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A pairwise correspondence between keypoint `ka` of view `a` and keypoint
/// `kb` of view `b` (indices into the view list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    pub a: usize,
    pub ka: usize,
    pub b: usize,
    pub kb: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Lower root wins so the merge is independent of call order details.
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

type Patches = Vec<Vec<Option<Vec<f64>>>>;

fn match_pair(
    views: &[ViewImage],
    keypoints: &[Vec<Keypoint>],
    patches: &Patches,
    a: usize,
    b: usize,
    cfg: &MatchConfig,
) -> Vec<Match> {
    let Some(f) = fundamental_matrix(&views[a].camera, &views[b].camera) else {
        return Vec::new();
    };
    let (ka, kb) = (&keypoints[a], &keypoints[b]);
    // Best partner and score in each direction.
    let mut best_ab: Vec<Option<(usize, f64)>> = vec![None; ka.len()];
    let mut best_ba: Vec<Option<(usize, f64)>> = vec![None; kb.len()];
    for (i, pa) in ka.iter().enumerate() {
        let Some(patch_a) = &patches[a][i] else { continue };
        let xa = Vector2::new(pa.x, pa.y);
        for (j, pb) in kb.iter().enumerate() {
            let Some(patch_b) = &patches[b][j] else { continue };
            let xb = Vector2::new(pb.x, pb.y);
            if symmetric_epipolar_distance(&f, &xa, &xb) >= cfg.epipolar_threshold {
                continue;
            }
            let score = zncc(patch_a, patch_b);
            if score <= cfg.zncc_threshold {
                continue;
            }
            if best_ab[i].is_none_or(|(_, s)| score > s) {
                best_ab[i] = Some((j, score));
            }
            if best_ba[j].is_none_or(|(_, s)| score > s) {
                best_ba[j] = Some((i, score));
            }
        }
    }
    best_ab
        .iter()
        .enumerate()
        .filter_map(|(i, m)| {
            let (j, _) = (*m)?;
            (best_ba[j].map(|(ii, _)| ii) == Some(i)).then_some(Match { a, ka: i, b, kb: j })
        })
        .collect()
}

/// Matches every pair of views with distinct physical view ids.
pub fn match_views(views: &[ViewImage], keypoints: &[Vec<Keypoint>], cfg: &MatchConfig) -> Vec<Match> {
    let patches: Patches = views
        .par_iter()
        .zip(keypoints.par_iter())
        .map(|(v, kps)| {
            let luma = v.image.luma();
            kps.iter().map(|k| normalized_patch(&luma, v.image.width(), v.image.height(), k, cfg.patch_radius)).collect()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..views.len())
        .flat_map(|a| ((a + 1)..views.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| views[a].view_id != views[b].view_id)
        .collect();
    let mut matches: Vec<Match> =
        pairs.par_iter().flat_map_iter(|&(a, b)| match_pair(views, keypoints, &patches, a, b, cfg)).collect();
    matches.sort_unstable();
    matches
}

/// Merges pairwise matches into tracks. A masked variant and its original
/// share a view id, so both collapse into one observation of that view.
pub fn build_tracks(
    views: &[ViewImage],
    keypoints: &[Vec<Keypoint>],
    matches: &[Match],
    cfg: &MatchConfig,
) -> Vec<FeatureTrack> {
    let mut offsets = Vec::with_capacity(keypoints.len());
    let mut total = 0;
    for k in keypoints {
        offsets.push(total);
        total += k.len();
    }
    let mut uf = UnionFind::new(total);
    let mut used = vec![false; total];
    for m in matches {
        let (na, nb) = (offsets[m.a] + m.ka, offsets[m.b] + m.kb);
        used[na] = true;
        used[nb] = true;
        uf.union(na, nb);
    }
    let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (v, kps) in keypoints.iter().enumerate() {
        for k in 0..kps.len() {
            let node = offsets[v] + k;
            if used[node] {
                groups.entry(uf.find(node)).or_default().push((v, k));
            }
        }
    }
    let tol2 = cfg.same_view_tolerance * cfg.same_view_tolerance;
    let mut tracks = Vec::new();
    'group: for members in groups.values() {
        let mut per_view: BTreeMap<usize, Vector2<f64>> = BTreeMap::new();
        for &(v, k) in members {
            let kp = &keypoints[v][k];
            let px = Vector2::new(kp.x, kp.y);
            match per_view.get(&views[v].view_id) {
                Some(existing) => {
                    if (existing - px).norm_squared() > tol2 {
                        continue 'group;
                    }
                }
                None => {
                    per_view.insert(views[v].view_id, px);
                }
            }
        }
        if per_view.len() < 2 {
            continue;
        }
        let observations = per_view.into_iter().map(|(view_id, pixel)| Observation { view_id, pixel }).collect();
        tracks.push(FeatureTrack { observations });
    }
    tracks
}

/// Detect-free matching entry point: pairwise matches then track assembly.
pub fn match_and_track(views: &[ViewImage], keypoints: &[Vec<Keypoint>], cfg: &MatchConfig) -> Vec<FeatureTrack> {
    let matches = match_views(views, keypoints, cfg);
    build_tracks(views, keypoints, &matches, cfg)
}
