//! Text sparse models (`cameras.txt`, `images.txt`, `points3D.txt`).
//!
//! The text format places pixel centres at half-integer coordinates; this
//! crate puts them at integers, so principal points and 2D observations are
//! shifted by -0.5 on load. Views are numbered by ascending image id.

use crate::cloud::{CloudPoint, ColoredPointCloud, Provenance};
use crate::geometry::{CameraIntrinsics, CameraModel, CameraPose, FeatureTrack, Observation};
use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseModelError {
    #[error("{file}:{line}: {message}")]
    Parse { file: &'static str, line: usize, message: String },
    #[error("unsupported camera model `{0}` (PINHOLE and SIMPLE_PINHOLE only)")]
    UnsupportedCamera(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseView {
    pub image_id: u32,
    pub camera_id: u32,
    pub name: String,
    pub camera: CameraModel,
    /// Keypoints in crate pixel convention, with their 3D point id if any.
    pub points2d: Vec<(Vector2<f64>, Option<u64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub views: Vec<SparseView>,
    /// One track per 3D point, observations indexed by view position.
    pub tracks: Vec<FeatureTrack>,
    /// Stored 3D points aligned with `tracks`.
    pub points: ColoredPointCloud,
    pub point_ids: Vec<u64>,
}

impl SparseModel {
    pub fn cameras(&self) -> Vec<CameraModel> {
        self.views.iter().map(|v| v.camera).collect()
    }
}

/// Non-comment lines with their 1-based line numbers. Blank lines are kept
/// because an image without observations has an empty second line.
fn content_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#')).map(|(i, l)| (i + 1, l.trim())).collect()
}

fn field<T: std::str::FromStr>(
    tok: Option<&str>,
    file: &'static str,
    line: usize,
    what: &str,
) -> Result<T, SparseModelError> {
    let t = tok.ok_or_else(|| SparseModelError::Parse { file, line, message: format!("missing {what}") })?;
    t.parse().map_err(|_| SparseModelError::Parse { file, line, message: format!("bad {what} `{t}`") })
}

pub fn parse_cameras(text: &str) -> Result<BTreeMap<u32, CameraIntrinsics>, SparseModelError> {
    const F: &str = "cameras.txt";
    let mut out = BTreeMap::new();
    for (ln, line) in content_lines(text) {
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id: u32 = field(tok.next(), F, ln, "camera id")?;
        let model: String = field(tok.next(), F, ln, "model")?;
        let width: usize = field(tok.next(), F, ln, "width")?;
        let height: usize = field(tok.next(), F, ln, "height")?;
        let params: Vec<f64> = tok.map(|t| field(Some(t), F, ln, "parameter")).collect::<Result<_, _>>()?;
        let (fx, fy, cx, cy) = match (model.as_str(), params.as_slice()) {
            ("PINHOLE", [fx, fy, cx, cy]) => (*fx, *fy, *cx, *cy),
            ("SIMPLE_PINHOLE", [f, cx, cy]) => (*f, *f, *cx, *cy),
            ("PINHOLE" | "SIMPLE_PINHOLE", p) => {
                return Err(SparseModelError::Parse { file: F, line: ln, message: format!("{model} with {} parameters", p.len()) })
            }
            _ => return Err(SparseModelError::UnsupportedCamera(model)),
        };
        let k = CameraIntrinsics::new(fx, fy, cx - 0.5, cy - 0.5, width, height)
            .map_err(|e| SparseModelError::Parse { file: F, line: ln, message: e.to_string() })?;
        if out.insert(id, k).is_some() {
            return Err(SparseModelError::Parse { file: F, line: ln, message: format!("duplicate camera id {id}") });
        }
    }
    Ok(out)
}

pub fn parse_images(
    text: &str,
    cameras: &BTreeMap<u32, CameraIntrinsics>,
) -> Result<Vec<SparseView>, SparseModelError> {
    const F: &str = "images.txt";
    let lines = content_lines(text);
    let mut views = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (ln, line) = lines[i];
        if line.is_empty() {
            i += 1;
            continue;
        }
        let mut tok = line.split_whitespace();
        let image_id: u32 = field(tok.next(), F, ln, "image id")?;
        let q: Vec<f64> = (0..4).map(|_| field(tok.next(), F, ln, "quaternion")).collect::<Result<_, _>>()?;
        let t: Vec<f64> = (0..3).map(|_| field(tok.next(), F, ln, "translation")).collect::<Result<_, _>>()?;
        let camera_id: u32 = field(tok.next(), F, ln, "camera id")?;
        let name: String = tok.collect::<Vec<_>>().join(" ");
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        if !(quat.norm() > 0.0) {
            return Err(SparseModelError::Parse { file: F, line: ln, message: "zero quaternion".into() });
        }
        let intr = cameras.get(&camera_id).ok_or_else(|| {
            SparseModelError::DanglingReference(format!("image {image_id} references missing camera {camera_id}"))
        })?;
        let pose = CameraPose { rotation: UnitQuaternion::from_quaternion(quat), translation: Vector3::new(t[0], t[1], t[2]) };

        let mut points2d = Vec::new();
        if let Some(&(pln, pline)) = lines.get(i + 1) {
            let vals: Vec<&str> = pline.split_whitespace().collect();
            if vals.len() % 3 != 0 {
                return Err(SparseModelError::Parse { file: F, line: pln, message: "POINTS2D[] is not a list of triples".into() });
            }
            for c in vals.chunks_exact(3) {
                let x: f64 = field(Some(c[0]), F, pln, "x")?;
                let y: f64 = field(Some(c[1]), F, pln, "y")?;
                let id: i64 = field(Some(c[2]), F, pln, "point3D id")?;
                points2d.push((Vector2::new(x - 0.5, y - 0.5), u64::try_from(id).ok()));
            }
        }
        views.push(SparseView { image_id, camera_id, name, camera: CameraModel::new(*intr, pose), points2d });
        i += 2;
    }
    views.sort_by_key(|v| v.image_id);
    if let Some(w) = views.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(SparseModelError::Parse { file: F, line: 0, message: format!("duplicate image id {}", w[0].image_id) });
    }
    Ok(views)
}

/// Parses `points3D.txt` against the already loaded views.
pub fn parse_points(
    text: &str,
    views: &[SparseView],
) -> Result<(Vec<FeatureTrack>, ColoredPointCloud, Vec<u64>), SparseModelError> {
    const F: &str = "points3D.txt";
    let index: HashMap<u32, usize> = views.iter().enumerate().map(|(i, v)| (v.image_id, i)).collect();
    let mut tracks = Vec::new();
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for (ln, line) in content_lines(text) {
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let id: u64 = field(tok.next(), F, ln, "point3D id")?;
        let xyz: Vec<f64> = (0..3).map(|_| field(tok.next(), F, ln, "coordinate")).collect::<Result<_, _>>()?;
        let rgb: Vec<u8> = (0..3).map(|_| field(tok.next(), F, ln, "color")).collect::<Result<_, _>>()?;
        let _error: f64 = field(tok.next(), F, ln, "error")?;
        let rest: Vec<&str> = tok.collect();
        if rest.len() % 2 != 0 {
            return Err(SparseModelError::Parse { file: F, line: ln, message: "TRACK[] is not a list of pairs".into() });
        }
        let mut obs: Vec<Observation> = Vec::new();
        for pair in rest.chunks_exact(2) {
            let image_id: u32 = field(Some(pair[0]), F, ln, "image id")?;
            let idx: usize = field(Some(pair[1]), F, ln, "point2D index")?;
            let &v = index.get(&image_id).ok_or_else(|| {
                SparseModelError::DanglingReference(format!("point {id} references missing image {image_id}"))
            })?;
            let (px, _) = views[v].points2d.get(idx).ok_or_else(|| {
                SparseModelError::DanglingReference(format!("point {id} references missing keypoint {idx} of image {image_id}"))
            })?;
            // A point observed twice in one image keeps its first observation.
            if !obs.iter().any(|o| o.view_id == v) {
                obs.push(Observation { view_id: v, pixel: *px });
            }
        }
        obs.sort_by_key(|o| o.view_id);
        let track = FeatureTrack::new(obs).expect("view ids deduplicated");
        let mut p = CloudPoint::new(
            Vector3::new(xyz[0], xyz[1], xyz[2]),
            rgb.iter().map(|&c| c as f64 / 255.0).collect::<Vec<_>>().try_into().unwrap(),
            Provenance::Sfm,
        );
        p.support_views = track.view_ids().collect();
        p.track_len = Some(track.len() as u32);
        tracks.push(track);
        points.push(p);
        ids.push(id);
    }
    Ok((tracks, ColoredPointCloud::new(points), ids))
}

fn read(dir: &Path, name: &str) -> Result<String, SparseModelError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|source| SparseModelError::Io { path: path.display().to_string(), source })
}

pub fn read_sparse_model(dir: &Path) -> Result<SparseModel, SparseModelError> {
    let cameras = parse_cameras(&read(dir, "cameras.txt")?)?;
    let views = parse_images(&read(dir, "images.txt")?, &cameras)?;
    let (tracks, points, point_ids) = parse_points(&read(dir, "points3D.txt")?, &views)?;
    Ok(SparseModel { views, tracks, points, point_ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAMERAS: &str = "# Camera list\n1 PINHOLE 640 480 500 510 320.5 240.5\n2 SIMPLE_PINHOLE 320 240 300 160 120\n";

    #[test]
    fn cameras_shift_principal_point() {
        let cams = parse_cameras(CAMERAS).unwrap();
        let k = cams[&1];
        assert_eq!((k.fx, k.fy, k.cx, k.cy), (500.0, 510.0, 320.0, 240.0));
        let s = cams[&2];
        assert_eq!((s.fx, s.fy, s.cx, s.cy), (300.0, 300.0, 159.5, 119.5));
    }

    #[test]
    fn unsupported_model() {
        assert!(matches!(parse_cameras("1 OPENCV 10 10 1 1 5 5 0 0 0 0"), Err(SparseModelError::UnsupportedCamera(_))));
    }

    #[test]
    fn images_normalize_quaternion_and_keep_empty_point_lines() {
        let cams = parse_cameras(CAMERAS).unwrap();
        let text = "# header\n2 2 0 0 0 1 2 3 1 b.png\n\n1 1 0 0 0 0 0 0 2 a.png\n10.5 20.5 -1 3.5 4.5 7\n";
        let views = parse_images(text, &cams).unwrap();
        assert_eq!(views.len(), 2);
        assert_eq!(views[0].image_id, 1);
        assert_eq!(views[0].points2d, vec![(Vector2::new(10.0, 20.0), None), (Vector2::new(3.0, 4.0), Some(7))]);
        assert!(views[1].points2d.is_empty());
        assert!((views[1].camera.pose.rotation.quaternion().norm() - 1.0).abs() < 1e-15);
        assert_eq!(views[1].camera.pose.rotation, UnitQuaternion::identity());
    }

    #[test]
    fn missing_camera_is_dangling() {
        let cams = parse_cameras(CAMERAS).unwrap();
        let err = parse_images("1 1 0 0 0 0 0 0 9 a.png\n\n", &cams).unwrap_err();
        assert!(matches!(err, SparseModelError::DanglingReference(_)));
    }

    #[test]
    fn comment_only_points_give_no_tracks() {
        let cams = parse_cameras(CAMERAS).unwrap();
        let views = parse_images("1 1 0 0 0 0 0 0 1 a.png\n\n", &cams).unwrap();
        let (tracks, cloud, _) = parse_points("# 3D point list with one line of data per point:\n# nothing\n", &views).unwrap();
        assert!(tracks.is_empty() && cloud.is_empty());
    }

    #[test]
    fn track_to_missing_image_is_dangling() {
        let cams = parse_cameras(CAMERAS).unwrap();
        let views = parse_images("1 1 0 0 0 0 0 0 1 a.png\n5 5 0\n", &cams).unwrap();
        let err = parse_points("1 0 0 1 255 0 0 0.1 1 0 4 0\n", &views).unwrap_err();
        assert!(matches!(err, SparseModelError::DanglingReference(_)));
        let err = parse_points("1 0 0 1 255 0 0 0.1 1 3\n", &views).unwrap_err();
        assert!(matches!(err, SparseModelError::DanglingReference(_)));
    }
}
