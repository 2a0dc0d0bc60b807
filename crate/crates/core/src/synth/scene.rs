//! Procedural scenes of textured planes, spheres and boxes, rendered by ray
//! casting from cameras placed on an arc.
//!
//! Scene files are line oriented. `#` starts a comment. Global lines are
//! `image W H`, `focal F`, `cameras N`, `arc DEG`, `radius R`,
//! `elevation E`, `target X Y Z`, `holdout K` and `name NAME`. Surface lines
//! are `plane`, `sphere` or `box` followed by `key=value` attributes:
//!
//! ```text
//! plane center=0,0,0 u=1,0,0 v=0,1,0 size=2,1.5 texture=split color=0.5,0.5,0.5
//! sphere center=0,0,1 radius=0.5 texture=textured freq=5 amp=0.3
//! box center=1,0,1 half=0.3,0.3,0.3 texture=smooth
//! ```

use crate::geometry::{CameraIntrinsics, CameraModel, CameraPose};
use crate::image::Image;
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    InvalidSpec { line: usize, message: String },
    #[error("unknown builtin scene '{0}'")]
    UnknownScene(String),
}

fn invalid(line: usize, message: impl Into<String>) -> SceneError {
    SceneError::InvalidSpec { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Textured,
    Smooth,
    /// Textured where the local `u` coordinate is negative, smooth elsewhere.
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub kind: TextureKind,
    pub base: [f64; 3],
    /// Value-noise cells per scene unit in textured regions.
    pub freq: f64,
    pub amp: f64,
    pub smooth_freq: f64,
    pub smooth_amp: f64,
}

impl Default for Texture {
    fn default() -> Self {
        Self { kind: TextureKind::Textured, base: [0.5; 3], freq: 6.0, amp: 0.4, smooth_freq: 1.2, smooth_amp: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Rectangle spanned by orthonormal axes `u`, `v` with half sizes.
    Plane { center: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, half: Vector2<f64> },
    Sphere { center: Vector3<f64>, radius: f64 },
    /// Axis-aligned box.
    Cuboid { center: Vector3<f64>, half: Vector3<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub shape: Shape,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cameras: usize,
    pub arc_degrees: f64,
    pub radius: f64,
    pub elevation: f64,
    pub target: Vector3<f64>,
    pub holdout: usize,
    pub surfaces: Vec<Surface>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            name: "scene".into(),
            width: 128,
            height: 96,
            focal: 100.0,
            cameras: 12,
            arc_degrees: 90.0,
            radius: 5.0,
            elevation: 1.0,
            target: Vector3::zeros(),
            holdout: 8,
            surfaces: Vec::new(),
        }
    }
}

pub const STANDARD: &str = include_str!("../../fixtures/standard/scene.txt");
pub const HALF_SMOOTH: &str = include_str!("../../fixtures/half_smooth/scene.txt");

pub fn builtin(name: &str) -> Result<SceneSpec, SceneError> {
    match name {
        "standard" => STANDARD.parse(),
        "half_smooth" => HALF_SMOOTH.parse(),
        other => Err(SceneError::UnknownScene(other.to_string())),
    }
}

fn parse_num<T: FromStr>(s: &str, line: usize) -> Result<T, SceneError> {
    s.parse().map_err(|_| invalid(line, format!("bad number '{s}'")))
}

fn parse_vec3(s: &str, line: usize) -> Result<Vector3<f64>, SceneError> {
    let v: Vec<f64> = s.split(',').map(|t| parse_num(t.trim(), line)).collect::<Result<_, _>>()?;
    if v.len() != 3 {
        return Err(invalid(line, format!("expected 3 components in '{s}'")));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_surface(kind: &str, attrs: &[&str], line: usize) -> Result<Surface, SceneError> {
    let mut texture = Texture::default();
    let mut center = None;
    let (mut u, mut v) = (Vector3::x(), Vector3::y());
    let mut size = None;
    let mut radius = None;
    for a in attrs {
        let (key, value) = a.split_once('=').ok_or_else(|| invalid(line, format!("expected key=value, got '{a}'")))?;
        match key {
            "center" => center = Some(parse_vec3(value, line)?),
            "u" => u = parse_vec3(value, line)?,
            "v" => v = parse_vec3(value, line)?,
            "size" | "half" => {
                let parts: Vec<f64> = value.split(',').map(|t| parse_num(t.trim(), line)).collect::<Result<_, _>>()?;
                size = Some(parts);
            }
            "radius" => radius = Some(parse_num::<f64>(value, line)?),
            "texture" => {
                texture.kind = match value {
                    "textured" => TextureKind::Textured,
                    "smooth" => TextureKind::Smooth,
                    "split" => TextureKind::Split,
                    other => return Err(invalid(line, format!("unknown texture '{other}'"))),
                }
            }
            "color" => {
                let c = parse_vec3(value, line)?;
                texture.base = [c.x, c.y, c.z];
            }
            "freq" => texture.freq = parse_num(value, line)?,
            "amp" => texture.amp = parse_num(value, line)?,
            "smooth_freq" => texture.smooth_freq = parse_num(value, line)?,
            "smooth_amp" => texture.smooth_amp = parse_num(value, line)?,
            other => return Err(invalid(line, format!("unknown attribute '{other}'"))),
        }
    }
    let center = center.ok_or_else(|| invalid(line, "missing center"))?;
    let positive = |x: f64| x > 0.0 && x.is_finite();
    let shape = match kind {
        "plane" => {
            let s = size.ok_or_else(|| invalid(line, "plane needs size=a,b"))?;
            if s.len() != 2 || !s.iter().all(|x| positive(*x)) {
                return Err(invalid(line, "plane size must be two positive half extents"));
            }
            let un = u.normalize();
            let vn = (v - un * un.dot(&v)).normalize();
            if !un.iter().chain(vn.iter()).all(|x| x.is_finite()) {
                return Err(invalid(line, "plane axes are degenerate"));
            }
            Shape::Plane { center, u: un, v: vn, half: Vector2::new(s[0], s[1]) }
        }
        "sphere" => {
            let r = radius.ok_or_else(|| invalid(line, "sphere needs radius"))?;
            if !positive(r) {
                return Err(invalid(line, "radius must be positive"));
            }
            Shape::Sphere { center, radius: r }
        }
        "box" => {
            let s = size.ok_or_else(|| invalid(line, "box needs half=a,b,c"))?;
            if s.len() != 3 || !s.iter().all(|x| positive(*x)) {
                return Err(invalid(line, "box half extents must be three positive numbers"));
            }
            Shape::Cuboid { center, half: Vector3::new(s[0], s[1], s[2]) }
        }
        other => return Err(invalid(line, format!("unknown surface '{other}'"))),
    };
    if texture.kind == TextureKind::Split && !matches!(shape, Shape::Plane { .. }) {
        return Err(invalid(line, "split texture is only defined on planes"));
    }
    Ok(Surface { shape, texture })
}

impl FromStr for SceneSpec {
    type Err = SceneError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut spec = SceneSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            let args = &tokens[1..];
            let need = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(invalid(line, format!("'{}' takes {n} value(s)", tokens[0])))
                }
            };
            match tokens[0] {
                "name" => {
                    need(1)?;
                    spec.name = args[0].to_string();
                }
                "image" => {
                    need(2)?;
                    spec.width = parse_num(args[0], line)?;
                    spec.height = parse_num(args[1], line)?;
                }
                "focal" => {
                    need(1)?;
                    spec.focal = parse_num(args[0], line)?;
                }
                "cameras" => {
                    need(1)?;
                    spec.cameras = parse_num(args[0], line)?;
                }
                "arc" => {
                    need(1)?;
                    spec.arc_degrees = parse_num(args[0], line)?;
                }
                "radius" => {
                    need(1)?;
                    spec.radius = parse_num(args[0], line)?;
                }
                "elevation" => {
                    need(1)?;
                    spec.elevation = parse_num(args[0], line)?;
                }
                "target" => {
                    need(3)?;
                    spec.target = Vector3::new(parse_num(args[0], line)?, parse_num(args[1], line)?, parse_num(args[2], line)?);
                }
                "holdout" => {
                    need(1)?;
                    spec.holdout = parse_num(args[0], line)?;
                }
                kind @ ("plane" | "sphere" | "box") => spec.surfaces.push(parse_surface(kind, args, line)?),
                other => return Err(invalid(line, format!("unknown directive '{other}'"))),
            }
        }
        if spec.width < 8 || spec.height < 8 {
            return Err(invalid(0, "image must be at least 8x8"));
        }
        if spec.cameras < 2 {
            return Err(invalid(0, "need at least 2 cameras"));
        }
        if !(spec.focal > 0.0) || !(spec.radius > 0.0) {
            return Err(invalid(0, "focal and radius must be positive"));
        }
        if spec.surfaces.is_empty() {
            return Err(invalid(0, "scene has no surfaces"));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub surface: usize,
}

impl Surface {
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        const EPS: f64 = 1e-9;
        match self.shape {
            Shape::Plane { center, u, v, half } => {
                let n = u.cross(&v);
                let denom = dir.dot(&n);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (center - origin).dot(&n) / denom;
                let p = origin + dir * t;
                let d = p - center;
                (t > EPS && d.dot(&u).abs() <= half.x && d.dot(&v).abs() <= half.y)
                    .then(|| (t, if denom < 0.0 { n } else { -n }))
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = if -b - s > EPS { -b - s } else { -b + s };
                (t > EPS).then(|| (t, (origin + dir * t - center) / radius))
            }
            Shape::Cuboid { center, half } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis0 = 0;
                let mut axis1 = 0;
                for a in 0..3 {
                    let o = origin[a] - center[a];
                    if dir[a].abs() < 1e-15 {
                        if o.abs() > half[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut lo, mut hi) = ((-half[a] - o) / dir[a], (half[a] - o) / dir[a]);
                    if lo > hi {
                        std::mem::swap(&mut lo, &mut hi);
                    }
                    if lo > t0 {
                        t0 = lo;
                        axis0 = a;
                    }
                    if hi < t1 {
                        t1 = hi;
                        axis1 = a;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, axis) = if t0 > EPS { (t0, axis0) } else if t1 > EPS { (t1, axis1) } else { return None };
                let mut n = Vector3::zeros();
                n[axis] = if origin[axis] + dir[axis] * t > center[axis] { 1.0 } else { -1.0 };
                Some((t, n))
            }
        }
    }

    /// Whether `point` (on the surface) lies in the smooth texture region.
    pub fn is_smooth_at(&self, point: &Vector3<f64>) -> bool {
        match (self.texture.kind, self.shape) {
            (TextureKind::Smooth, _) => true,
            (TextureKind::Textured, _) => false,
            (TextureKind::Split, Shape::Plane { center, u, .. }) => (point - center).dot(&u) >= 0.0,
            (TextureKind::Split, _) => false,
        }
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            Shape::Plane { half, .. } => 4.0 * half.x * half.y,
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Shape::Cuboid { half, .. } => 8.0 * (half.x * half.y + half.y * half.z + half.x * half.z),
        }
    }

    /// Uniform area sample with its outward normal.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (Vector3<f64>, Vector3<f64>) {
        match self.shape {
            Shape::Plane { center, u, v, half } => {
                let p = center + u * rng.random_range(-half.x..=half.x) + v * rng.random_range(-half.y..=half.y);
                (p, u.cross(&v))
            }
            Shape::Sphere { center, radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                let n = Vector3::new(r * phi.cos(), r * phi.sin(), z);
                (center + n * radius, n)
            }
            Shape::Cuboid { center, half } => {
                let faces = [half.y * half.z, half.y * half.z, half.x * half.z, half.x * half.z, half.x * half.y, half.x * half.y];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut face = 5;
                for (i, f) in faces.iter().enumerate() {
                    if pick < *f {
                        face = i;
                        break;
                    }
                    pick -= f;
                }
                let axis = face / 2;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let mut p = Vector3::from_fn(|a, _| rng.random_range(-half[a]..=half[a]));
                p[axis] = sign * half[axis];
                let mut n = Vector3::zeros();
                n[axis] = sign;
                (center + p, n)
            }
        }
    }
}

fn hash(ix: i64, iy: i64, iz: i64, salt: u64) -> f64 {
    let mut h = salt ^ 0x9E37_79B9_7F4A_7C15;
    for v in [ix, iy, iz] {
        h ^= (v as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 31)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 29;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear value noise in [0, 1] with smoothstep blending.
pub fn value_noise(p: &Vector3<f64>, salt: u64) -> f64 {
    let f = p.map(f64::floor);
    let t = (p - f).map(|x| x * x * (3.0 - 2.0 * x));
    let (ix, iy, iz) = (f.x as i64, f.y as i64, f.z as i64);
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let w = (if dx == 1 { t.x } else { 1.0 - t.x })
                    * (if dy == 1 { t.y } else { 1.0 - t.y })
                    * (if dz == 1 { t.z } else { 1.0 - t.z });
                acc += w * hash(ix + dx, iy + dy, iz + dz, salt);
            }
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub cameras: Vec<CameraModel>,
    pub seed: u64,
}

/// Camera centres spread uniformly in angle over the arc, all looking at the target.
pub fn arc_cameras(spec: &SceneSpec) -> Vec<CameraModel> {
    let k = CameraIntrinsics::new(
        spec.focal,
        spec.focal,
        (spec.width as f64 - 1.0) / 2.0,
        (spec.height as f64 - 1.0) / 2.0,
        spec.width,
        spec.height,
    )
    .expect("validated spec");
    let arc = spec.arc_degrees.to_radians();
    (0..spec.cameras)
        .map(|i| {
            let theta = if spec.cameras == 1 { 0.0 } else { -arc / 2.0 + arc * i as f64 / (spec.cameras - 1) as f64 };
            let center = spec.target + Vector3::new(spec.radius * theta.sin(), spec.elevation, -spec.radius * theta.cos());
            CameraModel::new(k, CameraPose::look_at(center, spec.target, Vector3::y()))
        })
        .collect()
}

impl SyntheticScene {
    pub fn new(spec: SceneSpec, seed: u64) -> Self {
        let cameras = arc_cameras(&spec);
        Self { spec, cameras, seed }
    }

    pub fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, s) in self.spec.surfaces.iter().enumerate() {
            if let Some((t, normal)) = s.intersect(origin, dir) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit { t, point: origin + dir * t, normal, surface: i });
                }
            }
        }
        best
    }

    pub fn albedo(&self, surface: usize, p: &Vector3<f64>) -> [f64; 3] {
        let s = &self.spec.surfaces[surface];
        let tex = &s.texture;
        let (freq, amp) = if s.is_smooth_at(p) { (tex.smooth_freq, tex.smooth_amp) } else { (tex.freq, tex.amp) };
        let salt = self.seed.wrapping_mul(1_000_003).wrapping_add(surface as u64 * 7919);
        let q = p * freq;
        let mut c = [0.0; 3];
        for (ch, v) in c.iter_mut().enumerate() {
            let n = value_noise(&(q + Vector3::repeat(17.0 * ch as f64)), salt.wrapping_add(ch as u64));
            *v = (tex.base[ch] + amp * (2.0 * n - 1.0)).clamp(0.0, 1.0);
        }
        c
    }

    /// Ray-cast render with 2x2 supersampling; background is black.
    pub fn render_view(&self, camera: &CameraModel) -> Image {
        let (w, h) = (camera.width(), camera.height());
        let origin = camera.center();
        let rows: Vec<Vec<[f64; 3]>> = (0..h)
            .into_par_iter()
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let mut acc = [0.0; 3];
                        for (ox, oy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                            let dir = camera.ray_direction(&Vector2::new(x as f64 + ox, y as f64 + oy));
                            if let Some(hit) = self.trace(&origin, &dir) {
                                let c = self.albedo(hit.surface, &hit.point);
                                for k in 0..3 {
                                    acc[k] += 0.25 * c[k];
                                }
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Image::from_fn(w, h, |x, y| rows[y][x])
    }

    pub fn render_all(&self) -> Vec<Image> {
        self.cameras.iter().map(|c| self.render_view(c)).collect()
    }

    /// Whether `p` is the first hit along the ray from some camera.
    pub fn is_visible(&self, p: &Vector3<f64>) -> bool {
        self.cameras.iter().any(|c| {
            if !c.sees(p) {
                return false;
            }
            let o = c.center();
            let d = p - o;
            let dist = d.norm();
            self.trace(&o, &(d / dist)).is_some_and(|h| h.t >= dist - 1e-6 * dist.max(1.0))
        })
    }

    /// `n` area-uniform samples of camera-visible surface with normals.
    pub fn surface_samples(&self, n: usize, seed: u64) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let areas: Vec<f64> = self.spec.surfaces.iter().map(|s| s.area()).collect();
        let total: f64 = areas.iter().sum();
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while out.len() < n && attempts < 50 * n {
            attempts += 1;
            let mut pick = rng.random_range(0.0..total);
            let mut idx = areas.len() - 1;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    idx = i;
                    break;
                }
                pick -= a;
            }
            let s = self.spec.surfaces[idx].sample(&mut rng);
            if self.is_visible(&s.0) {
                out.push(s);
            }
        }
        out
    }

    /// Axis-aligned box around the smooth half of the first split plane,
    /// padded by `pad` along the plane normal only.
    pub fn smooth_region_box(&self, pad: f64) -> Option<(Vector3<f64>, Vector3<f64>)> {
        self.spec.surfaces.iter().find_map(|s| match (s.texture.kind, s.shape) {
            (TextureKind::Split, Shape::Plane { center, u, v, half }) => {
                let n = u.cross(&v) * pad;
                let mut lo = Vector3::repeat(f64::INFINITY);
                let mut hi = Vector3::repeat(f64::NEG_INFINITY);
                for a in [0.0, half.x] {
                    for b in [-half.y, half.y] {
                        for c in [-1.0, 1.0] {
                            let p = center + u * a + v * b + n * c;
                            lo = lo.inf(&p);
                            hi = hi.sup(&p);
                        }
                    }
                }
                Some((lo, hi))
            }
            _ => None,
        })
    }
}

/// Scene and its ground-truth views.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> (SyntheticScene, Vec<Image>) {
    let scene = SyntheticScene::new(spec.clone(), seed);
    let images = scene.render_all();
    (scene, images)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SceneSpec {
        "image 40 30\nfocal 40\ncameras 3\narc 30\nradius 4\nelevation 0\n\
         plane center=0,0,0 u=1,0,0 v=0,1,0 size=2,1.5 texture=split\n"
            .parse()
            .unwrap()
    }

    #[test]
    fn builtins_parse() {
        assert_eq!(builtin("standard").unwrap().cameras, 12);
        assert!(builtin("half_smooth").unwrap().surfaces.iter().any(|s| s.texture.kind == TextureKind::Split));
        assert!(matches!(builtin("nope"), Err(SceneError::UnknownScene(_))));
    }

    #[test]
    fn bad_specs_are_rejected() {
        for bad in [
            "image 40 30\nplane center=0,0,0 size=1\n",
            "image 40 30\nsphere center=0,0,0\n",
            "image 40 30\nwat 1\n",
            "image 40 30\n",
            "sphere center=0,0,0 radius=1 texture=split\n",
            "sphere center=0,0 radius=1\n",
        ] {
            assert!(matches!(bad.parse::<SceneSpec>(), Err(SceneError::InvalidSpec { .. })), "{bad}");
        }
    }

    #[test]
    fn deterministic_images() {
        let spec = small_spec();
        assert_eq!(generate_scene(&spec, 42).1, generate_scene(&spec, 42).1);
        assert_ne!(generate_scene(&spec, 42).1, generate_scene(&spec, 43).1);
    }

    #[test]
    fn camera_count_and_look_direction() {
        let spec = SceneSpec { cameras: 12, ..small_spec() };
        let scene = SyntheticScene::new(spec, 1);
        assert_eq!(scene.cameras.len(), 12);
        for c in &scene.cameras {
            let p = c.project(&Vector3::zeros()).unwrap();
            assert!((p - Vector2::new(19.5, 14.5)).norm() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn intersections() {
        let o = Vector3::new(0.0, 0.0, -5.0);
        let d = Vector3::z();
        let sphere = Surface { shape: Shape::Sphere { center: Vector3::zeros(), radius: 1.0 }, texture: Texture::default() };
        let (t, n) = sphere.intersect(&o, &d).unwrap();
        assert!((t - 4.0).abs() < 1e-12 && (n + Vector3::z()).norm() < 1e-12);
        let cube = Surface { shape: Shape::Cuboid { center: Vector3::zeros(), half: Vector3::repeat(0.5) }, texture: Texture::default() };
        let (t, n) = cube.intersect(&o, &d).unwrap();
        assert!((t - 4.5).abs() < 1e-12 && (n + Vector3::z()).norm() < 1e-12);
        assert!(cube.intersect(&Vector3::new(2.0, 0.0, -5.0), &d).is_none());
    }

    #[test]
    fn samples_lie_on_visible_surface() {
        let scene = SyntheticScene::new(small_spec(), 3);
        let samples = scene.surface_samples(200, 9);
        assert_eq!(samples.len(), 200);
        assert!(samples.iter().all(|(p, n)| p.z.abs() < 1e-12 && (n.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn value_noise_is_continuous_and_bounded() {
        let a = value_noise(&Vector3::new(0.999999, 2.3, -1.2), 5);
        let b = value_noise(&Vector3::new(1.000001, 2.3, -1.2), 5);
        assert!((a - b).abs() < 1e-4);
        for i in 0..100 {
            let v = value_noise(&Vector3::new(i as f64 * 0.37, i as f64 * 0.11, 0.5), 1);
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
