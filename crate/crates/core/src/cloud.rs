//! Colored point clouds with provenance and view-support metadata.

use nalgebra::Vector3;
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Provenance {
    /// Triangulated from feature tracks.
    Sfm,
    /// Centre of a self-initialisation Gaussian primitive.
    SelfInit,
}

impl Provenance {
    pub fn code(self) -> u8 {
        match self {
            Provenance::Sfm => 0,
            Provenance::SelfInit => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Provenance::Sfm),
            1 => Some(Provenance::SelfInit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub position: Vector3<f64>,
    pub color: [f64; 3],
    pub provenance: Provenance,
    /// Views known to observe the point (track views for SfM points,
    /// containing frusta for self-init points).
    pub support_views: BTreeSet<usize>,
    /// Length of the source track, for SfM points.
    pub track_len: Option<u32>,
}

impl CloudPoint {
    pub fn new(position: Vector3<f64>, color: [f64; 3], provenance: Provenance) -> Self {
        Self { position, color, provenance, support_views: BTreeSet::new(), track_len: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColoredPointCloud {
    pub points: Vec<CloudPoint>,
}

impl ColoredPointCloud {
    pub fn new(points: Vec<CloudPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.points.iter().filter(|p| p.provenance == provenance).count()
    }

    /// Sub-cloud of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> ColoredPointCloud {
        ColoredPointCloud { points: indices.iter().map(|&i| self.points[i].clone()).collect() }
    }

    /// True when positions are finite and colors lie in [0, 1].
    pub fn is_valid(&self) -> bool {
        self.points.iter().all(|p| {
            p.position.iter().all(|v| v.is_finite()) && p.color.iter().all(|c| (0.0..=1.0).contains(c))
        })
    }

    /// Axis-aligned bounding-box diagonal.
    pub fn extent(&self) -> f64 {
        bounding_diagonal(self.points.iter().map(|p| &p.position))
    }
}

pub fn bounding_diagonal<'a>(points: impl Iterator<Item = &'a Vector3<f64>>) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
        any = true;
    }
    if any {
        (hi - lo).norm()
    } else {
        0.0
    }
}

/// Concatenation of two clouds; provenance and support metadata are kept and
/// nothing is deduplicated.
pub fn merge(p0: &ColoredPointCloud, p1: &ColoredPointCloud) -> ColoredPointCloud {
    let mut points = Vec::with_capacity(p0.len() + p1.len());
    points.extend(p0.points.iter().cloned());
    points.extend(p1.points.iter().cloned());
    ColoredPointCloud { points }
}
