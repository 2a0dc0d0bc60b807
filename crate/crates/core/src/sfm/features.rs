//! Harris corners with greedy non-maximum suppression.

use super::gradient::sobel;
use super::ViewImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarrisConfig {
    pub max_corners: usize,
    pub k: f64,
    /// Responses below this fraction of the image maximum are discarded.
    pub relative_threshold: f64,
    /// Absolute response floor; flat regions never pass it.
    pub absolute_threshold: f64,
    pub nms_radius: f64,
    /// Keypoints closer than this to the border are dropped.
    pub border: usize,
    /// On masked variants, keypoints within this many pixels of a masked
    /// pixel are dropped.
    pub mask_guard: usize,
}

impl Default for HarrisConfig {
    fn default() -> Self {
        Self {
            max_corners: 2000,
            k: 0.04,
            relative_threshold: 0.01,
            absolute_threshold: 1e-8,
            nms_radius: 4.0,
            border: 6,
            mask_guard: 5,
        }
    }
}

// 5-tap binomial window (sigma ~ 1).
const WINDOW: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn smooth(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in WINDOW.iter().enumerate() {
                let sx = (x as isize + t as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += kv * values[y * w + sx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in WINDOW.iter().enumerate() {
                let sy = (y as isize + t as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += kv * tmp[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Harris corner response of the luma channel.
pub fn harris_response(luma: &[f64], w: usize, h: usize, k: f64) -> Vec<f64> {
    let (gx, gy) = sobel(luma, w, h);
    let xx: Vec<f64> = gx.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = gy.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (sxx, syy, sxy) = (smooth(&xx, w, h), smooth(&yy, w, h), smooth(&xy, w, h));
    (0..w * h)
        .map(|i| {
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            det - k * tr * tr
        })
        .collect()
}

fn subpixel_offset(minus: f64, center: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * center + plus;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
}

/// Detects up to `cfg.max_corners` keypoints, strongest first.
pub fn detect_features(view: &ViewImage, cfg: &HarrisConfig) -> Vec<Keypoint> {
    let img = &view.image;
    let (w, h) = (img.width(), img.height());
    if w <= 2 * cfg.border || h <= 2 * cfg.border || cfg.max_corners == 0 {
        return Vec::new();
    }
    let resp = harris_response(&img.luma(), w, h, cfg.k);
    let blocked = view.mask.as_ref().map(|m| m.dilated(cfg.mask_guard));
    // The relative threshold is taken over eligible pixels only, so fill
    // boundaries in a masked variant do not suppress its remaining features.
    let eligible = |x: usize, y: usize| !blocked.as_ref().is_some_and(|b| b[y * w + x]);
    let mut max_r = 0.0f64;
    for y in cfg.border..h - cfg.border {
        for x in cfg.border..w - cfg.border {
            if eligible(x, y) {
                max_r = max_r.max(resp[y * w + x]);
            }
        }
    }
    let threshold = (cfg.relative_threshold * max_r).max(cfg.absolute_threshold);

    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for y in cfg.border..h - cfg.border {
        for x in cfg.border..w - cfg.border {
            let r = resp[y * w + x];
            if r <= threshold {
                continue;
            }
            if !eligible(x, y) {
                continue;
            }
            let is_peak = (-1isize..=1).all(|dy| {
                (-1isize..=1).all(|dx| {
                    let (nx, ny) = ((x as isize + dx) as usize, (y as isize + dy) as usize);
                    let n = resp[ny * w + nx];
                    (dx, dy) == (0, 0) || n < r || (n == r && (ny, nx) > (y, x))
                })
            });
            if is_peak {
                candidates.push((x, y, r));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));

    let r2 = cfg.nms_radius * cfg.nms_radius;
    let mut out: Vec<Keypoint> = Vec::new();
    for (x, y, r) in candidates {
        let sx = x as f64 + subpixel_offset(resp[y * w + x - 1], r, resp[y * w + x + 1]);
        let sy = y as f64 + subpixel_offset(resp[(y - 1) * w + x], r, resp[(y + 1) * w + x]);
        if out.iter().any(|k| (k.x - sx).powi(2) + (k.y - sy).powi(2) < r2) {
            continue;
        }
        out.push(Keypoint { x: sx, y: sy, response: r });
        if out.len() >= cfg.max_corners {
            break;
        }
    }
    out
}
