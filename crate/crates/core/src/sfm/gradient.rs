//! Sobel gradient magnitude and percentile-based high-frequency masks.

use super::SfmError;
use crate::image::Image;

/// Per-pixel scalar field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ScalarField {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Horizontal and vertical 3x3 Sobel responses of a single-channel buffer,
/// with replicated borders.
pub fn sobel(values: &[f64], width: usize, height: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, width as isize - 1) as usize;
        let yc = y.clamp(0, height as isize - 1) as usize;
        values[yc * width + xc]
    };
    let mut gx = vec![0.0; width * height];
    let mut gy = vec![0.0; width * height];
    for y in 0..height as isize {
        for x in 0..width as isize {
            let i = y as usize * width + x as usize;
            gx[i] = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            gy[i] = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
        }
    }
    (gx, gy)
}

/// Sobel gradient magnitude of the luma channel.
pub fn gradient_magnitude(image: &Image) -> ScalarField {
    let (w, h) = (image.width(), image.height());
    let (gx, gy) = sobel(&image.luma(), w, h);
    let values = gx.iter().zip(&gy).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    ScalarField { width: w, height: h, values }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientMask {
    pub width: usize,
    pub height: usize,
    /// True where the pixel is high-frequency and gets suppressed.
    pub mask: Vec<bool>,
    pub percentile_used: f64,
    /// Gradient magnitude at or above which pixels are masked.
    pub threshold: Option<f64>,
}

impl GradientMask {
    pub fn empty(width: usize, height: usize, percentile: f64) -> Self {
        Self { width, height, mask: vec![false; width * height], percentile_used: percentile, threshold: None }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Mask grown by `radius` pixels (Chebyshev distance).
    pub fn dilated(&self, radius: usize) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        // Separable max filter: rows then columns.
        let mut rows = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                rows[y * w + x] = (lo..=hi).any(|xx| self.mask[y * w + xx]);
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            for x in 0..w {
                out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
            }
        }
        out
    }
}

/// Number of pixels in the upper tail of `n` samples above `percentile`.
pub fn tail_count(n: usize, percentile: f64) -> usize {
    (((100.0 - percentile) / 100.0) * n as f64).round() as usize
}

/// Marks pixels whose gradient magnitude reaches the `percentile`-th value of
/// the image's nonzero gradients. Pixels tied with the threshold are included.
/// Images without gradient yield an empty mask.
pub fn high_frequency_mask(image: &Image, percentile: f64) -> Result<GradientMask, SfmError> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(SfmError::InvalidPercentile(percentile));
    }
    let grad = gradient_magnitude(image);
    let mut nonzero: Vec<f64> = grad.values.iter().copied().filter(|g| *g > 0.0).collect();
    let tail = tail_count(nonzero.len(), percentile);
    if tail == 0 {
        return Ok(GradientMask::empty(grad.width, grad.height, percentile));
    }
    nonzero.sort_by(f64::total_cmp);
    let threshold = nonzero[nonzero.len() - tail];
    let mask = grad.values.iter().map(|g| *g > 0.0 && *g >= threshold).collect();
    Ok(GradientMask { width: grad.width, height: grad.height, mask, percentile_used: percentile, threshold: Some(threshold) })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct 3x3 convolution with replicated borders.
    fn convolve(values: &[f64], w: usize, h: usize, k: [[f64; 3]; 3]) -> Vec<f64> {
        let mut out = vec![0.0; w * h];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for (dy, row) in k.iter().enumerate() {
                    for (dx, kv) in row.iter().enumerate() {
                        let sx = (x + dx as isize - 1).clamp(0, w as isize - 1) as usize;
                        let sy = (y + dy as isize - 1).clamp(0, h as isize - 1) as usize;
                        acc += kv * values[sy * w + sx];
                    }
                }
                out[y as usize * w + x as usize] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_image_has_no_gradient() {
        let g = gradient_magnitude(&Image::filled(9, 7, [0.3, 0.6, 0.2]));
        assert!(g.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn vertical_step_edge() {
        let c = 4;
        let img = Image::from_fn(10, 6, |x, _| if x <= c { [0.0; 3] } else { [1.0; 3] });
        let g = gradient_magnitude(&img);
        for y in 0..6 {
            for x in 0..10 {
                let v = g.get(x, y);
                if x == c || x == c + 1 {
                    assert!((v - 4.0).abs() < 1e-12, "({x},{y}) = {v}");
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn single_bright_pixel_matches_convolution() {
        let img = Image::from_fn(7, 7, |x, y| if (x, y) == (3, 3) { [1.0; 3] } else { [0.0; 3] });
        let luma = img.luma();
        let gx = convolve(&luma, 7, 7, [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]);
        let gy = convolve(&luma, 7, 7, [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]);
        let g = gradient_magnitude(&img);
        for i in 0..49 {
            let expect = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            assert!((g.values[i] - expect).abs() < 1e-12);
            let (x, y) = (i % 7, i / 7);
            let in_ring = x.abs_diff(3) <= 1 && y.abs_diff(3) <= 1 && (x, y) != (3, 3);
            assert_eq!(g.values[i] > 0.0, in_ring, "pixel ({x},{y})");
        }
    }

    #[test]
    fn constant_image_gives_empty_mask() {
        let m = high_frequency_mask(&Image::filled(8, 8, [0.5; 3]), 70.0).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn mask_fraction_on_hundred_gradient_pixels() {
        // 2x50 image: dark left column, right column with distinct random
        // levels, so every one of the 100 pixels carries a distinct gradient.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let levels: Vec<f64> = (0..50).map(|_| rng.random_range(0.1..1.0)).collect();
        let img = Image::from_fn(2, 50, |x, y| if x == 0 { [0.0; 3] } else { [levels[y]; 3] });
        let g = gradient_magnitude(&img);
        assert_eq!(g.values.iter().filter(|v| **v > 0.0).count(), 100);
        let m = high_frequency_mask(&img, 70.0).unwrap();
        assert!(m.count().abs_diff(30) <= 1, "{}", m.count());
    }

    #[test]
    fn checkerboard_mask_covers_cell_boundaries() {
        let cell = 6;
        let img = Image::from_fn(36, 36, |x, y| if ((x / cell) + (y / cell)) % 2 == 0 { [1.0; 3] } else { [0.0; 3] });
        let g = gradient_magnitude(&img);
        let m = high_frequency_mask(&img, 70.0).unwrap();
        let t = m.threshold.unwrap();
        // Brute-force thresholding oracle.
        for (i, gv) in g.values.iter().enumerate() {
            assert_eq!(m.mask[i], *gv > 0.0 && *gv >= t);
        }
        // Every pixel straddling a vertical cell boundary carries the full step response.
        for y in 0..36 {
            for b in (cell..36).step_by(cell) {
                if y % cell != 0 && y % cell != cell - 1 {
                    assert!(m.get(b - 1, y) && m.get(b, y), "boundary at x={b}, y={y}");
                }
            }
        }
    }

    #[test]
    fn percentile_out_of_range_is_rejected() {
        assert!(high_frequency_mask(&Image::new(4, 4), 101.0).is_err());
    }

    #[test]
    fn dilation_grows_by_radius() {
        let mut m = GradientMask::empty(9, 9, 70.0);
        m.mask[4 * 9 + 4] = true;
        let d = m.dilated(2);
        assert_eq!(d.iter().filter(|v| **v).count(), 25);
    }
}
