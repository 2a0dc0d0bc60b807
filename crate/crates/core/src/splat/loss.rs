//! L1 + D-SSIM photometric objective and its gradient with respect to the
//! rendered image.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5). Windows are truncated at
//! the image border and renormalised, so a constant image has exactly zero
//! local variance everywhere.

use crate::image::{Image, ImageError};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
const RADIUS: usize = 5;

fn gaussian_kernel() -> [f64; 2 * RADIUS + 1] {
    let sigma: f64 = 1.5;
    let mut k = [0.0; 2 * RADIUS + 1];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = (-d * d / (2.0 * sigma * sigma)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable window filter over a single-channel plane.
struct Window {
    kernel: [f64; 2 * RADIUS + 1],
    w: usize,
    h: usize,
    // In-bounds kernel mass per column / row.
    zx: Vec<f64>,
    zy: Vec<f64>,
}

impl Window {
    fn new(w: usize, h: usize) -> Self {
        let kernel = gaussian_kernel();
        let mass = |pos: usize, len: usize| -> f64 {
            (0..2 * RADIUS + 1)
                .filter(|&t| {
                    let q = pos as isize + t as isize - RADIUS as isize;
                    q >= 0 && q < len as isize
                })
                .map(|t| kernel[t])
                .sum()
        };
        let zx = (0..w).map(|x| mass(x, w)).collect();
        let zy = (0..h).map(|y| mass(y, h)).collect();
        Self { kernel, w, h, zx, zy }
    }

    fn pass_x(&self, input: &[f64], normalize: bool) -> Vec<f64> {
        let (w, k) = (self.w, &self.kernel);
        let mut out = vec![0.0; input.len()];
        for (row, orow) in input.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
            for (x, o) in orow.iter_mut().enumerate() {
                let acc = if x >= RADIUS && x + RADIUS < w {
                    row[x - RADIUS..=x + RADIUS].iter().zip(k).map(|(a, b)| a * b).sum()
                } else {
                    let lo = x.saturating_sub(RADIUS);
                    let hi = (x + RADIUS).min(w - 1);
                    (lo..=hi).map(|q| k[q + RADIUS - x] * row[q]).sum::<f64>()
                };
                *o = if normalize { acc / self.zx[x] } else { acc };
            }
        }
        out
    }

    fn pass_y(&self, input: &[f64], normalize: bool) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let mut out = vec![0.0; input.len()];
        for y in 0..h {
            let lo = y.saturating_sub(RADIUS);
            let hi = (y + RADIUS).min(h - 1);
            let orow = &mut out[y * w..(y + 1) * w];
            for q in lo..=hi {
                let kv = self.kernel[q + RADIUS - y];
                let irow = &input[q * w..(q + 1) * w];
                for (o, v) in orow.iter_mut().zip(irow) {
                    *o += kv * v;
                }
            }
            if normalize {
                let z = self.zy[y];
                orow.iter_mut().for_each(|o| *o /= z);
            }
        }
        out
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.pass_y(&self.pass_x(input, true), true)
    }

    /// Adjoint of [`Window::apply`].
    fn apply_transpose(&self, input: &[f64]) -> Vec<f64> {
        let mut scaled = input.to_vec();
        for y in 0..self.h {
            for x in 0..self.w {
                scaled[y * self.w + x] /= self.zy[y];
            }
        }
        let mut t = self.pass_y(&scaled, false);
        for y in 0..self.h {
            for x in 0..self.w {
                t[y * self.w + x] /= self.zx[x];
            }
        }
        self.pass_x(&t, false)
    }
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.data().iter().skip(c).step_by(3).copied().collect()
}

struct SsimMaps {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn ssim_maps(win: &Window, x: &[f64], y: &[f64]) -> SsimMaps {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = win.apply(x);
    let mu_y = win.apply(y);
    let mxx = win.apply(&xx);
    let myy = win.apply(&yy);
    let mxy = win.apply(&xy);
    let n = x.len();
    let mut m = SsimMaps {
        a1: vec![0.0; n],
        a2: vec![0.0; n],
        b1: vec![0.0; n],
        b2: vec![0.0; n],
        mu_x: Vec::new(),
        mu_y: Vec::new(),
    };
    for i in 0..n {
        let (ux, uy) = (mu_x[i], mu_y[i]);
        m.a1[i] = 2.0 * ux * uy + SSIM_C1;
        m.a2[i] = 2.0 * (mxy[i] - ux * uy) + SSIM_C2;
        m.b1[i] = ux * ux + uy * uy + SSIM_C1;
        m.b2[i] = (mxx[i] - ux * ux) + (myy[i] - uy * uy) + SSIM_C2;
    }
    m.mu_x = mu_x;
    m.mu_y = mu_y;
    m
}

/// Mean local SSIM over all pixels and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    let win = Window::new(a.width(), a.height());
    let mut total = 0.0;
    for c in 0..3 {
        let m = ssim_maps(&win, &channel(a, c), &channel(b, c));
        for i in 0..m.a1.len() {
            total += (m.a1[i] * m.a2[i]) / (m.b1[i] * m.b2[i]);
        }
    }
    Ok(total / (a.width() * a.height() * 3) as f64)
}

pub fn d_ssim(a: &Image, b: &Image) -> Result<f64, ImageError> {
    Ok(1.0 - ssim(a, b)?)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image), ImageError> {
    a.same_shape(b)?;
    let (w, h) = (a.width(), a.height());
    let npx = w * h;
    let scale = 1.0 / (npx * 3) as f64;
    let win = Window::new(w, h);
    let mut total = 0.0;
    let mut grad = Image::new(w, h);
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let m = ssim_maps(&win, &x, &y);
        let mut d_mu = vec![0.0; npx];
        let mut d_mxx = vec![0.0; npx];
        let mut d_mxy = vec![0.0; npx];
        for i in 0..npx {
            let num = m.a1[i] * m.a2[i];
            let den = m.b1[i] * m.b2[i];
            total += num / den;
            let (ux, uy) = (m.mu_x[i], m.mu_y[i]);
            let dnum = 2.0 * uy * m.a2[i] - 2.0 * uy * m.a1[i];
            let dden = 2.0 * ux * m.b2[i] - 2.0 * ux * m.b1[i];
            d_mu[i] = scale * (dnum * den - num * dden) / (den * den);
            d_mxx[i] = -scale * num * m.b1[i] / (den * den);
            d_mxy[i] = scale * 2.0 * m.a1[i] / den;
        }
        let t_mu = win.apply_transpose(&d_mu);
        let t_mxx = win.apply_transpose(&d_mxx);
        let t_mxy = win.apply_transpose(&d_mxy);
        let data = grad.data_mut();
        for i in 0..npx {
            data[i * 3 + c] = t_mu[i] + 2.0 * x[i] * t_mxx[i] + y[i] * t_mxy[i];
        }
    }
    Ok((total * scale, grad))
}

pub fn mean_abs_error(a: &Image, b: &Image) -> Result<f64, ImageError> {
    a.same_shape(b)?;
    let n = a.data().len().max(1) as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// `(1 - lambda) * L1 + lambda * (1 - SSIM)`.
pub fn photometric_loss(rendered: &Image, gt: &Image, lambda_ssim: f64) -> Result<f64, ImageError> {
    let l1 = mean_abs_error(rendered, gt)?;
    if lambda_ssim == 0.0 {
        return Ok(l1);
    }
    Ok((1.0 - lambda_ssim) * l1 + lambda_ssim * d_ssim(rendered, gt)?)
}

/// Photometric loss and its gradient with respect to the rendered image.
pub fn photometric_loss_with_grad(rendered: &Image, gt: &Image, lambda_ssim: f64) -> Result<(f64, Image), ImageError> {
    rendered.same_shape(gt)?;
    let n = rendered.data().len().max(1) as f64;
    let mut grad = Image::new(rendered.width(), rendered.height());
    let mut l1 = 0.0;
    for ((g, r), t) in grad.data_mut().iter_mut().zip(rendered.data()).zip(gt.data()) {
        let d = r - t;
        l1 += d.abs();
        *g = (1.0 - lambda_ssim) * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 } / n;
    }
    let mut loss = (1.0 - lambda_ssim) * l1 / n;
    if lambda_ssim > 0.0 {
        let (s, sg) = ssim_with_grad(rendered, gt)?;
        loss += lambda_ssim * (1.0 - s);
        for (g, d) in grad.data_mut().iter_mut().zip(sg.data()) {
            *g -= lambda_ssim * d;
        }
    }
    Ok((loss, grad))
}
