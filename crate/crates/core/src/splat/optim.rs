//! Adam with one learning rate per parameter group.

use super::field::GaussianField;
use super::render::FieldGradient;

const PARAMS: usize = 14;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    /// Initial mean rate, multiplied by the scene extent.
    pub mean_init: f64,
    /// Final mean rate reached at the last step, multiplied by the scene extent.
    pub mean_final: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { mean_init: 1.6e-3, mean_final: 1.6e-5, log_scale: 5e-3, rotation: 1e-3, opacity: 5e-2, color: 1e-2 }
    }
}

impl LearningRates {
    /// Exponentially interpolated mean rate at `step` of `total`.
    pub fn mean_at(&self, step: usize, total: usize, extent: f64) -> f64 {
        let t = if total == 0 { 0.0 } else { (step as f64 / total as f64).clamp(0.0, 1.0) };
        extent * (self.mean_init.ln() * (1.0 - t) + self.mean_final.ln() * t).exp()
    }
}

/// Where a primitive of a rebuilt field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Kept(usize),
    New,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<[f64; PARAMS]>,
    v: Vec<[f64; PARAMS]>,
    t: u64,
}

fn pack(g: &FieldGradient, i: usize) -> [f64; PARAMS] {
    let (m, s, r, c) = (g.mean[i], g.log_scale[i], g.rotation[i], g.color[i]);
    [m[0], m[1], m[2], s[0], s[1], s[2], r[0], r[1], r[2], r[3], g.opacity_logit[i], c[0], c[1], c[2]]
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![[0.0; PARAMS]; n], v: vec![[0.0; PARAMS]; n], t: 0 }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Rebuilds the moment buffers after the field was densified or pruned.
    pub fn remap(&mut self, origins: &[Origin]) {
        let pick = |buf: &Vec<[f64; PARAMS]>, o: &Origin| match o {
            Origin::Kept(i) => buf[*i],
            Origin::New => [0.0; PARAMS],
        };
        self.m = origins.iter().map(|o| pick(&self.m, o)).collect();
        self.v = origins.iter().map(|o| pick(&self.v, o)).collect();
    }

    pub fn step(&mut self, field: &mut GaussianField, grad: &FieldGradient, lr: &LearningRates, mean_lr: f64) {
        assert_eq!(self.m.len(), field.len(), "optimizer state out of sync with field");
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let rates: [f64; PARAMS] = [
            mean_lr, mean_lr, mean_lr, lr.log_scale, lr.log_scale, lr.log_scale, lr.rotation, lr.rotation, lr.rotation,
            lr.rotation, lr.opacity, lr.color, lr.color, lr.color,
        ];
        for (i, p) in field.primitives.iter_mut().enumerate() {
            let g = pack(grad, i);
            let mut delta = [0.0; PARAMS];
            for k in 0..PARAMS {
                self.m[i][k] = BETA1 * self.m[i][k] + (1.0 - BETA1) * g[k];
                self.v[i][k] = BETA2 * self.v[i][k] + (1.0 - BETA2) * g[k] * g[k];
                let mh = self.m[i][k] / bc1;
                let vh = self.v[i][k] / bc2;
                delta[k] = -rates[k] * mh / (vh.sqrt() + EPS);
            }
            for a in 0..3 {
                p.mean[a] += delta[a];
                p.log_scale[a] += delta[3 + a];
                p.color[a] += delta[11 + a];
            }
            for a in 0..4 {
                p.rotation[a] += delta[6 + a];
            }
            p.opacity_logit += delta[10];
            p.rotation = p.unit_rotation();
        }
    }
}
