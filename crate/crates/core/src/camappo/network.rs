//! Shared-trunk actor-critic MLP with hand-written backpropagation, and Adam.

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkShape {
    pub obs: usize,
    pub hidden: usize,
    pub act: usize,
}

/// Offsets of each parameter group in the flat vector.
#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wmu: usize,
    bmu: usize,
    log_std: usize,
    wv: usize,
    bv: usize,
    total: usize,
}

impl NetworkShape {
    fn offsets(&self) -> Offsets {
        let (o, h, a) = (self.obs, self.hidden, self.act);
        let w1 = 0;
        let b1 = w1 + h * o;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let wmu = b2 + h;
        let bmu = wmu + a * h;
        let log_std = bmu + a;
        let wv = log_std + a;
        let bv = wv + h;
        Offsets { w1, b1, w2, b2, wmu, bmu, log_std, wv, bv, total: bv + 1 }
    }

    pub fn n_params(&self) -> usize {
        self.offsets().total
    }
}

/// Two tanh hidden layers feeding a Gaussian mean head and a value head; the
/// log standard deviation is a free, state-independent parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub shape: NetworkShape,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub input: Vec<f64>,
    pub hidden1: Vec<f64>,
    pub hidden2: Vec<f64>,
    pub mean: Vec<f64>,
    pub value: f64,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        *o = b[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl PolicyNetwork {
    /// Scaled-normal trunk weights, small actor weights, zero biases.
    pub fn new(shape: NetworkShape, init_log_std: f64, rng: &mut RandomStream) -> Self {
        let off = shape.offsets();
        let mut params = vec![0.0; off.total];
        let (o, h, a) = (shape.obs, shape.hidden, shape.act);
        let s1 = 1.0 / (o.max(1) as f64).sqrt();
        let s2 = 1.0 / (h.max(1) as f64).sqrt();
        params[off.w1..off.b1].iter_mut().for_each(|p| *p = s1 * rng.normal());
        params[off.w2..off.b2].iter_mut().for_each(|p| *p = s2 * rng.normal());
        params[off.wmu..off.wmu + a * h].iter_mut().for_each(|p| *p = 0.01 * s2 * rng.normal());
        params[off.log_std..off.log_std + a].iter_mut().for_each(|p| *p = init_log_std);
        params[off.wv..off.bv].iter_mut().for_each(|p| *p = s2 * rng.normal());
        Self { shape, params }
    }

    pub fn log_std(&self) -> &[f64] {
        let off = self.shape.offsets();
        &self.params[off.log_std..off.log_std + self.shape.act]
    }

    pub fn forward(&self, obs: &[f64]) -> ForwardPass {
        let off = self.shape.offsets();
        let (h, a) = (self.shape.hidden, self.shape.act);
        let p = &self.params;
        let mut hidden1 = vec![0.0; h];
        affine(&p[off.w1..off.b1], &p[off.b1..off.w2], obs, &mut hidden1);
        hidden1.iter_mut().for_each(|v| *v = v.tanh());
        let mut hidden2 = vec![0.0; h];
        affine(&p[off.w2..off.b2], &p[off.b2..off.wmu], &hidden1, &mut hidden2);
        hidden2.iter_mut().for_each(|v| *v = v.tanh());
        let mut mean = vec![0.0; a];
        affine(&p[off.wmu..off.bmu], &p[off.bmu..off.log_std], &hidden2, &mut mean);
        let value = p[off.bv] + p[off.wv..off.bv].iter().zip(&hidden2).map(|(w, x)| w * x).sum::<f64>();
        ForwardPass { input: obs.to_vec(), hidden1, hidden2, mean, value }
    }

    pub fn backward_log_std(&self, d_log_std: &[f64], grad: &mut [f64]) {
        let start = self.shape.offsets().log_std;
        for (g, d) in grad[start..start + self.shape.act].iter_mut().zip(d_log_std) {
            *g += d;
        }
    }

    /// Accumulates into `grad` the parameter gradient of a scalar loss whose
    /// partials are `d_mean` (w.r.t. the Gaussian mean), `d_value` (w.r.t. the
    /// critic output) and `d_log_std`.
    pub fn backward(&self, fp: &ForwardPass, d_mean: &[f64], d_value: f64, d_log_std: &[f64], grad: &mut [f64]) {
        let off = self.shape.offsets();
        let (o, h, a) = (self.shape.obs, self.shape.hidden, self.shape.act);
        let p = &self.params;

        let mut d_h2 = vec![0.0; h];
        for i in 0..a {
            let g = d_mean[i];
            if g == 0.0 {
                continue;
            }
            grad[off.bmu + i] += g;
            let row = off.wmu + i * h;
            for j in 0..h {
                grad[row + j] += g * fp.hidden2[j];
                d_h2[j] += g * p[row + j];
            }
        }
        if d_value != 0.0 {
            grad[off.bv] += d_value;
            for j in 0..h {
                grad[off.wv + j] += d_value * fp.hidden2[j];
                d_h2[j] += d_value * p[off.wv + j];
            }
        }
        self.backward_log_std(d_log_std, grad);

        let d_z2: Vec<f64> = d_h2.iter().zip(&fp.hidden2).map(|(d, y)| d * (1.0 - y * y)).collect();
        let mut d_h1 = vec![0.0; h];
        for i in 0..h {
            let g = d_z2[i];
            grad[off.b2 + i] += g;
            let row = off.w2 + i * h;
            for j in 0..h {
                grad[row + j] += g * fp.hidden1[j];
                d_h1[j] += g * p[row + j];
            }
        }
        for i in 0..h {
            let g = d_h1[i] * (1.0 - fp.hidden1[i] * fp.hidden1[i]);
            grad[off.b1 + i] += g;
            let row = off.w1 + i * o;
            for j in 0..o {
                grad[row + j] += g * fp.input[j];
            }
        }
    }
}

/// Adam with optional global gradient-norm clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: Option<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, max_grad_norm: Option<f64>) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = match self.max_grad_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> PolicyNetwork {
        PolicyNetwork::new(NetworkShape { obs: 3, hidden: 4, act: 2 }, -0.3, &mut crate::seeded_rng(3))
    }

    #[test]
    fn parameter_count() {
        let s = NetworkShape { obs: 3, hidden: 4, act: 2 };
        assert_eq!(s.n_params(), 12 + 4 + 16 + 4 + 8 + 2 + 2 + 4 + 1);
        assert_eq!(toy().params.len(), s.n_params());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = toy();
        let x = [0.3, -1.2, 0.7];
        let dm = [0.4, -1.1];
        let dv = 0.6;
        let dls = [0.2, 0.5];
        let loss = |n: &PolicyNetwork| {
            let f = n.forward(&x);
            f.mean.iter().zip(&dm).map(|(m, d)| m * d).sum::<f64>() + dv * f.value + n.log_std().iter().zip(&dls).map(|(l, d)| l * d).sum::<f64>()
        };
        let fp = net.forward(&x);
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&fp, &dm, dv, &dls, &mut grad);
        for i in 0..net.params.len() {
            let p0 = net.params[i];
            net.params[i] = p0 + 1e-6;
            let up = loss(&net);
            net.params[i] = p0 - 1e-6;
            let dn = loss(&net);
            net.params[i] = p0;
            let fd = (up - dn) / 2e-6;
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1, None);
        for _ in 0..500 {
            let g = vec![2.0 * x[0], 2.0 * x[1]];
            opt.step(&mut x, &g);
        }
        assert!(x[0].abs() < 1e-2 && x[1].abs() < 1e-2);
    }
}
