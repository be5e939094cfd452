//! Two-hidden-layer tanh MLP with a Gaussian policy head and a value head,
//! differentiated by hand.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const HIDDEN: usize = 64;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Dense layer stored in the flat parameter vector as a row-major
/// `out × in` weight block followed by `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Dense {
    input: usize,
    output: usize,
    offset: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.output * (self.input + 1)
    }

    fn weight(&self, p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.output, self.input, &p[self.offset..self.offset + self.output * self.input])
    }

    fn bias(&self, p: &[f64]) -> DVector<f64> {
        let b = self.offset + self.output * self.input;
        DVector::from_column_slice(&p[b..b + self.output])
    }

    /// `W x + b` for a column batch.
    fn apply(&self, p: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = self.weight(p) * x;
        let b = self.bias(p);
        for mut col in z.column_iter_mut() {
            col += &b;
        }
        z
    }

    /// Accumulates weight and bias gradients for upstream `dz` and input `x`;
    /// returns the gradient with respect to `x`.
    fn backward(&self, p: &[f64], x: &DMatrix<f64>, dz: &DMatrix<f64>, grad: &mut [f64]) -> DMatrix<f64> {
        let gw = dz * x.transpose();
        for r in 0..self.output {
            for c in 0..self.input {
                grad[self.offset + r * self.input + c] += gw[(r, c)];
            }
        }
        let b = self.offset + self.output * self.input;
        for (r, row) in dz.row_iter().enumerate() {
            grad[b + r] += row.sum();
        }
        self.weight(p).transpose() * dz
    }

    fn init(&self, p: &mut [f64], gain: f64, rng: &mut ChaCha8Rng) {
        let bound = gain * (6.0 / (self.input + self.output) as f64).sqrt();
        for w in &mut p[self.offset..self.offset + self.output * self.input] {
            *w = rng.gen_range(-bound..bound);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layout {
    a1: Dense,
    a2: Dense,
    mu: Dense,
    critic: Option<(Dense, Dense)>,
    v: Dense,
    log_std: usize,
    total: usize,
}

/// Gaussian policy with state-independent log standard deviation, plus a
/// value function that either has its own trunk or shares the policy's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub shared_trunk: bool,
    pub params: Vec<f64>,
    layout: Layout,
}

/// Intermediate values of one forward pass over a column batch.
pub struct Forward {
    x: DMatrix<f64>,
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
    critic: Option<(DMatrix<f64>, DMatrix<f64>)>,
    /// `act_dim × B`.
    pub mu: DMatrix<f64>,
    /// `B` state values.
    pub value: Vec<f64>,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, act_dim: usize, shared_trunk: bool, init_log_std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut offset = 0;
        let mut dense = |input, output| {
            let d = Dense { input, output, offset };
            offset += d.len();
            d
        };
        let a1 = dense(obs_dim, HIDDEN);
        let a2 = dense(HIDDEN, HIDDEN);
        let mu = dense(HIDDEN, act_dim);
        let critic = (!shared_trunk).then(|| (dense(obs_dim, HIDDEN), dense(HIDDEN, HIDDEN)));
        let v = dense(HIDDEN, 1);
        let layout = Layout { a1, a2, mu, critic, v, log_std: offset, total: offset + act_dim };
        let mut params = vec![0.0; layout.total];
        let tanh_gain = 5.0 / 3.0;
        a1.init(&mut params, tanh_gain, rng);
        a2.init(&mut params, tanh_gain, rng);
        mu.init(&mut params, 0.01, rng);
        if let Some((c1, c2)) = critic {
            c1.init(&mut params, tanh_gain, rng);
            c2.init(&mut params, tanh_gain, rng);
        }
        v.init(&mut params, 1.0, rng);
        params[layout.log_std..].fill(init_log_std);
        Self { obs_dim, act_dim, shared_trunk, params, layout }
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.layout.log_std..]
    }

    /// Forward pass over `B` row-major observations.
    pub fn forward(&self, obs: &[f64]) -> Forward {
        let b = obs.len() / self.obs_dim;
        let x = DMatrix::from_column_slice(self.obs_dim, b, obs);
        let p = &self.params;
        let l = &self.layout;
        let h1 = l.a1.apply(p, &x).map(f64::tanh);
        let h2 = l.a2.apply(p, &h1).map(f64::tanh);
        let mu = l.mu.apply(p, &h2);
        let (critic, top) = match l.critic {
            Some((c1, c2)) => {
                let g1 = c1.apply(p, &x).map(f64::tanh);
                let g2 = c2.apply(p, &g1).map(f64::tanh);
                let top = g2.clone();
                (Some((g1, g2)), top)
            }
            None => (None, h2.clone()),
        };
        let value = l.v.apply(p, &top).iter().copied().collect();
        Forward { x, h1, h2, critic, mu, value }
    }

    /// Adds the parameter gradient of a loss with upstream gradients
    /// `d_mu` (`act_dim × B`), `d_value` (`B`) and `d_log_std` to `grad`.
    pub fn backward(&self, f: &Forward, d_mu: &DMatrix<f64>, d_value: &[f64], d_log_std: &[f64], grad: &mut [f64]) {
        let p = &self.params;
        let l = &self.layout;
        let dv = DMatrix::from_row_slice(1, d_value.len(), d_value);
        let tanh_back = |h: &DMatrix<f64>, dh: DMatrix<f64>| dh.zip_map(h, |d, y| d * (1.0 - y * y));
        let mut dh2 = l.mu.backward(p, &f.h2, d_mu, grad);
        match (&l.critic, &f.critic) {
            (Some((c1, c2)), Some((g1, g2))) => {
                let dg2 = l.v.backward(p, g2, &dv, grad);
                let dg1 = c2.backward(p, g1, &tanh_back(g2, dg2), grad);
                c1.backward(p, &f.x, &tanh_back(g1, dg1), grad);
            }
            _ => dh2 += l.v.backward(p, &f.h2, &dv, grad),
        }
        let dh1 = l.a2.backward(p, &f.h1, &tanh_back(&f.h2, dh2), grad);
        l.a1.backward(p, &f.x, &tanh_back(&f.h1, dh1), grad);
        for (g, d) in grad[l.log_std..].iter_mut().zip(d_log_std) {
            *g += d;
        }
    }

    /// Log density of `action` (row-major `B × act_dim`) under the policy.
    pub fn log_prob(&self, f: &Forward, actions: &[f64]) -> Vec<f64> {
        let ls = self.log_std();
        let norm: f64 = ls.iter().sum::<f64>() + 0.5 * self.act_dim as f64 * LN_2PI;
        (0..f.mu.ncols())
            .map(|i| {
                let q: f64 = (0..self.act_dim).map(|j| ((actions[i * self.act_dim + j] - f.mu[(j, i)]) / ls[j].exp()).powi(2)).sum();
                -0.5 * q - norm
            })
            .collect()
    }

    /// Differential entropy of the Gaussian, identical for every state.
    pub fn entropy(&self) -> f64 {
        self.log_std().iter().map(|l| l + 0.5 * (1.0 + LN_2PI)).sum()
    }

    /// Samples one action per column of `f` (row-major output).
    pub fn sample(&self, f: &Forward, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let ls = self.log_std().to_vec();
        let mut out = Vec::with_capacity(f.mu.len());
        for i in 0..f.mu.ncols() {
            for (j, l) in ls.iter().enumerate() {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                out.push(f.mu[(j, i)] + l.exp() * z);
            }
        }
        out
    }

    /// Policy means, row-major.
    pub fn mean_actions(&self, f: &Forward) -> Vec<f64> {
        f.mu.as_slice().to_vec()
    }
}
