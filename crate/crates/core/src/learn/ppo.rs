//! PPO building blocks: GAE, advantage normalization, observation
//! normalization, the clipped loss with its gradient, and Adam.

use super::net::PolicyNet;
use super::LearnError;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Generalized advantage estimates and returns for time-major `T × N`
/// arrays. `dones[t]` marks a transition that ended its episode; the value
/// after it is never used. `last_values` are the values of the observations
/// following the final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), LearnError> {
    let n = last_values.len();
    if n == 0 || !rewards.len().is_multiple_of(n) || values.len() != rewards.len() || dones.len() != rewards.len() {
        return Err(LearnError::Shape(format!(
            "rewards {}, values {}, dones {}, last values {}",
            rewards.len(),
            values.len(),
            dones.len(),
            n
        )));
    }
    let t_len = rewards.len() / n;
    let mut adv = vec![0.0; rewards.len()];
    for env in 0..n {
        let mut next_value = last_values[env];
        let mut running = 0.0;
        for t in (0..t_len).rev() {
            let i = t * n + env;
            let keep = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * keep - values[i];
            running = delta + gamma * lambda * keep * running;
            adv[i] = running;
            next_value = values[i];
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to mean 0 and (population) standard deviation 1.
/// Constant inputs become zeros.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.is_empty() {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a = if std > 0.0 { (*a - mean) / std } else { 0.0 };
    }
}

/// Running mean and variance (Welford) of observation entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub clip: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim], clip: 10.0 }
    }

    /// Adds every row of a row-major batch.
    pub fn update(&mut self, batch: &[f64]) {
        let d = self.mean.len();
        for row in batch.chunks_exact(d) {
            self.count += 1.0;
            for (j, x) in row.iter().enumerate() {
                let delta = x - self.mean[j];
                self.mean[j] += delta / self.count;
                self.m2[j] += delta * (x - self.mean[j]);
            }
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        self.m2.iter().map(|m| if self.count > 1.0 { m / self.count } else { 1.0 }).collect()
    }

    pub fn apply(&self, batch: &[f64]) -> Vec<f64> {
        let var = self.variance();
        let d = self.mean.len();
        batch
            .iter()
            .enumerate()
            .map(|(i, x)| ((x - self.mean[i % d]) / (var[i % d] + 1e-8).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }
}

/// Coefficients of the PPO loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip: f64,
    pub value_clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

/// One minibatch: row-major observations and actions, plus per-sample
/// rollout quantities.
#[derive(Debug, Clone, Default)]
pub struct Minibatch {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub old_values: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    fn slice(&self, r: std::ops::Range<usize>, obs_dim: usize, act_dim: usize) -> Minibatch {
        Minibatch {
            obs: self.obs[r.start * obs_dim..r.end * obs_dim].to_vec(),
            actions: self.actions[r.start * act_dim..r.end * act_dim].to_vec(),
            old_log_prob: self.old_log_prob[r.clone()].to_vec(),
            advantages: self.advantages[r.clone()].to_vec(),
            returns: self.returns[r.clone()].to_vec(),
            old_values: self.old_values[r].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

impl LossStats {
    pub fn scaled(mut self, k: f64) -> Self {
        for v in [&mut self.loss, &mut self.policy_loss, &mut self.value_loss, &mut self.entropy, &mut self.clip_fraction, &mut self.approx_kl] {
            *v *= k;
        }
        self
    }

    pub fn add(mut self, o: &LossStats) -> Self {
        self.loss += o.loss;
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.clip_fraction += o.clip_fraction;
        self.approx_kl += o.approx_kl;
        self
    }
}

/// Clipped-surrogate loss with clipped value loss and entropy bonus over a
/// batch of `total` samples, of which `mb` is one part. Returns the part's
/// share of the loss and adds its gradient to `grad`.
fn loss_part(net: &PolicyNet, mb: &Minibatch, total: usize, cfg: &LossConfig, grad: &mut [f64]) -> LossStats {
    let b = total as f64;
    let f = net.forward(&mb.obs);
    let logp = net.log_prob(&f, &mb.actions);
    let ls = net.log_std();
    let a = net.act_dim;
    let mut d_mu = DMatrix::zeros(a, mb.len());
    let mut d_value = vec![0.0; mb.len()];
    let mut d_log_std = vec![0.0; a];
    let mut s = LossStats::default();
    for i in 0..mb.len() {
        let ratio = (logp[i] - mb.old_log_prob[i]).exp();
        let adv = mb.advantages[i];
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let (u, c) = (ratio * adv, clipped * adv);
        s.policy_loss -= u.min(c) / b;
        let active = u <= c || clipped == ratio;
        if clipped != ratio {
            s.clip_fraction += 1.0 / b;
        }
        s.approx_kl += ((ratio - 1.0) - (logp[i] - mb.old_log_prob[i])) / b;
        let d_logp = if active { -adv * ratio / b } else { 0.0 };
        if d_logp != 0.0 {
            for j in 0..a {
                let diff = mb.actions[i * a + j] - f.mu[(j, i)];
                let var = (2.0 * ls[j]).exp();
                d_mu[(j, i)] = d_logp * diff / var;
                d_log_std[j] += d_logp * (diff * diff / var - 1.0);
            }
        }
        let v = f.value[i];
        let (r, v_old) = (mb.returns[i], mb.old_values[i]);
        let v_clip = v_old + (v - v_old).clamp(-cfg.value_clip, cfg.value_clip);
        let (e1, e2) = ((v - r).powi(2), (v_clip - r).powi(2));
        s.value_loss += 0.5 * e1.max(e2) / b;
        d_value[i] = if e1 >= e2 {
            cfg.value_coef * (v - r) / b
        } else if (v - v_old).abs() < cfg.value_clip {
            cfg.value_coef * (v_clip - r) / b
        } else {
            0.0
        };
    }
    let share = mb.len() as f64 / b;
    s.entropy = net.entropy() * share;
    for d in d_log_std.iter_mut() {
        *d -= cfg.entropy_coef * share;
    }
    s.loss = s.policy_loss + cfg.value_coef * s.value_loss - cfg.entropy_coef * s.entropy;
    net.backward(&f, &d_mu, &d_value, &d_log_std, grad);
    s
}

/// Samples per data-parallel chunk of a minibatch.
const CHUNK: usize = 256;

/// Loss statistics and gradient of a minibatch. Chunks are evaluated in
/// parallel and summed in a fixed order, so the result does not depend on
/// the thread count.
pub fn ppo_loss(net: &PolicyNet, mb: &Minibatch, cfg: &LossConfig) -> (LossStats, Vec<f64>) {
    let n = mb.len();
    let ranges: Vec<_> = (0..n).step_by(CHUNK).map(|s| s..(s + CHUNK).min(n)).collect();
    let parts: Vec<(LossStats, Vec<f64>)> = ranges
        .into_par_iter()
        .map(|r| {
            let mut g = vec![0.0; net.num_params()];
            let part = mb.slice(r, net.obs_dim, net.act_dim);
            (loss_part(net, &part, n, cfg, &mut g), g)
        })
        .collect();
    let mut grad = vec![0.0; net.num_params()];
    let mut stats = LossStats::default();
    for (s, g) in parts {
        stats = stats.add(&s);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (stats, grad)
}

/// Scales `grad` down to at most `max_norm`; returns the norm before.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
