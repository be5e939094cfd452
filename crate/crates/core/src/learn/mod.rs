//! Minimal PPO over the vectorized env protocol.

mod net;
mod ppo;

pub use net::{Forward, PolicyNet, HIDDEN};
pub use ppo::{clip_grad_norm, compute_gae, normalize_advantages, ppo_loss, Adam, LossConfig, LossStats, Minibatch, ObsNormalizer};

use crate::envs::{EnvError, Environment, EvalWrapper, VecEnv};
use crate::tasks::{make_task_with, Overrides, TaskError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at iteration {iteration}; diagnostics: {dump}")]
    NonFinite { iteration: usize, dump: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// PPO hyperparameters. The defaults are original to this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub num_envs: usize,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub clip: f64,
    /// Clip range of the value update, in scaled-reward units.
    pub value_clip: f64,
    /// Multiplies rewards before advantages and returns are computed.
    pub reward_scale: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub total_steps: u64,
    /// Evaluate every this many iterations (and after the last one).
    pub eval_interval: usize,
    pub eval_envs: usize,
    pub init_log_std: f64,
    pub shared_trunk: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            num_envs: 256,
            rollout_len: 32,
            epochs: 4,
            minibatches: 4,
            clip: 0.2,
            value_clip: 0.2,
            reward_scale: 0.01,
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            total_steps: 2_000_000,
            eval_interval: 10,
            eval_envs: 32,
            init_log_std: -0.5,
            shared_trunk: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let counts = [self.num_envs, self.rollout_len, self.epochs, self.minibatches, self.eval_interval, self.eval_envs];
        let reals = [self.value_clip, self.reward_scale, self.gamma, self.gae_lambda, self.learning_rate, self.value_coef, self.max_grad_norm];
        if counts.contains(&0) || self.total_steps == 0 || reals.iter().any(|r| !(*r > 0.0)) || !(self.entropy_coef >= 0.0) {
            return Err(LearnError::Config("counts and coefficients must be positive".into()));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(LearnError::Config(format!("clip {} outside (0, 1)", self.clip)));
        }
        if self.num_envs * self.rollout_len < self.minibatches {
            return Err(LearnError::Config("fewer samples per rollout than minibatches".into()));
        }
        if self.iterations() == 0 {
            return Err(LearnError::Config("total_steps is smaller than one rollout".into()));
        }
        Ok(())
    }

    /// Whole rollouts that fit in `total_steps`.
    pub fn iterations(&self) -> usize {
        (self.total_steps / (self.num_envs * self.rollout_len) as u64) as usize
    }

    fn loss(&self) -> LossConfig {
        LossConfig { clip: self.clip, value_clip: self.value_clip, value_coef: self.value_coef, entropy_coef: self.entropy_coef }
    }
}

/// Aggregated eval-wrapper metrics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub success_once: f64,
    pub success_at_end: f64,
    pub fail_once: f64,
    pub mean_return: f64,
}

/// One JSON line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub env_steps: u64,
    pub wall_seconds: f64,
    pub rollout_seconds: f64,
    pub update_seconds: f64,
    /// Mean return of training episodes that ended during this rollout.
    pub mean_return: Option<f64>,
    pub episodes_finished: usize,
    pub stats: LossStats,
    pub eval: Option<EvalSummary>,
}

impl LogRecord {
    /// The record without its wall-clock fields.
    pub fn timeless(&self) -> LogRecord {
        LogRecord { wall_seconds: 0.0, rollout_seconds: 0.0, update_seconds: 0.0, ..self.clone() }
    }
}

pub struct Trained {
    pub net: PolicyNet,
    pub normalizer: ObsNormalizer,
    pub log: Vec<LogRecord>,
}

/// Saved policy: network plus frozen observation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub task: String,
    pub overrides: Overrides,
    pub config: PpoConfig,
    pub seed: u64,
    pub net: PolicyNet,
    pub normalizer: ObsNormalizer,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self, LearnError> {
        let bytes = std::fs::read(path).map_err(io(path))?;
        serde_json::from_slice(&bytes).map_err(|e| LearnError::Io { path: path.display().to_string(), source: e.into() })
    }
}

/// Deterministic-policy evaluation of `episodes` envs through the eval
/// wrapper, with observation statistics frozen.
pub fn evaluate(net: &PolicyNet, normalizer: &ObsNormalizer, env: VecEnv, seed: u64) -> Result<EvalSummary, LearnError> {
    let mut w = EvalWrapper::new(env);
    let m = w.run_episode(seed, |_, obs| {
        let f = net.forward(&normalizer.apply(&obs.state));
        net.mean_actions(&f).into_iter().map(|a| a.clamp(-1.0, 1.0)).collect()
    })?;
    let n = m.len() as f64;
    let rate = |f: fn(&crate::envs::EpisodeMetrics) -> bool| m.iter().filter(|x| f(x)).count() as f64 / n;
    Ok(EvalSummary {
        episodes: m.len(),
        success_once: rate(|x| x.success_once),
        success_at_end: rate(|x| x.success_at_end),
        fail_once: rate(|x| x.fail_once),
        mean_return: m.iter().map(|x| x.episode_return).sum::<f64>() / n,
    })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LearnError + '_ {
    move |source| LearnError::Io { path: path.display().to_string(), source }
}

/// Trains a PPO policy on task `task` with state observations. With `out`,
/// writes `config.json`, `log.jsonl` (one [`LogRecord`] per iteration) and
/// `policy.json` there.
pub fn ppo_train(task: &str, overrides: &Overrides, cfg: &PpoConfig, seed: u64, out: Option<&Path>) -> Result<Trained, LearnError> {
    cfg.validate()?;
    let mut env = make_task_with(task, cfg.num_envs, seed, overrides)?;
    let eval_seed = seed.wrapping_add(1_000_003);
    let mut log_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
            let p = dir.join("config.json");
            std::fs::write(&p, serde_json::to_vec_pretty(&(task, cfg, seed, overrides)).expect("config serializes")).map_err(io(&p))?;
            let p = dir.join("log.jsonl");
            Some((File::create(&p).map(BufWriter::new).map_err(io(&p))?, p))
        }
        None => None,
    };
    let (n, obs_dim, act_dim) = (cfg.num_envs, env.state_dim(), env.action_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = PolicyNet::new(obs_dim, act_dim, cfg.shared_trunk, cfg.init_log_std, &mut rng);
    let mut adam = Adam::new(net.num_params(), cfg.learning_rate);
    let mut normalizer = ObsNormalizer::new(obs_dim);
    let mut obs = env.reset(Some(seed), None)?.state;
    let start = Instant::now();
    let mut log = Vec::new();
    let t_len = cfg.rollout_len;
    let iterations = cfg.iterations();
    for iteration in 1..=iterations {
        let t0 = Instant::now();
        let mut norm_obs = Vec::with_capacity(t_len * n * obs_dim);
        let mut actions = Vec::with_capacity(t_len * n * act_dim);
        let (mut logp, mut values, mut rewards, mut dones) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let (mut finished, mut return_sum) = (0usize, 0.0);
        for _ in 0..t_len {
            normalizer.update(&obs);
            let x = normalizer.apply(&obs);
            let f = net.forward(&x);
            norm_obs.extend(x);
            let a = net.sample(&f, &mut rng);
            logp.extend(net.log_prob(&f, &a));
            values.extend_from_slice(&f.value);
            let clipped: Vec<f64> = a.iter().map(|x| x.clamp(-1.0, 1.0)).collect();
            actions.extend(a);
            let res = env.step(&clipped)?;
            let mut r: Vec<f64> = res.reward.iter().map(|x| x * cfg.reward_scale).collect();
            let bootstrap: Vec<usize> = (0..n).filter(|e| res.truncated[*e] && !res.terminated[*e]).collect();
            if !bootstrap.is_empty() {
                let finals: Vec<f64> = bootstrap.iter().flat_map(|e| res.info[*e].final_obs.clone().expect("final obs on reset")).collect();
                let fv = net.forward(&normalizer.apply(&finals)).value;
                for (k, e) in bootstrap.iter().enumerate() {
                    r[*e] += cfg.gamma * fv[k];
                }
            }
            for i in &res.info {
                if let Some(m) = i.episode {
                    finished += 1;
                    return_sum += m.episode_return;
                }
            }
            rewards.extend(r);
            dones.extend((0..n).map(|e| res.terminated[e] || res.truncated[e]));
            obs = res.obs.state;
        }
        let last_values = net.forward(&normalizer.apply(&obs)).value;
        let (mut adv, returns) = compute_gae(&rewards, &values, &dones, &last_values, cfg.gamma, cfg.gae_lambda)?;
        normalize_advantages(&mut adv);
        let rollout_seconds = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let total = t_len * n;
        let mb_size = total / cfg.minibatches;
        let mut order: Vec<usize> = (0..total).collect();
        let mut stats = LossStats::default();
        let mut updates = 0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks_exact(mb_size) {
                let mut mb = Minibatch::default();
                for &i in chunk {
                    mb.obs.extend_from_slice(&norm_obs[i * obs_dim..(i + 1) * obs_dim]);
                    mb.actions.extend_from_slice(&actions[i * act_dim..(i + 1) * act_dim]);
                    mb.old_log_prob.push(logp[i]);
                    mb.advantages.push(adv[i]);
                    mb.returns.push(returns[i]);
                    mb.old_values.push(values[i]);
                }
                let (s, mut grad) = ppo_loss(&net, &mb, &cfg.loss());
                if !s.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    let dump = serde_json::json!({
                        "stats": format!("{s:?}"),
                        "max_abs_param": net.params.iter().fold(0.0f64, |m, p| m.max(p.abs())),
                        "log_std": net.log_std(),
                        "max_abs_advantage": mb.advantages.iter().fold(0.0f64, |m, a| m.max(a.abs())),
                        "max_abs_return": mb.returns.iter().fold(0.0f64, |m, a| m.max(a.abs())),
                    });
                    if let Some(dir) = out {
                        let p = dir.join("nan_dump.json");
                        std::fs::write(&p, dump.to_string()).map_err(io(&p))?;
                    }
                    return Err(LearnError::NonFinite { iteration, dump: dump.to_string() });
                }
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
                adam.step(&mut net.params, &grad);
                stats = stats.add(&s);
                updates += 1;
            }
        }
        let stats = stats.scaled(1.0 / updates as f64);
        let update_seconds = t1.elapsed().as_secs_f64();
        let eval = if iteration % cfg.eval_interval == 0 || iteration == iterations {
            let eval_env = make_task_with(task, cfg.eval_envs, seed, overrides)?;
            Some(evaluate(&net, &normalizer, eval_env, eval_seed)?)
        } else {
            None
        };
        let record = LogRecord {
            iteration,
            env_steps: (iteration * total) as u64,
            wall_seconds: start.elapsed().as_secs_f64(),
            rollout_seconds,
            update_seconds,
            mean_return: (finished > 0).then(|| return_sum / finished as f64),
            episodes_finished: finished,
            stats,
            eval,
        };
        if let Some((w, p)) = &mut log_file {
            let line = serde_json::to_string(&record).expect("log record serializes");
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(io(p))?;
        }
        log.push(record);
    }
    if let Some(dir) = out {
        let p: PathBuf = dir.join("policy.json");
        let ck = Checkpoint { task: task.into(), overrides: overrides.clone(), config: cfg.clone(), seed, net: net.clone(), normalizer: normalizer.clone() };
        std::fs::write(&p, serde_json::to_vec(&ck).expect("checkpoint serializes")).map_err(io(&p))?;
    }
    Ok(Trained { net, normalizer, log })
}

#[cfg(test)]
mod tests;
