use super::{EnvError, Environment, EpisodeAccumulator, EpisodeMetrics, MetricsRecord, Obs, StepResult};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Evaluation wrapper: episodes always run to the time limit, and metrics are
/// emitted once per episode at truncation.
pub struct EvalWrapper<E: Environment> {
    pub inner: E,
    acc: Vec<EpisodeAccumulator>,
    emitted: Vec<bool>,
    finished: Vec<MetricsRecord>,
    sink: Option<(String, BufWriter<File>)>,
}

impl<E: Environment> EvalWrapper<E> {
    pub fn new(mut inner: E) -> Self {
        inner.set_eval_mode(true);
        let n = inner.num_envs();
        Self { inner, acc: vec![EpisodeAccumulator::default(); n], emitted: vec![false; n], finished: Vec::new(), sink: None }
    }

    /// Also appends every finished episode as one JSON line to `path`.
    pub fn with_sink(mut self, path: &Path) -> Result<Self, EnvError> {
        let f = File::create(path).map_err(|source| EnvError::Io { path: path.display().to_string(), source })?;
        self.sink = Some((path.display().to_string(), BufWriter::new(f)));
        Ok(self)
    }

    pub fn reset(&mut self, seed: Option<u64>, env_mask: Option<&[bool]>) -> Result<Obs, EnvError> {
        let obs = self.inner.reset(seed, env_mask)?;
        for env in 0..self.inner.num_envs() {
            if env_mask.is_none_or(|m| m[env]) {
                self.acc[env] = EpisodeAccumulator::default();
                self.emitted[env] = false;
            }
        }
        Ok(obs)
    }

    pub fn step(&mut self, actions: &[f64]) -> Result<StepResult, EnvError> {
        let mut res = self.inner.step(actions)?;
        for env in 0..self.inner.num_envs() {
            res.terminated[env] = false;
            res.info[env].episode = None;
            if self.emitted[env] {
                continue;
            }
            let i = &res.info[env];
            self.acc[env].push(res.reward[env], i.success, i.fail);
            if res.truncated[env] {
                let metrics = self.acc[env].finish();
                self.emitted[env] = true;
                res.info[env].episode = Some(metrics);
                let record = MetricsRecord { metrics, env_id: env, seed: self.inner.episode_seed(env) };
                if let Some((path, w)) = &mut self.sink {
                    let line = serde_json::to_string(&record).expect("metrics serialize");
                    writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|source| EnvError::Io { path: path.clone(), source })?;
                }
                self.finished.push(record);
            }
        }
        Ok(res)
    }

    /// Runs one full episode in every env with `policy` and returns the
    /// metrics of each env.
    pub fn run_episode(&mut self, seed: u64, mut policy: impl FnMut(&E, &Obs) -> Vec<f64>) -> Result<Vec<EpisodeMetrics>, EnvError> {
        let mut obs = self.reset(Some(seed), None)?;
        let start = self.finished.len();
        while self.emitted.iter().any(|e| !e) {
            let a = policy(&self.inner, &obs);
            obs = self.step(&a)?.obs;
        }
        let mut out = vec![EpisodeMetrics::default(); self.inner.num_envs()];
        for r in &self.finished[start..] {
            out[r.env_id] = r.metrics;
        }
        Ok(out)
    }

    /// Every episode finished so far.
    pub fn finished(&self) -> &[MetricsRecord] {
        &self.finished
    }
}
