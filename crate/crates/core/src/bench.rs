//! Throughput benchmark: frames per second and peak memory against the
//! number of envs, with and without rendering.
//!
//! Each setting builds the task, runs `warmup_steps` untimed steps, then
//! times `steps` random actions. The timed region holds controller updates,
//! physics and, when cameras are on, rendering plus the observation fetch.
//! Rewards and terminations are never evaluated inside it; every result
//! carries the number of task evaluations seen there, which is always 0.

use crate::dynamics::SimConfig;
use crate::envs::{Environment, ObsMode};
use crate::render::CameraSetup;
use crate::tasks::{make_task_with, Overrides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_STEPS: usize = 1000;
/// Camera setups of the reference ablation grid.
pub const CAMERA_GRID: [&str; 6] = ["none", "1x128x128", "1x256x256", "1x512x512", "1x640x480", "3x320x180"];
/// Distinct random action batches cycled through the timed loop.
const ACTION_BANK: usize = 16;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("no results to write")]
    Empty,
}

/// One benchmark setting. Failed settings keep their row with empty
/// measurements and the reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub task: String,
    pub num_envs: usize,
    pub steps: usize,
    pub wall_seconds: Option<f64>,
    /// `num_envs · steps / wall_seconds`.
    pub fps: Option<f64>,
    /// Host peak resident set size of the process so far.
    pub peak_rss_bytes: Option<u64>,
    pub cameras: String,
    pub obs_mode: String,
    #[serde(skip)]
    pub evaluations_in_timed_region: u64,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub task: String,
    pub num_envs: Vec<usize>,
    pub steps: usize,
    pub warmup_steps: usize,
    pub cameras: CameraSetup,
    pub sim: SimConfig,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(task: &str, num_envs: &[usize]) -> Self {
        Self {
            task: task.into(),
            num_envs: num_envs.to_vec(),
            steps: DEFAULT_STEPS,
            warmup_steps: 20,
            cameras: CameraSetup::NONE,
            sim: SimConfig::default(),
            seed: 0,
        }
    }
}

/// Source of wall-clock seconds.
pub trait Clock {
    fn now(&mut self) -> f64;
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub fn fps(num_envs: usize, steps: usize, wall_seconds: f64) -> f64 {
    (num_envs * steps) as f64 / wall_seconds
}

/// `VmHWM` of this process in bytes; 0 where `/proc` is unavailable.
pub fn peak_rss_bytes() -> u64 {
    let Ok(status) = std::fs::read_to_string("/proc/self/status") else { return 0 };
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmHWM:"))
        .and_then(|v| v.trim().trim_end_matches("kB").trim().parse::<u64>().ok())
        .map_or(0, |kb| kb * 1024)
}

pub fn run_bench(cfg: &BenchConfig) -> Vec<BenchResult> {
    run_bench_with(cfg, &mut SystemClock::default())
}

/// Runs every `num_envs` setting in ascending order with an explicit clock.
pub fn run_bench_with(cfg: &BenchConfig, clock: &mut dyn Clock) -> Vec<BenchResult> {
    let mut sizes = cfg.num_envs.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let obs_mode = if cfg.cameras.is_none() { ObsMode::State } else { ObsMode::Rgbd };
    sizes
        .into_iter()
        .map(|n| {
            let mut row = BenchResult {
                task: cfg.task.clone(),
                num_envs: n,
                steps: cfg.steps,
                wall_seconds: None,
                fps: None,
                peak_rss_bytes: None,
                cameras: cfg.cameras.to_string(),
                obs_mode: obs_mode.name().into(),
                evaluations_in_timed_region: 0,
                error: None,
            };
            let run = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| one_setting(cfg, n, obs_mode, clock)));
            match run {
                Ok(Ok((wall, evals))) => {
                    row.wall_seconds = Some(wall);
                    row.fps = Some(fps(n, cfg.steps, wall));
                    row.peak_rss_bytes = Some(peak_rss_bytes());
                    row.evaluations_in_timed_region = evals;
                }
                Ok(Err(e)) => row.error = Some(e),
                Err(p) => row.error = Some(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into())),
            }
            row
        })
        .collect()
}

/// Wall seconds of the timed loop and the task evaluations inside it.
fn one_setting(cfg: &BenchConfig, n: usize, obs_mode: ObsMode, clock: &mut dyn Clock) -> Result<(f64, u64), String> {
    let overrides = Overrides { sim: Some(cfg.sim), obs_mode: Some(obs_mode), cameras: Some(cfg.cameras.to_string()), ..Default::default() };
    let mut env = make_task_with(&cfg.task, n, cfg.seed, &overrides).map_err(|e| e.to_string())?;
    let dim = env.action_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bank: Vec<Vec<f64>> = (0..ACTION_BANK).map(|_| (0..n * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect();
    let fetch = obs_mode != ObsMode::State;
    let tick = |env: &mut crate::envs::VecEnv, k: usize| -> Result<(), String> {
        env.simulate(&bank[k % ACTION_BANK]).map_err(|e| e.to_string())?;
        if fetch {
            std::hint::black_box(env.observe().map_err(|e| e.to_string())?);
        }
        Ok(())
    };
    for k in 0..cfg.warmup_steps {
        tick(&mut env, k)?;
    }
    let evals = env.evaluations;
    let start = clock.now();
    for k in 0..cfg.steps {
        tick(&mut env, k)?;
    }
    let wall = clock.now() - start;
    Ok((wall, env.evaluations - evals))
}

fn sorted(results: &[BenchResult]) -> Vec<&BenchResult> {
    let mut rows: Vec<&BenchResult> = results.iter().collect();
    rows.sort_by(|a, b| (&a.task, &a.cameras, a.num_envs).cmp(&(&b.task, &b.cameras, b.num_envs)));
    rows
}

/// Writes `task,num_envs,steps,wall_seconds,fps,peak_rss_bytes,cameras,obs_mode`
/// rows sorted by task, camera setup and env count.
pub fn emit_csv(results: &[BenchResult], path: &Path) -> Result<(), BenchError> {
    if results.is_empty() {
        return Err(BenchError::Empty);
    }
    let err = |source| BenchError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in sorted(results) {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|source| BenchError::Io { path: path.display().to_string(), source })
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchResult>, BenchError> {
    let err = |source| BenchError::Csv { path: path.display().to_string(), source };
    csv::Reader::from_path(path).map_err(err)?.deserialize().collect::<Result<_, _>>().map_err(err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub task: String,
    pub num_envs: usize,
    pub fps: Option<f64>,
    pub peak_rss_bytes: Option<u64>,
}

/// JSON object keyed by camera setup; each value lists the points of that
/// setup in CSV order.
pub fn emit_plotdata(results: &[BenchResult], path: &Path) -> Result<(), BenchError> {
    if results.is_empty() {
        return Err(BenchError::Empty);
    }
    let mut series: BTreeMap<String, Vec<PlotPoint>> = BTreeMap::new();
    for r in sorted(results) {
        series.entry(r.cameras.clone()).or_default().push(PlotPoint {
            task: r.task.clone(),
            num_envs: r.num_envs,
            fps: r.fps,
            peak_rss_bytes: r.peak_rss_bytes,
        });
    }
    let json = serde_json::to_vec_pretty(&series).expect("plot data serializes");
    std::fs::write(path, json).map_err(|source| BenchError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FakeClock(Vec<f64>);

    impl Clock for FakeClock {
        fn now(&mut self) -> f64 {
            self.0.remove(0)
        }
    }

    #[test]
    fn fps_uses_the_timed_region() {
        let mut cfg = BenchConfig::new("CartpoleBalance", &[16, 4]);
        cfg.steps = 10;
        let r = run_bench_with(&cfg, &mut FakeClock(vec![1.0, 3.5, 10.0, 10.25]));
        assert_eq!(r[0].num_envs, 4);
        assert_eq!(r[0].wall_seconds, Some(2.5));
        assert_eq!(r[0].fps, Some(16.0));
        assert_eq!(r[1].fps, Some(640.0));
        assert!(r.iter().all(|r| r.evaluations_in_timed_region == 0 && r.error.is_none()));
        assert_eq!(BenchConfig::new("x", &[1]).steps, 1000);
    }

    #[test]
    fn failed_settings_keep_their_row() {
        let mut cfg = BenchConfig::new("NoSuchTask", &[4, 8]);
        cfg.steps = 2;
        let r = run_bench(&cfg);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|r| r.fps.is_none() && r.error.as_deref().is_some_and(|e| e.contains("unknown task"))));
    }

    #[test]
    fn rendering_settings_fetch_images() {
        let mut cfg = BenchConfig::new("PushCube", &[2]);
        cfg.steps = 3;
        cfg.cameras = "1x32x24".parse().unwrap();
        let r = run_bench(&cfg);
        assert_eq!((r[0].obs_mode.as_str(), r[0].cameras.as_str()), ("rgbd", "1x32x24"));
        assert!(r[0].fps.unwrap() > 0.0 && r[0].peak_rss_bytes.unwrap() > 0);
    }

    #[test]
    fn csv_is_sorted_and_round_trips() {
        let row = |task: &str, n: usize, cams: &str| BenchResult {
            task: task.into(),
            num_envs: n,
            steps: 1000,
            wall_seconds: Some(1.25),
            fps: Some(fps(n, 1000, 1.25)),
            peak_rss_bytes: Some(123_456),
            cameras: cams.into(),
            obs_mode: "state".into(),
            evaluations_in_timed_region: 0,
            error: None,
        };
        let mut failed = row("B", 1024, "none");
        (failed.wall_seconds, failed.fps, failed.peak_rss_bytes) = (None, None, None);
        let rows = vec![row("B", 64, "none"), failed, row("A", 16, "none"), row("A", 4, "1x128x128"), row("A", 4, "none")];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("task,num_envs,steps,wall_seconds,fps,peak_rss_bytes,cameras,obs_mode"));
        let keys: Vec<(String, usize)> = read_csv(&p).unwrap().iter().map(|r| (format!("{}/{}", r.task, r.cameras), r.num_envs)).collect();
        assert_eq!(keys, [("A/1x128x128".into(), 4), ("A/none".into(), 4), ("A/none".into(), 16), ("B/none".into(), 64), ("B/none".into(), 1024)]);
        assert!(text.contains("B,1024,1000,,,,none,state"));
        let back = read_csv(&p).unwrap();
        let q = dir.path().join("s.csv");
        emit_csv(&back, &q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
        let plot = dir.path().join("plot.json");
        emit_plotdata(&rows, &plot).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(plot).unwrap()).unwrap();
        assert_eq!(v["none"].as_array().unwrap().len(), 4);
        assert_eq!(v["1x128x128"][0]["num_envs"], 4);
        assert!(matches!(emit_csv(&[], &p), Err(BenchError::Empty)));
    }
}
