//! Trajectory recording, deterministic replay, observation regeneration and
//! action-space conversion.
//!
//! A trajectory is stored as a directory holding `manifest.json` and one
//! little-endian raw file per array. The manifest contains:
//!
//! | field | meaning |
//! |---|---|
//! | `format` | always `batchsim-trajectory` |
//! | `engine_version` | crate version that wrote the file; replay refuses others |
//! | `created_unix` | write time, the only field replay does not reproduce |
//! | `task`, `overrides`, `seed` | everything needed to rebuild the task |
//! | `layout_hash`, `obs_layout_hash` | scene and state-observation layout |
//! | `controllers` | controller config per agent |
//! | `agents`, `action_dim`, `state_dim` | per-agent action widths and totals |
//! | `obs_mode`, `cameras` | stored observation kind and image shapes |
//! | `source` | free-form demo source such as `scripted` or `ppo` |
//! | `keep_states` | whether a snapshot follows every step |
//! | `episodes` | per episode: `seed`, `length`, `metrics`, `conversion`, `arrays` |
//!
//! Every `arrays` entry names its `file`, `dtype` (`<f8`, `<f4`, `<u2`,
//! `<u8`, `|u1`) and `shape`. Per episode of length `T` with `S = T + 1`
//! state rows (or 1 without `keep_states`):
//!
//! - `actions [T, action_dim]`, `reward [T]`, `success [T]`, `fail [T]`
//! - `state.qpos`, `state.qvel`, `state.qacc` `[S, dof_max]`;
//!   `state.actor_pose [S, 7·actor_max]`, `state.actor_linvel`,
//!   `state.actor_angvel [S, 3·actor_max]`. Row 0 is the initial state.
//! - `obs.state [T + 1, state_dim]`
//! - rgbd: `<camera>.rgb [T + 1, H, W, 3]`, `<camera>.depth [T + 1, H, W]`,
//!   `<camera>.seg [T + 1, H, W]`
//! - pointcloud: `<camera>.cloud_offsets [T + 2]` and
//!   `<camera>.cloud_points [P, 6]`
//! - converted episodes: `residual [T]`

mod store;

pub use store::ArrayEntry;

use crate::controllers::{convert_action, ControlMode, Controller, ControllerConfig, ControllerError};
use crate::envs::{metrics_from_steps, EnvError, EpisodeMetrics, EvalWrapper, Obs, ObsMode, VecEnv};
use crate::scene::StateSnapshot;
use crate::tasks::{make_task_with, Overrides, Policy, TaskError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const FORMAT: &str = "batchsim-trajectory";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{origin}: written by engine {found}, this is engine {expected}")]
    Version { origin: String, found: String, expected: String },
    #[error("{what} mismatch: recorded {recorded}, rebuilt {rebuilt}")]
    Layout { what: &'static str, recorded: String, rebuilt: String },
    #[error("episode {episode}: reset does not reproduce the recorded initial state")]
    InitialState { episode: usize },
    #[error("episode {episode}: state differs from the recording after step {step}")]
    Diverged { episode: usize, step: usize },
    #[error("episode {episode} has no per-step states; action conversion needs them")]
    MissingStates { episode: usize },
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

/// Width and height of one recorded camera.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraShape {
    pub name: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub engine_version: String,
    pub created_unix: u64,
    pub task: String,
    pub overrides: Overrides,
    pub seed: u64,
    pub layout_hash: String,
    pub obs_layout_hash: String,
    pub controllers: BTreeMap<String, ControllerConfig>,
    pub agents: Vec<(String, usize)>,
    pub action_dim: usize,
    pub state_dim: usize,
    pub obs_mode: ObsMode,
    pub cameras: Vec<CameraShape>,
    pub source: String,
    pub keep_states: bool,
}

impl Header {
    fn for_env(env: &VecEnv, task: &str, overrides: &Overrides, seed: u64, source: &str, keep_states: bool) -> Self {
        Self {
            format: FORMAT.into(),
            engine_version: ENGINE_VERSION.into(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            task: task.into(),
            overrides: overrides.clone(),
            seed,
            layout_hash: env.scene.layout_hash().into(),
            obs_layout_hash: env.obs_layout_hash(),
            controllers: env.agents.iter().map(|a| (a.name.clone(), a.controller.cfg.clone())).collect(),
            agents: env.agent_spec(),
            action_dim: crate::envs::Environment::action_dim(env),
            state_dim: env.state_dim(),
            obs_mode: env.obs_mode,
            cameras: match env.obs_mode {
                ObsMode::State => Vec::new(),
                _ => env.cameras.iter().map(|c| CameraShape { name: c.name.clone(), width: c.width, height: c.height }).collect(),
            },
            source: source.into(),
            keep_states,
        }
    }
}

/// Single-env state snapshots stacked row by row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateStream {
    pub layout_hash: String,
    pub dof_max: usize,
    pub actor_max: usize,
    pub rows: usize,
    pub qpos: Vec<f64>,
    pub qvel: Vec<f64>,
    pub qacc: Vec<f64>,
    pub actor_pose: Vec<f64>,
    pub actor_linvel: Vec<f64>,
    pub actor_angvel: Vec<f64>,
}

impl StateStream {
    fn starting_with(s: &StateSnapshot) -> Self {
        let mut out = Self { layout_hash: s.layout_hash.clone(), dof_max: s.dof_max, actor_max: s.actor_max, ..Self::default() };
        out.push(s);
        out
    }

    /// Appends a one-env snapshot.
    pub fn push(&mut self, s: &StateSnapshot) {
        self.qpos.extend_from_slice(&s.qpos);
        self.qvel.extend_from_slice(&s.qvel);
        self.qacc.extend_from_slice(&s.qacc);
        self.actor_pose.extend_from_slice(&s.actor_pose);
        self.actor_linvel.extend_from_slice(&s.actor_linvel);
        self.actor_angvel.extend_from_slice(&s.actor_angvel);
        self.rows += 1;
    }

    fn fields(&self) -> [(&'static str, &Vec<f64>, usize); 6] {
        [
            ("qpos", &self.qpos, self.dof_max),
            ("qvel", &self.qvel, self.dof_max),
            ("qacc", &self.qacc, self.dof_max),
            ("actor_pose", &self.actor_pose, 7 * self.actor_max),
            ("actor_linvel", &self.actor_linvel, 3 * self.actor_max),
            ("actor_angvel", &self.actor_angvel, 3 * self.actor_max),
        ]
    }

    pub fn qpos_row(&self, row: usize) -> &[f64] {
        &self.qpos[row * self.dof_max..(row + 1) * self.dof_max]
    }

    pub fn snapshot(&self, row: usize) -> StateSnapshot {
        let take = |v: &Vec<f64>, w: usize| v[row * w..(row + 1) * w].to_vec();
        StateSnapshot {
            layout_hash: self.layout_hash.clone(),
            num_envs: 1,
            dof_max: self.dof_max,
            actor_max: self.actor_max,
            qpos: take(&self.qpos, self.dof_max),
            qvel: take(&self.qvel, self.dof_max),
            qacc: take(&self.qacc, self.dof_max),
            actor_pose: take(&self.actor_pose, 7 * self.actor_max),
            actor_linvel: take(&self.actor_linvel, 3 * self.actor_max),
            actor_angvel: take(&self.actor_angvel, 3 * self.actor_max),
        }
    }

    /// Bitwise comparison of row `row` with a one-env snapshot.
    pub fn row_matches(&self, row: usize, s: &StateSnapshot) -> bool {
        let bits = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
        let mine = self.snapshot(row);
        bits(&mine.qpos, &s.qpos)
            && bits(&mine.qvel, &s.qvel)
            && bits(&mine.qacc, &s.qacc)
            && bits(&mine.actor_pose, &s.actor_pose)
            && bits(&mine.actor_linvel, &s.actor_linvel)
            && bits(&mine.actor_angvel, &s.actor_angvel)
    }
}

/// RGB, depth and segmentation frames of one camera, one per observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageStream {
    pub camera: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub rgb: Vec<u8>,
    pub depth: Vec<f32>,
    pub seg: Vec<u16>,
}

/// Ragged world-frame point clouds of one camera; cloud `k` is
/// `points[offsets[k]..offsets[k + 1]]` in units of whole points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CloudStream {
    pub camera: String,
    pub offsets: Vec<u64>,
    /// `[x, y, z, r, g, b]` per point, flattened.
    pub points: Vec<f64>,
}

/// How a converted episode compares with its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub from: Vec<ControlMode>,
    pub to: Vec<ControlMode>,
    /// Largest end-effector position error over all state rows, in metres;
    /// `None` when no converted controller has an end effector.
    pub max_pos_error: Option<f64>,
    /// Largest end-effector rotation error, in radians.
    pub max_rot_error: Option<f64>,
    pub final_pos_error: Option<f64>,
    pub final_rot_error: Option<f64>,
    /// Largest per-step norm of the action part lost to clipping.
    pub max_residual: f64,
    pub residual_bound: f64,
    /// Set when `max_residual` exceeds `residual_bound`. Flagged episodes
    /// are kept.
    pub flagged: bool,
    pub success_before: bool,
    pub success_after: bool,
    /// False only when the source succeeded and the conversion did not.
    pub success_preserved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub seed: u64,
    /// `T × action_dim`.
    pub actions: Vec<f64>,
    pub reward: Vec<f64>,
    pub success: Vec<bool>,
    pub fail: Vec<bool>,
    pub states: StateStream,
    /// `(T + 1) × state_dim`; row 0 follows the reset.
    pub obs_state: Vec<f64>,
    pub images: Vec<ImageStream>,
    pub clouds: Vec<CloudStream>,
    pub metrics: EpisodeMetrics,
    /// Per-step conversion residual (converted episodes only).
    pub residual: Vec<f64>,
    pub conversion: Option<ConversionReport>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn initial_state(&self) -> StateSnapshot {
        self.states.snapshot(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: Header,
    pub episodes: Vec<Episode>,
}

/// What to record and how.
#[derive(Debug, Clone)]
pub struct RecordConfig {
    pub task: String,
    pub overrides: Overrides,
    /// Build seed; episode `k` resets with `seed + k`.
    pub seed: u64,
    pub episodes: usize,
    pub source: String,
    /// Store a snapshot after every step; conversion needs them.
    pub keep_states: bool,
}

impl RecordConfig {
    pub fn new(task: &str, seed: u64, episodes: usize) -> Self {
        Self { task: task.into(), overrides: Overrides::default(), seed, episodes, source: "unspecified".into(), keep_states: true }
    }
}

/// Runs one eval-mode episode in a single-env `VecEnv`. `check` sees the
/// env after the reset (row 0) and after every step.
fn run_episode(
    w: &mut EvalWrapper<VecEnv>,
    seed: u64,
    keep_states: bool,
    mut act: impl FnMut(&VecEnv, &Obs, usize) -> Result<Vec<f64>, RecordError>,
    mut check: impl FnMut(&VecEnv, usize) -> Result<(), RecordError>,
) -> Result<Episode, RecordError> {
    let mut obs = w.reset(Some(seed), None)?;
    check(&w.inner, 0)?;
    let mut ep = Episode {
        seed,
        actions: Vec::new(),
        reward: Vec::new(),
        success: Vec::new(),
        fail: Vec::new(),
        states: StateStream::starting_with(&w.inner.scene.get_state()),
        obs_state: Vec::new(),
        images: Vec::new(),
        clouds: Vec::new(),
        metrics: EpisodeMetrics::default(),
        residual: Vec::new(),
        conversion: None,
    };
    push_obs(&mut ep, &obs);
    let limit = crate::envs::Environment::time_limit(&w.inner);
    for t in 0..limit {
        let a = act(&w.inner, &obs, t)?;
        let res = w.step(&a)?;
        ep.actions.extend_from_slice(&a);
        ep.reward.push(res.reward[0]);
        ep.success.push(res.info[0].success);
        ep.fail.push(res.info[0].fail);
        if keep_states {
            ep.states.push(&w.inner.scene.get_state());
        }
        check(&w.inner, t + 1)?;
        obs = res.obs;
        push_obs(&mut ep, &obs);
    }
    ep.metrics = metrics_from_steps(&ep.reward, &ep.success, &ep.fail);
    Ok(ep)
}

fn push_obs(ep: &mut Episode, obs: &Obs) {
    ep.obs_state.extend_from_slice(obs.env_state(0));
    if ep.images.len() < obs.frames.len() {
        ep.images = obs
            .frames
            .iter()
            .map(|f| ImageStream { camera: f.camera.clone(), width: f.width, height: f.height, ..Default::default() })
            .collect();
    }
    for (s, f) in ep.images.iter_mut().zip(&obs.frames) {
        s.rgb.extend_from_slice(f.env_rgb(0));
        s.depth.extend_from_slice(f.env_depth(0));
        s.seg.extend_from_slice(f.env_seg(0));
        s.frames += 1;
    }
    if ep.clouds.len() < obs.clouds.len() {
        ep.clouds = (0..obs.clouds.len()).map(|_| CloudStream { offsets: vec![0], ..Default::default() }).collect();
    }
    for (s, c) in ep.clouds.iter_mut().zip(&obs.clouds) {
        s.points.extend(c[0].iter().flatten());
        s.offsets.push((s.points.len() / 6) as u64);
    }
}

fn name_clouds(ep: &mut Episode, env: &VecEnv) {
    for (s, c) in ep.clouds.iter_mut().zip(&env.cameras) {
        s.camera = c.name.clone();
    }
}

/// Records `cfg.episodes` eval-mode episodes of `policy` in a single env.
pub fn record(cfg: &RecordConfig, policy: &mut dyn Policy) -> Result<Trajectory, RecordError> {
    let env = make_task_with(&cfg.task, 1, cfg.seed, &cfg.overrides)?;
    let header = Header::for_env(&env, &cfg.task, &cfg.overrides, cfg.seed, &cfg.source, cfg.keep_states);
    let mut w = EvalWrapper::new(env);
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for k in 0..cfg.episodes {
        let seed = cfg.seed.wrapping_add(k as u64);
        let mut ep = run_episode(&mut w, seed, cfg.keep_states, |e, o, _| Ok(policy.act(e, o)), |_, _| Ok(()))?;
        name_clouds(&mut ep, &w.inner);
        episodes.push(ep);
    }
    Ok(Trajectory { header, episodes })
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    /// Regenerate observations in this mode.
    pub obs_mode: Option<ObsMode>,
    /// Convert every agent's actions to this control mode.
    pub control_mode: Option<ControlMode>,
    /// Conversion residual above which an episode is flagged.
    pub residual_bound: f64,
    /// Keep per-step states in the output; defaults to the input's choice.
    /// Converted output always keeps them.
    pub keep_states: Option<bool>,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self { obs_mode: None, control_mode: None, residual_bound: 0.5, keep_states: None }
    }
}

fn check_layout(header: &Header, env: &VecEnv) -> Result<(), RecordError> {
    if env.scene.layout_hash() != header.layout_hash {
        return Err(RecordError::Layout { what: "scene layout", recorded: header.layout_hash.clone(), rebuilt: env.scene.layout_hash().into() });
    }
    if env.obs_layout_hash() != header.obs_layout_hash {
        return Err(RecordError::Layout { what: "observation layout", recorded: header.obs_layout_hash.clone(), rebuilt: env.obs_layout_hash() });
    }
    Ok(())
}

/// Per state row, the largest end-effector position and rotation error
/// between `a` and `b` over the agents of `env` that have an end effector.
/// `None` when no agent has one.
pub fn ee_errors(env: &VecEnv, a: &StateStream, b: &StateStream) -> Option<Vec<(f64, f64)>> {
    let arms: Vec<&Controller> = env.agents.iter().map(|g| &g.controller).filter(|c| c.ee_pose_at(0, a.qpos_row(0)).is_some()).collect();
    if arms.is_empty() {
        return None;
    }
    Some(
        (0..a.rows.min(b.rows))
            .map(|row| {
                arms.iter().fold((0.0f64, 0.0f64), |(p, r), c| {
                    let pa = c.ee_pose_at(0, a.qpos_row(row)).expect("arm");
                    let pb = c.ee_pose_at(0, b.qpos_row(row)).expect("arm");
                    (p.max((pa.translation - pb.translation).norm()), r.max(pa.angle_to(&pb)))
                })
            })
            .collect(),
    )
}

/// Re-simulates every episode from its seed and recorded actions,
/// optionally regenerating observations or converting actions to another
/// controller. Episodes replay in parallel.
pub fn replay(traj: &Trajectory, opts: &ReplayOptions) -> Result<Trajectory, RecordError> {
    let h = &traj.header;
    if h.engine_version != ENGINE_VERSION {
        return Err(RecordError::Version { origin: format!("trajectory of {}", h.task), found: h.engine_version.clone(), expected: ENGINE_VERSION.into() });
    }
    let mut overrides = h.overrides.clone();
    if let Some(m) = opts.obs_mode {
        if m != h.obs_mode {
            overrides.obs_mode = Some(m);
        }
    }
    let convert = opts.control_mode.filter(|m| h.controllers.values().any(|c| c.mode != *m));
    if let Some(m) = convert {
        overrides.control_mode = Some(m);
    }
    let keep_states = convert.is_some() || opts.keep_states.unwrap_or(h.keep_states);
    let probe = make_task_with(&h.task, 1, h.seed, &overrides)?;
    check_layout(h, &probe)?;
    let source = if convert.is_some() { format!("{}|converted", h.source) } else { h.source.clone() };
    let header = Header::for_env(&probe, &h.task, &overrides, h.seed, &source, keep_states);
    drop(probe);
    let episodes = traj
        .episodes
        .par_iter()
        .enumerate()
        .map(|(k, src)| {
            let mut w = EvalWrapper::new(make_task_with(&h.task, 1, h.seed, &overrides)?);
            match convert {
                None => replay_actions(&mut w, h, src, k, keep_states),
                Some(_) => convert_episode(&mut w, h, src, k, opts.residual_bound),
            }
        })
        .collect::<Result<_, RecordError>>()?;
    Ok(Trajectory { header, episodes })
}

fn replay_actions(w: &mut EvalWrapper<VecEnv>, h: &Header, src: &Episode, k: usize, keep_states: bool) -> Result<Episode, RecordError> {
    let d = h.action_dim;
    let recorded_rows = src.states.rows;
    let mut ep = run_episode(
        w,
        src.seed,
        keep_states,
        |_, _, t| Ok(src.actions[t * d..(t + 1) * d].to_vec()),
        |env, row| {
            if (row == 0 || row < recorded_rows)
                && !src.states.row_matches(row, &env.scene.get_state()) {
                    return Err(if row == 0 { RecordError::InitialState { episode: k } } else { RecordError::Diverged { episode: k, step: row } });
                }
            Ok(())
        },
    )?;
    name_clouds(&mut ep, &w.inner);
    Ok(ep)
}

fn convert_episode(w: &mut EvalWrapper<VecEnv>, h: &Header, src: &Episode, k: usize, bound: f64) -> Result<Episode, RecordError> {
    if src.states.rows != src.len() + 1 {
        return Err(RecordError::MissingStates { episode: k });
    }
    let from: Vec<Controller> = w
        .inner
        .agents
        .iter()
        .map(|a| {
            let cfg = h.controllers.get(&a.name).ok_or_else(|| EnvError::UnknownAgent(a.name.clone()))?;
            Ok(Controller::new(cfg.clone(), &w.inner.scene)?)
        })
        .collect::<Result<_, RecordError>>()?;
    let d = h.action_dim;
    let mut residual = Vec::with_capacity(src.len());
    let mut ep = run_episode(
        w,
        src.seed,
        true,
        |env, _, t| {
            let recorded = &src.actions[t * d..(t + 1) * d];
            let mut action = Vec::new();
            let (mut offset, mut sq) = (0, 0.0);
            for (f, to) in from.iter().zip(&env.agents) {
                let c = convert_action(f, &to.controller, &env.scene, 0, &recorded[offset..offset + f.action_dim()])?;
                action.extend(c.action);
                sq += c.residual * c.residual;
                offset += f.action_dim();
            }
            residual.push(sq.sqrt());
            Ok(action)
        },
        |env, row| if row == 0 && !src.states.row_matches(0, &env.scene.get_state()) { Err(RecordError::InitialState { episode: k }) } else { Ok(()) },
    )?;
    name_clouds(&mut ep, &w.inner);
    let errors = ee_errors(&w.inner, &src.states, &ep.states);
    let max_of = |f: fn(&(f64, f64)) -> f64| errors.as_ref().map(|e| e.iter().map(f).fold(0.0, f64::max));
    let last = errors.as_ref().and_then(|e| e.last().copied());
    let max_residual = residual.iter().copied().fold(0.0, f64::max);
    let (before, after) = (src.metrics.success_once, ep.metrics.success_once);
    ep.conversion = Some(ConversionReport {
        from: from.iter().map(|c| c.cfg.mode).collect(),
        to: w.inner.agents.iter().map(|a| a.controller.cfg.mode).collect(),
        max_pos_error: max_of(|e| e.0),
        max_rot_error: max_of(|e| e.1),
        final_pos_error: last.map(|e| e.0),
        final_rot_error: last.map(|e| e.1),
        max_residual,
        residual_bound: bound,
        flagged: max_residual > bound,
        success_before: before,
        success_after: after,
        success_preserved: !before || after,
    });
    ep.residual = residual;
    Ok(ep)
}

#[cfg(test)]
mod tests;
