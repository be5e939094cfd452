//! Built-in task suite and scripted solutions.
//!
//! | task | agents | action | state obs | reward | success |
//! |---|---|---|---|---|---|
//! | `CartpoleBalance` | `robot` | cart delta position (1) | `x, ẋ, θ, θ̇` | `cos θ − 0.01·x²` | `|θ| < 0.2` for the last 50 steps |
//! | `ReachPose` | `robot` | EE delta pose (6) | 23 | `−‖ee − goal‖` | EE within 2.5 cm of the goal |
//! | `PushCube` | `robot` | pusher delta xy (2) | 12 | `−‖cube − goal‖ − 0.5·‖tip − cube‖` | cube xy within 2.5 cm of the goal |
//! | `OpenChain-Hetero` | `robot` | padded joint deltas (6) | 24 | `q_target / upper` | `q_target > 0.9·upper` |
//! | `TableDraw` | `robot` | gantry delta xyz (3) | 11 | 1 on success, else 0 | ≥ 90% of the square outline inked |
//! | `HandoverReach` | `left`, `right` | EE delta pose (6 each) | 28 | see [`handover`] | right EE reaches the proxy after the left EE did |
//!
//! Rewards are original to this crate.

mod cartpole;
pub mod chain;
mod draw;
pub mod fixtures;
mod handover;
mod push;
mod reach;

pub use cartpole::CartpoleBalance;
pub use chain::OpenChainHetero;
pub use draw::TableDraw;
pub use handover::HandoverReach;
pub use push::PushCube;
pub use reach::ReachPose;

use crate::assets::AssetError;
use crate::controllers::{ControlMode, ControllerConfig};
use crate::dynamics::SimConfig;
use crate::envs::{EnvError, Obs, ObsMode, Task, TaskBuild, VecEnv};
use crate::pose::Vec3;
use crate::render::{CameraConfig, CameraSetup, RenderError};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("unknown task `{name}`; known: {}", known.join(", "))]
    UnknownTask { name: String, known: Vec<String> },
    #[error("invalid overrides: {0}")]
    Overrides(String),
    #[error("no scripted solution for `{0}`")]
    Unsupported(String),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl From<RenderError> for TaskError {
    fn from(e: RenderError) -> Self {
        TaskError::Overrides(e.to_string())
    }
}

/// Registered task names with one-line descriptions.
pub const TASKS: &[(&str, &str)] = &[
    ("CartpoleBalance", "balance a pole on a position-servoed cart"),
    ("ReachPose", "move a 3-joint arm's end effector to a sampled pose"),
    ("PushCube", "push a cube to a goal with a planar sphere pusher"),
    ("OpenChain-Hetero", "drive one designated joint of a 2-6 joint chain to its limit; chains differ per env"),
    ("TableDraw", "ink a square outline with a pen gantry"),
    ("HandoverReach", "two arms visit a proxy point in turn"),
];

pub fn task_names() -> Vec<&'static str> {
    TASKS.iter().map(|(n, _)| *n).collect()
}

/// Optional JSON overrides accepted by [`make_task`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    pub time_limit: Option<usize>,
    /// Control mode for every agent; the task supplies a preset for it.
    pub control_mode: Option<ControlMode>,
    pub stiffness: Option<f64>,
    pub damping: Option<f64>,
    pub action_scale: Option<f64>,
    pub sim: Option<SimConfig>,
    pub obs_mode: Option<ObsMode>,
    /// Camera setup string such as `1x128x128`, `3x320x180` or `none`.
    pub cameras: Option<String>,
    pub early_termination: Option<bool>,
    /// Success distance for tasks with a distance threshold.
    pub success_tolerance: Option<f64>,
}

impl Overrides {
    pub fn from_json(v: &serde_json::Value) -> Result<Self, TaskError> {
        if v.is_null() {
            return Ok(Self::default());
        }
        let o: Self = serde_json::from_value(v.clone()).map_err(|e| TaskError::Overrides(e.to_string()))?;
        if o.time_limit == Some(0) {
            return Err(TaskError::Overrides("time_limit must be at least 1".into()));
        }
        if let Some(t) = o.success_tolerance {
            if !(t > 0.0) {
                return Err(TaskError::Overrides("success_tolerance must be positive".into()));
            }
        }
        if let Some(s) = &o.sim {
            s.validate().map_err(|e| TaskError::Overrides(e.to_string()))?;
        }
        Ok(o)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("overrides serialize")
    }

    fn time_limit(&self, default: usize) -> usize {
        self.time_limit.unwrap_or(default)
    }

    fn tolerance(&self, default: f64) -> f64 {
        self.success_tolerance.unwrap_or(default)
    }

    fn mode(&self, default: ControlMode) -> ControlMode {
        self.control_mode.unwrap_or(default)
    }

    /// Applies the numeric controller overrides to a preset.
    fn controller(&self, mut cfg: ControllerConfig) -> ControllerConfig {
        if let Some(k) = self.stiffness {
            cfg.stiffness = k;
        }
        if let Some(d) = self.damping {
            cfg.damping = d;
        }
        if let Some(s) = self.action_scale {
            cfg.action_scale = s;
        }
        cfg
    }

    fn sim(&self, default: SimConfig) -> SimConfig {
        self.sim.unwrap_or(default)
    }

    fn cameras(&self, default: &str, eye: Vec3, target: Vec3) -> Result<Vec<CameraConfig>, TaskError> {
        let setup: CameraSetup = self.cameras.as_deref().unwrap_or(default).parse()?;
        Ok(ring_cameras(&setup, eye, target))
    }
}

/// `setup.count` cameras on a circle around `target` at the height and
/// radius of `eye`, the first one at `eye`.
pub fn ring_cameras(setup: &CameraSetup, eye: Vec3, target: Vec3) -> Vec<CameraConfig> {
    let rel = eye - target;
    (0..setup.count)
        .map(|k| {
            let a = TAU * k as f64 / setup.count as f64;
            let (s, c) = a.sin_cos();
            let e = target + Vec3::new(c * rel.x - s * rel.y, s * rel.x + c * rel.y, rel.z);
            CameraConfig::looking_at(format!("cam{k}"), setup.width, setup.height, 1.0, e, target)
        })
        .collect()
}

fn unknown(name: &str) -> TaskError {
    let mut known: Vec<String> = task_names().iter().map(|s| s.to_string()).collect();
    known.sort_by(|a, b| strsim::jaro_winkler(b, name).total_cmp(&strsim::jaro_winkler(a, name)));
    TaskError::UnknownTask { name: name.into(), known }
}

/// Task object plus scene/controller description, before instantiation.
pub fn build_task(name: &str, num_envs: usize, seed: u64, o: &Overrides) -> Result<(Box<dyn Task>, TaskBuild), TaskError> {
    if num_envs == 0 {
        return Err(TaskError::Overrides("num_envs must be at least 1".into()));
    }
    Ok(match name {
        "CartpoleBalance" => cartpole::build(num_envs, o)?,
        "ReachPose" => reach::build(num_envs, o)?,
        "PushCube" => push::build(num_envs, o)?,
        "OpenChain-Hetero" => chain::build(num_envs, seed, o)?,
        "TableDraw" => draw::build(num_envs, o)?,
        "HandoverReach" => handover::build(num_envs, o)?,
        _ => return Err(unknown(name)),
    })
}

/// Builds task `name` over `num_envs` envs and resets it with `seed`.
/// `overrides` is a JSON object of [`Overrides`] fields (or null).
pub fn make_task(name: &str, num_envs: usize, seed: u64, overrides: &serde_json::Value) -> Result<VecEnv, TaskError> {
    make_task_with(name, num_envs, seed, &Overrides::from_json(overrides)?)
}

pub fn make_task_with(name: &str, num_envs: usize, seed: u64, o: &Overrides) -> Result<VecEnv, TaskError> {
    let (task, build) = build_task(name, num_envs, seed, o)?;
    let mut env = VecEnv::new(task, build, seed, o.obs_mode.unwrap_or(ObsMode::State))?;
    if let Some(e) = o.early_termination {
        env.early_termination = e;
    }
    Ok(env)
}

/// Maps observations (and privileged scene access) to flat actions.
pub trait Policy {
    fn act(&mut self, env: &VecEnv, obs: &Obs) -> Vec<f64>;
}

impl<F: FnMut(&VecEnv, &Obs) -> Vec<f64>> Policy for F {
    fn act(&mut self, env: &VecEnv, obs: &Obs) -> Vec<f64> {
        self(env, obs)
    }
}

/// Deterministic scripted policy for `name`. The policy reads the task state
/// directly and adapts to the env's controller mode where noted.
pub fn scripted_solution(name: &str) -> Result<Box<dyn Policy>, TaskError> {
    Ok(match name {
        "ReachPose" => Box::new(reach::ScriptedReach),
        "PushCube" => Box::new(push::ScriptedPush),
        "TableDraw" => Box::new(draw::ScriptedDraw::default()),
        "HandoverReach" => Box::new(handover::ScriptedHandover),
        _ if task_names().contains(&name) => return Err(TaskError::Unsupported(name.into())),
        _ => return Err(unknown(name)),
    })
}

/// Downcasts the task of `env`.
pub fn task_of<T: 'static>(env: &VecEnv) -> Option<&T> {
    env.task.as_any().downcast_ref::<T>()
}

/// Clipped proportional action `(target − current) / scale`.
fn servo(target: f64, current: f64, scale: f64) -> f64 {
    ((target - current) / scale).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests;
