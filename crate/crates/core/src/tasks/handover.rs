//! Two-arm handover. Reward is `−1 − d_left` until the left end effector
//! has visited the proxy point, then `−d_right`.

use super::reach::{arm_controller, arm_desc, arm_ee_pose, marker, position_servo};
use super::{fixtures, task_of, Overrides, Policy, TaskError};
use crate::controllers::ControlMode;
use crate::dynamics::SimConfig;
use crate::envs::{Evaluation, Obs, Task, TaskBuild, VecEnv};
use crate::pose::{Pose, Vec3};
use crate::scene::{EnvDescriptor, SceneBatch, TemplateLibrary};
use rand::Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const AGENTS: [&str; 2] = ["left", "right"];
const BASE_X: f64 = 0.35;

/// The left arm must touch a proxy point, then the right arm.
///
/// State obs (28): `left_q[3]`, `left_qd[3]`, `right_q[3]`, `right_qd[3]`,
/// `left_ee[3]`, `right_ee[3]`, `proxy[3]`, `visited`,
/// `proxy − left_ee[3]`, `proxy − right_ee[3]`.
pub struct HandoverReach {
    pub time_limit: usize,
    pub tolerance: f64,
    pub proxy: Vec<Vec3>,
    pub visited: Vec<bool>,
}

pub(super) fn build(n: usize, o: &Overrides) -> Result<(Box<dyn Task>, TaskBuild), TaskError> {
    let env = EnvDescriptor {
        articulations: vec![
            arm_desc("left", Pose::from_translation(Vec3::new(-BASE_X, 0.0, 0.0))),
            arm_desc("right", Pose::from_axis_angle(Vec3::new(BASE_X, 0.0, 0.0), Vec3::new(0.0, 0.0, PI))),
        ],
        actors: vec![marker("proxy", 0.015, [0.9, 0.8, 0.1, 1.0])],
        ground: true,
    };
    let mode = o.mode(ControlMode::PdEeDeltaPose);
    let agents = AGENTS
        .iter()
        .map(|a| Ok((a.to_string(), o.controller(arm_controller(mode, a)?))))
        .collect::<Result<BTreeMap<_, _>, TaskError>>()?;
    let task = HandoverReach { time_limit: o.time_limit(150), tolerance: o.tolerance(0.025), proxy: vec![Vec3::zeros(); n], visited: vec![false; n] };
    let build = TaskBuild {
        library: TemplateLibrary::from([("arm3".to_string(), fixtures::arm3()?)]),
        descriptors: vec![env; n],
        agents,
        sim: o.sim(SimConfig::default()),
        cameras: o.cameras("1x128x128", Vec3::new(0.0, -1.1, 0.7), Vec3::new(0.0, 0.0, 0.15))?,
    };
    Ok((Box::new(task), build))
}

impl HandoverReach {
    pub fn distances(&self, scene: &SceneBatch, env: usize) -> (f64, f64) {
        let p = self.proxy[env];
        ((arm_ee_pose(scene, env, 0).translation - p).norm(), (arm_ee_pose(scene, env, 1).translation - p).norm())
    }
}

impl Task for HandoverReach {
    fn name(&self) -> &str {
        "HandoverReach"
    }

    fn time_limit(&self) -> usize {
        self.time_limit
    }

    fn obs_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (prefix, k) in [
            ("left_q", 3),
            ("left_qd", 3),
            ("right_q", 3),
            ("right_qd", 3),
            ("left_ee", 3),
            ("right_ee", 3),
            ("proxy", 3),
            ("visited", 1),
            ("left_delta", 3),
            ("right_delta", 3),
        ] {
            v.extend((0..k).map(|i| format!("{prefix}{i}")));
        }
        v
    }

    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        let rng = scene.rng(env);
        let p = Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.15..0.15), rng.gen_range(0.1..0.25));
        scene.set_actor_pose(env, 0, Pose::from_translation(p)).expect("proxy marker");
        self.proxy[env] = p;
        self.visited[env] = false;
    }

    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        let (q, v) = (scene.env_qpos(env), scene.env_qvel(env));
        let l = arm_ee_pose(scene, env, 0).translation;
        let r = arm_ee_pose(scene, env, 1).translation;
        let p = self.proxy[env];
        let (dl, dr) = (p - l, p - r);
        let mut vals = Vec::with_capacity(28);
        vals.extend_from_slice(&q[0..3]);
        vals.extend_from_slice(&v[0..3]);
        vals.extend_from_slice(&q[3..6]);
        vals.extend_from_slice(&v[3..6]);
        for x in [l, r, p] {
            vals.extend_from_slice(x.as_slice());
        }
        vals.push(if self.visited[env] { 1.0 } else { 0.0 });
        vals.extend_from_slice(dl.as_slice());
        vals.extend_from_slice(dr.as_slice());
        out.copy_from_slice(&vals);
    }

    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let (dl, dr) = self.distances(scene, env);
        if dl < self.tolerance {
            self.visited[env] = true;
        }
        let visited = self.visited[env];
        Evaluation { success: visited && dr < self.tolerance, fail: false, reward: if visited { -dr } else { -1.0 - dl } }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Left arm servos to the proxy and stops there; once it has visited, the
/// right arm servos to the proxy. Needs EE controllers.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedHandover;

impl Policy for ScriptedHandover {
    fn act(&mut self, env: &VecEnv, _obs: &Obs) -> Vec<f64> {
        let task = task_of::<HandoverReach>(env).expect("ScriptedHandover needs HandoverReach");
        let mut out = Vec::with_capacity(12 * env.num_envs());
        for e in 0..env.num_envs() {
            let p = task.proxy[e];
            for (slot, agent) in env.agents.iter().enumerate() {
                let active = if slot == 0 { !task.visited[e] } else { task.visited[e] };
                if active {
                    out.extend(position_servo(&env.scene, e, slot, &agent.controller.cfg, &p, 1.0));
                } else {
                    out.extend([0.0; 6]);
                }
            }
        }
        out
    }
}
