use super::{fixtures, servo, task_of, Overrides, Policy, TaskError};
use crate::controllers::{ControlMode, ControllerConfig};
use crate::dynamics::SimConfig;
use crate::envs::{Evaluation, Obs, Task, TaskBuild, VecEnv};
use crate::kinematics::{forward_kinematics, point_jacobian};
use crate::pose::{Pose, Vec3};
use crate::assets::Shape;
use crate::scene::{ActorDesc, ArticulationDesc, BodyKind, EnvDescriptor, SceneBatch, TemplateLibrary};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub const ARM_HOME: [f64; 3] = [0.0, -0.6, 1.2];

/// Reach a sampled end-effector pose with the 3-joint arm.
///
/// State obs (23): `q[3]`, `q̇[3]`, `ee_pos[3]`, `ee_quat[4]` (wxyz),
/// `goal_pos[3]`, `goal_quat[4]`, `goal_pos − ee_pos[3]`.
pub struct ReachPose {
    pub time_limit: usize,
    pub tolerance: f64,
    pub goal: Vec<Pose>,
    pub goal_q: Vec<[f64; 3]>,
}

/// Visual-only marker actor.
pub(super) fn marker(name: &str, radius: f64, color: [f64; 4]) -> ActorDesc {
    let mut a = ActorDesc::dynamic(name, Shape::Sphere { radius }, 0.01, Pose::from_translation(Vec3::new(0.0, 0.0, -1.0)));
    a.kind = BodyKind::Static;
    a.collision = false;
    a.color = color;
    a
}

/// Arm description used by the arm tasks: gravity compensated, no contacts.
pub(super) fn arm_desc(name: &str, base: Pose) -> ArticulationDesc {
    let mut a = ArticulationDesc::new(name, "arm3").at(base);
    a.gravity_compensation = true;
    a.collisions = false;
    a.init_qpos = Some(ARM_HOME.to_vec());
    a
}

/// Controller preset of an arm for `mode`.
pub(super) fn arm_controller(mode: ControlMode, articulation: &str) -> Result<ControllerConfig, TaskError> {
    Ok(match mode {
        ControlMode::PdEeDeltaPose => {
            let mut c = ControllerConfig::new(mode, articulation).with_ee("ee").with_scale(0.05);
            c.rot_action_scale = 0.2;
            c
        }
        ControlMode::PdJointPos | ControlMode::PdJointDeltaPos => ControllerConfig::new(mode, articulation),
        m => return Err(TaskError::Overrides(format!("arm tasks do not support {}", m.name()))),
    })
}

/// Samples arm joint angles whose end effector is above `min_z` (arm base at
/// the origin).
pub(super) fn sample_arm_q(rng: &mut ChaCha8Rng, model: &crate::model::ArticulationModel, min_z: f64) -> ([f64; 3], Pose) {
    let ee = model.template.link_index("ee").expect("arm3 has ee");
    loop {
        let q = [rng.gen_range(-1.2..1.2), rng.gen_range(-1.0..0.2), rng.gen_range(0.4..2.0)];
        let pose = forward_kinematics(model, &Pose::identity(), &q)[ee];
        if pose.translation.z > min_z {
            return (q, pose);
        }
    }
}

/// World pose of the `ee` link of articulation slot `slot` in `env`.
pub fn arm_ee_pose(scene: &SceneBatch, env: usize, slot: usize) -> Pose {
    let s = &scene.layout().articulations[env][slot];
    let i = s.model.template.link_index("ee").expect("arm3 has ee");
    scene.env_link_poses(env)[s.link_offset + i]
}

pub(super) fn build(n: usize, o: &Overrides) -> Result<(Box<dyn Task>, TaskBuild), TaskError> {
    let env = EnvDescriptor {
        articulations: vec![arm_desc("arm", Pose::identity())],
        actors: vec![marker("goal", 0.015, [0.1, 0.9, 0.2, 1.0])],
        ground: true,
    };
    let task = ReachPose { time_limit: o.time_limit(100), tolerance: o.tolerance(0.025), goal: vec![Pose::identity(); n], goal_q: vec![[0.0; 3]; n] };
    let build = TaskBuild {
        library: TemplateLibrary::from([("arm3".to_string(), fixtures::arm3()?)]),
        descriptors: vec![env; n],
        agents: BTreeMap::from([("robot".to_string(), o.controller(arm_controller(o.mode(ControlMode::PdEeDeltaPose), "arm")?))]),
        sim: o.sim(SimConfig::default()),
        cameras: o.cameras("1x128x128", Vec3::new(0.9, -0.9, 0.7), Vec3::new(0.0, 0.0, 0.15))?,
    };
    Ok((Box::new(task), build))
}

impl ReachPose {
    pub fn distance(&self, scene: &SceneBatch, env: usize) -> f64 {
        (arm_ee_pose(scene, env, 0).translation - self.goal[env].translation).norm()
    }
}

impl Task for ReachPose {
    fn name(&self) -> &str {
        "ReachPose"
    }

    fn time_limit(&self) -> usize {
        self.time_limit
    }

    fn obs_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (prefix, k) in [("q", 3), ("qd", 3), ("ee_pos", 3), ("ee_quat", 4), ("goal_pos", 3), ("goal_quat", 4), ("delta", 3)] {
            v.extend((0..k).map(|i| format!("{prefix}{i}")));
        }
        v
    }

    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        let model = scene.layout().articulations[env][0].model.clone();
        let rng = scene.rng(env);
        let q0: Vec<f64> = ARM_HOME.iter().map(|q| q + rng.gen_range(-0.1..0.1)).collect();
        let (goal_q, goal) = sample_arm_q(rng, &model, 0.05);
        scene.set_env_qpos(env, &q0).expect("arm dofs");
        scene.set_actor_pose(env, 0, Pose::from_translation(goal.translation)).expect("goal marker");
        self.goal[env] = goal;
        self.goal_q[env] = goal_q;
    }

    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        let ee = arm_ee_pose(scene, env, 0);
        let g = &self.goal[env];
        let d = g.translation - ee.translation;
        let parts: [&[f64]; 7] = [
            &scene.env_qpos(env)[..3],
            &scene.env_qvel(env)[..3],
            ee.translation.as_slice(),
            &ee.wxyz(),
            g.translation.as_slice(),
            &g.wxyz(),
            d.as_slice(),
        ];
        let mut i = 0;
        for p in parts {
            out[i..i + p.len()].copy_from_slice(p);
            i += p.len();
        }
    }

    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let d = self.distance(scene, env);
        Evaluation { success: d < self.tolerance, fail: false, reward: -d }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// EE-delta action that moves the end effector of articulation slot `slot`
/// toward `target` along the position-only DLS direction. The rotation part
/// is the rotation that joint step induces, so the 6-D command stays
/// consistent for a 3-joint arm. The whole vector is scaled down together
/// when any entry exceeds 1.
pub fn position_servo(scene: &SceneBatch, env: usize, slot: usize, cfg: &ControllerConfig, target: &Vec3, gain: f64) -> [f64; 6] {
    let s = &scene.layout().articulations[env][slot];
    let m = &s.model;
    let ee_i = m.template.link_index(cfg.ee_link.as_deref().unwrap_or("ee")).expect("ee link");
    let poses = &scene.env_link_poses(env)[s.links()];
    let ee = poses[ee_i];
    let jac = point_jacobian(m, poses, ee_i, &ee.translation).expect("ee in range");
    let jp = jac.fixed_rows::<3>(0).into_owned();
    let e: Vector3<f64> = (target - ee.translation) * gain;
    let lam2 = cfg.ik_lambda * cfg.ik_lambda;
    let dq = jp.transpose() * (&jp * jp.transpose() + Matrix3::identity() * lam2).try_inverse().expect("damped") * e;
    let w = jac.fixed_rows::<3>(3) * &dq;
    let lin = jp * dq;
    let w_ee = ee.inverse().transform_vector(&Vec3::new(w[0], w[1], w[2]));
    scaled([lin[0] / cfg.action_scale, lin[1] / cfg.action_scale, lin[2] / cfg.action_scale, w_ee.x / cfg.rot_action_scale, w_ee.y / cfg.rot_action_scale, w_ee.z / cfg.rot_action_scale])
}

fn scaled(mut a: [f64; 6]) -> [f64; 6] {
    let m = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 1.0 {
        a.iter_mut().for_each(|v| *v /= m);
    }
    a
}

/// Joint-space step toward `goal`, at most `max_step` rad on any joint,
/// as an action for a joint-position or joint-delta controller.
pub(super) fn joint_step(cfg: &ControllerConfig, model: &crate::model::ArticulationModel, q: &[f64], goal: &[f64], max_step: f64) -> Vec<f64> {
    let diff: Vec<f64> = goal.iter().zip(q).map(|(g, q)| g - q).collect();
    let m = diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let k = if m > max_step { max_step / m } else { 1.0 };
    diff.iter()
        .enumerate()
        .map(|(d, dd)| {
            let t = q[d] + dd * k;
            match cfg.mode {
                ControlMode::PdJointPos => {
                    let (lo, hi) = (model.lower[d], model.upper[d]);
                    (2.0 * (t - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
                }
                _ => servo(t, q[d], cfg.action_scale),
            }
        })
        .collect()
}

/// Scripted ReachPose solver: a position servo under the EE controller, or
/// rate-limited joint interpolation toward the sampled goal configuration
/// under joint controllers.
#[derive(Debug, Clone, Default)]
pub struct ScriptedReach;

impl Policy for ScriptedReach {
    fn act(&mut self, env: &VecEnv, _obs: &Obs) -> Vec<f64> {
        let task = task_of::<ReachPose>(env).expect("ScriptedReach needs ReachPose");
        let cfg = &env.agents[0].controller.cfg;
        let mut out = Vec::new();
        for e in 0..env.num_envs() {
            match cfg.mode {
                ControlMode::PdEeDeltaPose => {
                    out.extend(position_servo(&env.scene, e, 0, cfg, &task.goal[e].translation, 1.0));
                }
                _ => {
                    let model = &env.scene.layout().articulations[e][0].model;
                    out.extend(joint_step(cfg, model, &env.scene.env_qpos(e)[..3], &task.goal_q[e], 0.25));
                }
            }
        }
        out
    }
}

