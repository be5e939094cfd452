use super::reach::marker;
use super::{fixtures, servo, task_of, Overrides, Policy, TaskError};
use crate::assets::Shape;
use crate::controllers::{ControlMode, ControllerConfig};
use crate::dynamics::SimConfig;
use crate::envs::{Evaluation, Obs, Task, TaskBuild, VecEnv};
use crate::pose::{Pose, Vec3};
use crate::scene::{ActorDesc, ArticulationDesc, EnvDescriptor, SceneBatch, TemplateLibrary};
use nalgebra::Vector2;
use rand::Rng;
use std::collections::BTreeMap;

pub const CUBE_HALF: f64 = 0.025;
pub const TIP_RADIUS: f64 = 0.02;
const RANGE: f64 = 0.4;

/// Push a cube across the floor to a goal with a planar sphere pusher.
///
/// State obs (12): `tip_xy[2]`, `tip_vel[2]`, `cube_pos[3]`, `cube_yaw`,
/// `goal_xy[2]`, `goal_xy − cube_xy[2]`.
pub struct PushCube {
    pub time_limit: usize,
    pub tolerance: f64,
    pub goal: Vec<Vector2<f64>>,
}

pub(super) fn build(n: usize, o: &Overrides) -> Result<(Box<dyn Task>, TaskBuild), TaskError> {
    let mut pusher = ArticulationDesc::new("pusher", "pusher").at(Pose::from_translation(Vec3::new(0.0, 0.0, CUBE_HALF)));
    pusher.init_qpos = Some(vec![-0.25, 0.0]);
    let mut cube = ActorDesc::dynamic(
        "cube",
        Shape::Box { half_extents: [CUBE_HALF; 3] },
        0.1,
        Pose::from_translation(Vec3::new(0.0, 0.0, CUBE_HALF)),
    );
    cube.color = [0.85, 0.2, 0.2, 1.0];
    let env = EnvDescriptor { articulations: vec![pusher], actors: vec![cube, marker("goal", 0.012, [0.1, 0.9, 0.2, 1.0])], ground: true };
    let preset = match o.mode(ControlMode::PdJointDeltaPos) {
        m @ (ControlMode::PdJointPos | ControlMode::PdJointDeltaPos) => ControllerConfig::new(m, "pusher").with_scale(0.05),
        m => return Err(TaskError::Overrides(format!("PushCube does not support {}", m.name()))),
    };
    let task = PushCube { time_limit: o.time_limit(150), tolerance: o.tolerance(0.025), goal: vec![Vector2::zeros(); n] };
    let build = TaskBuild {
        library: TemplateLibrary::from([("pusher".to_string(), fixtures::pusher(TIP_RADIUS, RANGE)?)]),
        descriptors: vec![env; n],
        agents: BTreeMap::from([("robot".to_string(), o.controller(preset))]),
        sim: o.sim(SimConfig::default()),
        cameras: o.cameras("1x128x128", Vec3::new(0.05, -0.6, 0.5), Vec3::new(0.05, 0.0, 0.0))?,
    };
    Ok((Box::new(task), build))
}

impl PushCube {
    pub fn cube_xy(scene: &SceneBatch, env: usize) -> Vector2<f64> {
        scene.env_actor_poses(env)[0].translation.xy()
    }

    pub fn distance(&self, scene: &SceneBatch, env: usize) -> f64 {
        (Self::cube_xy(scene, env) - self.goal[env]).norm()
    }
}

impl Task for PushCube {
    fn name(&self) -> &str {
        "PushCube"
    }

    fn time_limit(&self) -> usize {
        self.time_limit
    }

    fn obs_names(&self) -> Vec<String> {
        ["tip_x", "tip_y", "tip_vx", "tip_vy", "cube_x", "cube_y", "cube_z", "cube_yaw", "goal_x", "goal_y", "delta_x", "delta_y"]
            .map(String::from)
            .to_vec()
    }

    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        let rng = scene.rng(env);
        let c = Vector2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        let g = c + Vector2::new(rng.gen_range(0.1..0.2), rng.gen_range(-0.05..0.05));
        let tip_y = rng.gen_range(-0.05..0.05);
        scene.set_env_qpos(env, &[-0.25, tip_y]).expect("pusher dofs");
        scene.set_actor_pose(env, 0, Pose::from_translation(Vec3::new(c.x, c.y, CUBE_HALF))).expect("cube");
        scene.set_actor_pose(env, 1, Pose::from_translation(Vec3::new(g.x, g.y, 0.0))).expect("goal marker");
        self.goal[env] = g;
    }

    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        let (q, v) = (scene.env_qpos(env), scene.env_qvel(env));
        let cube = scene.env_actor_poses(env)[0];
        let yaw = {
            let f = cube.transform_vector(&Vec3::x());
            f.y.atan2(f.x)
        };
        let g = self.goal[env];
        let d = g - cube.translation.xy();
        out.copy_from_slice(&[q[0], q[1], v[0], v[1], cube.translation.x, cube.translation.y, cube.translation.z, yaw, g.x, g.y, d.x, d.y]);
    }

    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let d = self.distance(scene, env);
        let q = scene.env_qpos(env);
        let reach = (Vector2::new(q[0], q[1]) - Self::cube_xy(scene, env)).norm();
        let cube_z = scene.env_actor_poses(env)[0].translation.z;
        Evaluation { success: d < self.tolerance, fail: !(0.0..=0.2).contains(&cube_z), reward: -d - 0.5 * reach }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

/// Scripted pusher. Pushes along the cube face normal best aligned with the
/// goal direction, with the tip centred on that face, until the goal offset
/// along the normal is used up; then picks the next face. Repositioning
/// circles the cube at a safe radius.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPush;

/// Centre distance between tip and cube when touching face-on.
const CONTACT: f64 = CUBE_HALF + TIP_RADIUS;
const ORBIT: f64 = CONTACT + 0.03;

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI
}

/// Tip target for one env.
fn push_target(tip: Vector2<f64>, cube: &Pose, goal: Vector2<f64>) -> Vector2<f64> {
    let c = cube.translation.xy();
    let g = goal - c;
    if g.norm() < 0.008 {
        return tip;
    }
    let f1 = cube.transform_vector(&Vec3::x()).xy().normalize();
    let f2 = Vector2::new(-f1.y, f1.x);
    let rel = tip - c;
    let faces = [f1, -f1, f2, -f2];
    let in_contact = |m: &Vector2<f64>| {
        let along = rel.dot(m);
        (-CONTACT - 0.02..-CONTACT + 0.004).contains(&along) && (rel - m * along).norm() < 0.006
    };
    // keep pushing the current face while it still has offset to remove
    if let Some(m) = faces.iter().find(|m| in_contact(m) && g.dot(m) > 0.004) {
        return c - m * CONTACT + m * g.dot(m).min(0.025);
    }
    let m = faces.into_iter().max_by(|a, b| a.dot(&g).total_cmp(&b.dot(&g))).expect("four faces");
    let pre = c - m * (CONTACT + 0.015);
    let diff = wrap((-m.y).atan2(-m.x) - rel.y.atan2(rel.x));
    if diff.abs() < 0.5 {
        return pre;
    }
    let a = rel.y.atan2(rel.x) + diff.signum() * 0.6;
    c + Vector2::new(a.cos(), a.sin()) * ORBIT
}

impl Policy for ScriptedPush {
    fn act(&mut self, env: &VecEnv, _obs: &Obs) -> Vec<f64> {
        let task = task_of::<PushCube>(env).expect("ScriptedPush needs PushCube");
        let cfg = &env.agents[0].controller.cfg;
        let mut out = Vec::with_capacity(2 * env.num_envs());
        for e in 0..env.num_envs() {
            let q = env.scene.env_qpos(e);
            let tip = Vector2::new(q[0], q[1]);
            let target = push_target(tip, &env.scene.env_actor_poses(e)[0], task.goal[e]);
            match cfg.mode {
                ControlMode::PdJointPos => {
                    out.extend([target.x / RANGE, target.y / RANGE].map(|v| v.clamp(-1.0, 1.0)));
                }
                _ => out.extend([servo(target.x, tip.x, cfg.action_scale), servo(target.y, tip.y, cfg.action_scale)]),
            }
        }
        out
    }
}
