use super::{fixtures, Overrides, TaskError};
use crate::controllers::{ControlMode, ControllerConfig};
use crate::dynamics::SimConfig;
use crate::envs::{Evaluation, Task, TaskBuild};
use crate::pose::Vec3;
use crate::scene::{ArticulationDesc, EnvDescriptor, SceneBatch, TemplateLibrary};
use rand::Rng;
use std::collections::BTreeMap;

/// Steps the pole must stay upright for success.
pub const UPRIGHT_WINDOW: usize = 50;

/// Cart-pole balancing. State obs `[x, ẋ, θ, θ̇]` with `θ = 0` upright.
/// Fails when `|θ| > 0.8` or the cart reaches its rail end.
pub struct CartpoleBalance {
    pub time_limit: usize,
    pub upright: f64,
    /// Consecutive upright steps per env.
    pub streak: Vec<usize>,
}

pub(super) fn build(n: usize, o: &Overrides) -> Result<(Box<dyn super::Task>, TaskBuild), TaskError> {
    let mut desc = ArticulationDesc::new("cartpole", "cartpole");
    desc.collisions = false;
    let env = EnvDescriptor { articulations: vec![desc], actors: Vec::new(), ground: true };
    let preset = match o.mode(ControlMode::PdJointDeltaPos) {
        m @ (ControlMode::PdJointPos | ControlMode::PdJointDeltaPos) => ControllerConfig::new(m, "cartpole").with_joints(&["slider"]),
        m => return Err(TaskError::Overrides(format!("CartpoleBalance does not support {}", m.name()))),
    };
    let task = CartpoleBalance { time_limit: o.time_limit(250), upright: o.tolerance(0.2), streak: vec![0; n] };
    let build = TaskBuild {
        library: TemplateLibrary::from([("cartpole".to_string(), fixtures::cartpole()?)]),
        descriptors: vec![env; n],
        agents: BTreeMap::from([("robot".to_string(), o.controller(preset))]),
        sim: o.sim(SimConfig::default()),
        cameras: o.cameras("1x128x128", Vec3::new(0.0, -3.0, 1.4), Vec3::new(0.0, 0.0, 1.2))?,
    };
    Ok((Box::new(task), build))
}

impl Task for CartpoleBalance {
    fn name(&self) -> &str {
        "CartpoleBalance"
    }

    fn time_limit(&self) -> usize {
        self.time_limit
    }

    fn obs_names(&self) -> Vec<String> {
        ["x", "x_dot", "theta", "theta_dot"].map(String::from).to_vec()
    }

    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        let rng = scene.rng(env);
        let q = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.05..0.05)];
        let v = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
        scene.set_env_qpos(env, &q).expect("cartpole dofs");
        scene.set_env_qvel(env, &v).expect("cartpole dofs");
        self.streak[env] = 0;
    }

    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        let (q, v) = (scene.env_qpos(env), scene.env_qvel(env));
        out.copy_from_slice(&[q[0], v[0], q[1], v[1]]);
    }

    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let (x, theta) = (scene.env_qpos(env)[0], scene.env_qpos(env)[1]);
        if theta.abs() < self.upright {
            self.streak[env] += 1;
        } else {
            self.streak[env] = 0;
        }
        Evaluation {
            success: self.streak[env] >= UPRIGHT_WINDOW,
            fail: theta.abs() > 0.8 || x.abs() > 0.95,
            reward: theta.cos() - 0.01 * x * x,
        }
    }

    fn terminates_on_success(&self) -> bool {
        false
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
