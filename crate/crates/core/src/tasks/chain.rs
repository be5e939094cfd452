use super::{Overrides, TaskError};
use crate::assets::revolute_chain;
use crate::controllers::{ControlMode, ControllerConfig};
use crate::dynamics::SimConfig;
use crate::envs::{Evaluation, Task, TaskBuild};
use crate::pose::{Pose, Vec3};
use crate::scene::{ArticulationDesc, EnvDescriptor, SceneBatch, TemplateLibrary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub const MAX_DOF: usize = 6;
pub const MIN_DOF: usize = 2;

/// Serial chains whose DOF count differs per env; one joint per episode is
/// the target and must be driven past 90% of its upper limit.
///
/// State obs (24), padded to 6 joints: `q[6]`, `q̇[6]`, `mask[6]`,
/// `target one-hot[6]`.
pub struct OpenChainHetero {
    pub time_limit: usize,
    /// DOF count of each env, fixed at build time by the seed.
    pub dofs: Vec<usize>,
    pub target: Vec<usize>,
    pub threshold: f64,
}

/// DOF count of each env for a build seed.
pub fn sample_dofs(num_envs: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..num_envs).map(|_| rng.gen_range(MIN_DOF..=MAX_DOF)).collect()
}

pub fn chain_template_name(dof: usize) -> String {
    format!("chain{dof}")
}

/// Library holding every chain template the task may use.
pub fn chain_library() -> Result<TemplateLibrary, TaskError> {
    let mut lib = TemplateLibrary::new();
    for d in MIN_DOF..=MAX_DOF {
        lib.insert(chain_template_name(d), revolute_chain(&chain_template_name(d), d, 0.2, 0.5)?);
    }
    Ok(lib)
}

/// Env descriptor for a chain of `dof` joints.
pub fn chain_descriptor(dof: usize) -> EnvDescriptor {
    let mut a = ArticulationDesc::new("chain", chain_template_name(dof)).at(Pose::from_translation(Vec3::new(0.0, 0.0, 0.8)));
    a.gravity_compensation = true;
    a.collisions = false;
    EnvDescriptor { articulations: vec![a], actors: Vec::new(), ground: true }
}

pub(super) fn build(n: usize, seed: u64, o: &Overrides) -> Result<(Box<dyn Task>, TaskBuild), TaskError> {
    let dofs = sample_dofs(n, seed);
    let preset = match o.mode(ControlMode::PdJointDeltaPos) {
        m @ (ControlMode::PdJointPos | ControlMode::PdJointDeltaPos) => ControllerConfig::new(m, "chain").with_gains(200.0, 20.0),
        m => return Err(TaskError::Overrides(format!("OpenChain-Hetero does not support {}", m.name()))),
    };
    let task = OpenChainHetero { time_limit: o.time_limit(100), dofs: dofs.clone(), target: vec![0; n], threshold: 0.9 };
    let build = TaskBuild {
        library: chain_library()?,
        descriptors: dofs.iter().map(|d| chain_descriptor(*d)).collect(),
        agents: BTreeMap::from([("robot".to_string(), o.controller(preset))]),
        sim: o.sim(SimConfig::default()),
        cameras: o.cameras("1x128x128", Vec3::new(1.6, -1.6, 1.6), Vec3::new(0.0, 0.0, 0.8))?,
    };
    Ok((Box::new(task), build))
}

impl OpenChainHetero {
    fn target_upper(scene: &SceneBatch, env: usize, j: usize) -> f64 {
        scene.layout().articulations[env][0].model.upper[j]
    }
}

impl Task for OpenChainHetero {
    fn name(&self) -> &str {
        "OpenChain-Hetero"
    }

    fn time_limit(&self) -> usize {
        self.time_limit
    }

    fn obs_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for prefix in ["q", "qd", "mask", "target"] {
            v.extend((0..MAX_DOF).map(|i| format!("{prefix}{i}")));
        }
        v
    }

    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        let d = self.dofs[env];
        let rng = scene.rng(env);
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
        self.target[env] = rng.gen_range(0..d);
        scene.set_env_qpos(env, &q).expect("chain dofs");
    }

    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        out.fill(0.0);
        let d = self.dofs[env];
        out[..d].copy_from_slice(&scene.env_qpos(env)[..d]);
        out[MAX_DOF..MAX_DOF + d].copy_from_slice(&scene.env_qvel(env)[..d]);
        out[2 * MAX_DOF..2 * MAX_DOF + d].fill(1.0);
        out[3 * MAX_DOF + self.target[env]] = 1.0;
    }

    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let j = self.target[env];
        let upper = Self::target_upper(scene, env, j);
        let q = scene.env_qpos(env)[j];
        Evaluation { success: q > self.threshold * upper, fail: false, reward: q / upper }
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
