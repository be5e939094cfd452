//! Batched controllers that turn normalized actions into joint drive targets.
//!
//! Actions are flat `N × action_dim` arrays with every entry in `[-1, 1]`.
//! Out-of-range entries are clipped and counted.
//!
//! | mode | action | drive |
//! |---|---|---|
//! | `pd_joint_pos` | one per joint, mapped onto the joint range | position target |
//! | `pd_joint_delta_pos` | one per joint, times `action_scale` | position target relative to current `qpos` |
//! | `pd_ee_delta_pose` | xyz translation (world, times `action_scale`) and axis-angle rotation (end-effector frame, times `rot_action_scale`) | DLS-IK step added to current `qpos` |
//! | `base_forward_rotate` | forward speed and yaw rate, times `action_scale` / `rot_action_scale` | velocity targets on the base `x`, `y`, `yaw` joints |

use crate::dynamics::DriveTargets;
use crate::kinematics::{dls_solve, forward_kinematics, point_jacobian, KinematicsError, DEFAULT_IK_LAMBDA};
use crate::model::ArticulationModel;
use crate::pose::{Pose, Vec3};
use crate::scene::{SceneBatch, SceneError};
use nalgebra::{Matrix6xX, Vector6};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("env {env}: articulation `{articulation}` has no joint `{joint}`")]
    UnknownJoint { env: usize, articulation: String, joint: String },
    #[error("joint `{0}` is fixed and cannot be controlled")]
    FixedJoint(String),
    #[error("invalid controller config: {0}")]
    Config(String),
    #[error("expected {expected} action values, got {got}")]
    ActionShape { expected: usize, got: usize },
    #[error("controllers `{0}` and `{1}` act on different articulations")]
    Incompatible(String, String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    PdJointPos,
    PdJointDeltaPos,
    PdEeDeltaPose,
    BaseForwardRotate,
}

impl ControlMode {
    pub fn name(&self) -> &'static str {
        match self {
            ControlMode::PdJointPos => "pd_joint_pos",
            ControlMode::PdJointDeltaPos => "pd_joint_delta_pos",
            ControlMode::PdEeDeltaPose => "pd_ee_delta_pose",
            ControlMode::BaseForwardRotate => "base_forward_rotate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::PdJointPos, Self::PdJointDeltaPos, Self::PdEeDeltaPose, Self::BaseForwardRotate]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

pub const DEFAULT_STIFFNESS: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    /// Articulation name in the scene.
    pub articulation: String,
    /// Controlled joints; empty selects every moving joint. For
    /// `base_forward_rotate` exactly three: `x` and `y` prismatic, then yaw.
    pub joints: Vec<String>,
    pub stiffness: f64,
    pub damping: f64,
    /// Serialized as `null` when unlimited.
    #[serde(with = "unlimited")]
    pub force_limit: f64,
    pub action_scale: f64,
    pub rot_action_scale: f64,
    /// End-effector link for `pd_ee_delta_pose`.
    pub ee_link: Option<String>,
    pub ik_lambda: f64,
}

mod unlimited {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        v.is_finite().then_some(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            mode: ControlMode::PdJointDeltaPos,
            articulation: String::new(),
            joints: Vec::new(),
            stiffness: DEFAULT_STIFFNESS,
            damping: 2.0 * DEFAULT_STIFFNESS.sqrt(),
            force_limit: f64::INFINITY,
            action_scale: 0.1,
            rot_action_scale: 0.1,
            ee_link: None,
            ik_lambda: DEFAULT_IK_LAMBDA,
        }
    }
}

impl ControllerConfig {
    pub fn new(mode: ControlMode, articulation: impl Into<String>) -> Self {
        Self { mode, articulation: articulation.into(), ..Self::default() }
    }

    pub fn with_joints(mut self, joints: &[&str]) -> Self {
        self.joints = joints.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_ee(mut self, link: &str) -> Self {
        self.ee_link = Some(link.into());
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.action_scale = scale;
        self
    }

    pub fn with_gains(mut self, stiffness: f64, damping: f64) -> Self {
        self.stiffness = stiffness;
        self.damping = damping;
        self
    }

    fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: &str| Err(ControllerError::Config(m.into()));
        if !(self.action_scale > 0.0) || !(self.rot_action_scale > 0.0) {
            return bad("action scales must be positive");
        }
        if self.stiffness < 0.0 || self.damping < 0.0 || !(self.force_limit > 0.0) {
            return bad("gains must be non-negative and the force limit positive");
        }
        if !(self.ik_lambda > 0.0) {
            return bad("ik_lambda must be positive");
        }
        if self.mode == ControlMode::PdEeDeltaPose && self.ee_link.is_none() {
            return bad("pd_ee_delta_pose needs ee_link");
        }
        if self.mode == ControlMode::BaseForwardRotate && self.joints.len() != 3 {
            return bad("base_forward_rotate needs joints [x, y, yaw]");
        }
        Ok(())
    }
}

/// Controller resolved against one scene.
#[derive(Debug, Clone)]
pub struct Controller {
    pub cfg: ControllerConfig,
    envs: Vec<Option<EnvBinding>>,
    dim: usize,
}

#[derive(Debug, Clone)]
struct EnvBinding {
    model: Arc<ArticulationModel>,
    base: Pose,
    dof_offset: usize,
    link_offset: usize,
    /// Template-local DOF indices of the controlled joints.
    dofs: Vec<usize>,
    ee_link: Option<usize>,
}

/// Clipping statistics of one `apply` call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ApplyReport {
    pub clipped: usize,
}

fn clip(a: f64, clipped: &mut usize) -> f64 {
    if a.is_nan() {
        *clipped += 1;
        return 0.0;
    }
    let c = a.clamp(-1.0, 1.0);
    if c != a {
        *clipped += 1;
    }
    c
}

/// Normalization bounds of a joint; unbounded joints map onto `[-π, π]`.
fn joint_range(m: &ArticulationModel, d: usize) -> (f64, f64) {
    let (lo, hi) = (m.lower[d], m.upper[d]);
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (-std::f64::consts::PI, std::f64::consts::PI)
    }
}

fn normalize(x: f64, (lo, hi): (f64, f64)) -> f64 {
    2.0 * (x - lo) / (hi - lo) - 1.0
}

fn unnormalize(a: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (a + 1.0) * 0.5 * (hi - lo)
}

impl Controller {
    pub fn new(cfg: ControllerConfig, scene: &SceneBatch) -> Result<Self, ControllerError> {
        cfg.validate()?;
        let view = scene.articulation(&cfg.articulation)?;
        let layout = scene.layout();
        let mut envs = Vec::with_capacity(scene.num_envs());
        for (env, slot) in view.slots().iter().enumerate() {
            let Some(a) = slot else {
                envs.push(None);
                continue;
            };
            let s = &layout.articulations[env][*a];
            let m = &s.model;
            let dofs = if cfg.joints.is_empty() {
                (0..m.dof()).collect()
            } else {
                cfg.joints
                    .iter()
                    .map(|name| {
                        let j = m.template.joint_index(name).ok_or_else(|| ControllerError::UnknownJoint {
                            env,
                            articulation: cfg.articulation.clone(),
                            joint: name.clone(),
                        })?;
                        m.dof_of_joint[j].ok_or_else(|| ControllerError::FixedJoint(name.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let ee_link = match &cfg.ee_link {
                Some(l) => Some(m.template.link_index(l).ok_or_else(|| {
                    ControllerError::Scene(SceneError::Lookup {
                        path: format!("{}/{}", cfg.articulation, l),
                        suggestions: scene.nearest_names(&format!("{}/{}", cfg.articulation, l), 3),
                    })
                })?),
                None => None,
            };
            envs.push(Some(EnvBinding { model: m.clone(), base: s.base_pose, dof_offset: s.dof_offset, link_offset: s.link_offset, dofs, ee_link }));
        }
        let dim = match cfg.mode {
            ControlMode::PdEeDeltaPose => 6,
            ControlMode::BaseForwardRotate => 2,
            _ => envs.iter().flatten().map(|b| b.dofs.len()).max().unwrap_or(0),
        };
        Ok(Self { cfg, envs, dim })
    }

    pub fn action_dim(&self) -> usize {
        self.dim
    }

    /// Action bounds: the `[-1, 1]` box of dimension `action_dim`.
    pub fn action_space(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0; self.dim], vec![1.0; self.dim])
    }

    /// Whether the controlled articulation exists in `env`.
    pub fn active(&self, env: usize) -> bool {
        self.envs[env].is_some()
    }

    /// Number of action entries that drive something in `env` (joint modes
    /// on heterogeneous batches use a prefix of the padded action).
    pub fn env_action_dim(&self, env: usize) -> usize {
        match (&self.envs[env], self.cfg.mode) {
            (None, _) => 0,
            (Some(b), ControlMode::PdJointPos | ControlMode::PdJointDeltaPos) => b.dofs.len(),
            _ => self.dim,
        }
    }

    fn check_shape(&self, scene: &SceneBatch, actions: &[f64]) -> Result<(), ControllerError> {
        let expected = scene.num_envs() * self.dim;
        if actions.len() != expected {
            return Err(ControllerError::ActionShape { expected, got: actions.len() });
        }
        Ok(())
    }

    /// Writes drive gains and targets for the controlled joints.
    pub fn apply(&self, scene: &SceneBatch, actions: &[f64], drives: &mut DriveTargets) -> Result<ApplyReport, ControllerError> {
        self.check_shape(scene, actions)?;
        let mut report = ApplyReport::default();
        for env in 0..scene.num_envs() {
            let Some(b) = &self.envs[env] else { continue };
            let raw = &actions[env * self.dim..(env + 1) * self.dim];
            let a: Vec<f64> = raw.iter().map(|x| clip(*x, &mut report.clipped)).collect();
            let q = &scene.env_qpos(env)[b.dof_offset..b.dof_offset + b.model.dof()];
            if self.cfg.mode == ControlMode::BaseForwardRotate {
                let (yaw_dof, v, w) = (b.dofs[2], a[0] * self.cfg.action_scale, a[1] * self.cfg.rot_action_scale);
                let yaw = q[yaw_dof];
                let vel = [v * yaw.cos(), v * yaw.sin(), w];
                for (k, d) in b.dofs.iter().enumerate() {
                    let col = b.dof_offset + d;
                    drives.set_gains(env, col, 0.0, self.cfg.damping, self.cfg.force_limit);
                    drives.set_target(env, col, q[*d], vel[k]);
                }
                continue;
            }
            let targets = self.joint_targets(b, q, &scene.env_link_poses(env)[b.link_offset..], &a)?;
            for (k, d) in b.dofs.iter().enumerate() {
                let col = b.dof_offset + d;
                drives.set_gains(env, col, self.cfg.stiffness, self.cfg.damping, self.cfg.force_limit);
                drives.set_target(env, col, targets[k], 0.0);
            }
        }
        Ok(report)
    }

    /// Position targets of the controlled joints for a clipped action.
    fn joint_targets(&self, b: &EnvBinding, q: &[f64], link_poses: &[Pose], a: &[f64]) -> Result<Vec<f64>, ControllerError> {
        let m = &b.model;
        let clamp = |d: usize, x: f64| x.clamp(m.lower[d], m.upper[d]);
        Ok(match self.cfg.mode {
            ControlMode::PdJointPos => b.dofs.iter().enumerate().map(|(k, d)| clamp(*d, unnormalize(a[k], joint_range(m, *d)))).collect(),
            ControlMode::PdJointDeltaPos => {
                b.dofs.iter().enumerate().map(|(k, d)| clamp(*d, q[*d] + a[k] * self.cfg.action_scale)).collect()
            }
            ControlMode::PdEeDeltaPose => {
                let ee = b.ee_link.expect("validated");
                let local = &link_poses[..m.num_links()];
                let rot_world = local[ee].transform_vector(&Vec3::new(a[3], a[4], a[5])) * self.cfg.rot_action_scale;
                let t = Vec3::new(a[0], a[1], a[2]) * self.cfg.action_scale;
                let twist = Vector6::new(t.x, t.y, t.z, rot_world.x, rot_world.y, rot_world.z);
                let dq = self.ik_step(b, local, ee, &twist)?;
                b.dofs.iter().enumerate().map(|(k, d)| clamp(*d, q[*d] + dq[k])).collect()
            }
            ControlMode::BaseForwardRotate => b.dofs.iter().map(|d| q[*d]).collect(),
        })
    }

    /// DLS step restricted to the controlled joints.
    fn ik_step(&self, b: &EnvBinding, poses: &[Pose], ee: usize, twist: &Vector6<f64>) -> Result<Vec<f64>, ControllerError> {
        let full = point_jacobian(&b.model, poses, ee, &poses[ee].translation)?;
        let mut jac = Matrix6xX::zeros(b.dofs.len());
        for (k, d) in b.dofs.iter().enumerate() {
            jac.set_column(k, &full.column(*d));
        }
        Ok(dls_solve(&jac, twist, self.cfg.ik_lambda)?.iter().copied().collect())
    }

    /// Controlled-joint position targets that `action` would produce in
    /// `env` at the current state (empty when the env lacks the articulation).
    pub fn targets_for(&self, scene: &SceneBatch, env: usize, action: &[f64]) -> Result<Vec<f64>, ControllerError> {
        let Some(b) = &self.envs[env] else { return Ok(Vec::new()) };
        let mut clipped = 0;
        let a: Vec<f64> = action.iter().map(|x| clip(*x, &mut clipped)).collect();
        let q = &scene.env_qpos(env)[b.dof_offset..b.dof_offset + b.model.dof()];
        self.joint_targets(b, q, &scene.env_link_poses(env)[b.link_offset..], &a)
    }

    /// End-effector pose in `env` (for `pd_ee_delta_pose` controllers).
    pub fn ee_pose(&self, scene: &SceneBatch, env: usize) -> Option<Pose> {
        self.ee_pose_at(env, scene.env_qpos(env))
    }

    /// End-effector pose for a padded joint-position row of `env`.
    pub fn ee_pose_at(&self, env: usize, qpos_row: &[f64]) -> Option<Pose> {
        let b = self.envs[env].as_ref()?;
        let ee = b.ee_link?;
        let q = &qpos_row[b.dof_offset..b.dof_offset + b.model.dof()];
        Some(forward_kinematics(&b.model, &b.base, q)[ee])
    }
}

/// Result of translating an action between controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub action: Vec<f64>,
    /// Norm of the part of the ideal action lost to clipping.
    pub residual: f64,
}

/// Translates one env's action under `from` into an action under `to` that
/// reproduces the same joint targets (joint modes) or the same end-effector
/// target (EE mode) at the current scene state.
pub fn convert_action(
    from: &Controller,
    to: &Controller,
    scene: &SceneBatch,
    env: usize,
    action: &[f64],
) -> Result<Conversion, ControllerError> {
    if from.cfg.articulation != to.cfg.articulation {
        return Err(ControllerError::Incompatible(from.cfg.articulation.clone(), to.cfg.articulation.clone()));
    }
    if from.cfg == to.cfg {
        return Ok(Conversion { action: action.to_vec(), residual: 0.0 });
    }
    let (Some(bf), Some(bt)) = (&from.envs[env], &to.envs[env]) else {
        return Ok(Conversion { action: vec![0.0; to.dim], residual: 0.0 });
    };
    if matches!(from.cfg.mode, ControlMode::BaseForwardRotate) || matches!(to.cfg.mode, ControlMode::BaseForwardRotate) {
        return Err(ControllerError::Config("base controllers convert only to themselves".into()));
    }
    let m = &bf.model;
    let q = &scene.env_qpos(env)[bf.dof_offset..bf.dof_offset + m.dof()];
    let targets = from.targets_for(scene, env, action)?;
    let mut q_target = q.to_vec();
    for (k, d) in bf.dofs.iter().enumerate() {
        q_target[*d] = targets[k];
    }
    let ideal: Vec<f64> = match to.cfg.mode {
        ControlMode::PdJointPos => bt.dofs.iter().map(|d| normalize(q_target[*d], joint_range(m, *d))).collect(),
        ControlMode::PdJointDeltaPos => bt.dofs.iter().map(|d| (q_target[*d] - q[*d]) / to.cfg.action_scale).collect(),
        ControlMode::PdEeDeltaPose => {
            let ee = bt.ee_link.expect("validated");
            let now = forward_kinematics(m, &bt.base, q)[ee];
            let goal = forward_kinematics(m, &bt.base, &q_target)[ee];
            let t = (goal.translation - now.translation) / to.cfg.action_scale;
            let w = now.inverse().transform_vector(&now.rotation_error_to(&goal)) / to.cfg.rot_action_scale;
            vec![t.x, t.y, t.z, w.x, w.y, w.z]
        }
        ControlMode::BaseForwardRotate => unreachable!(),
    };
    let mut padded = vec![0.0; to.dim];
    let mut residual = 0.0;
    for (k, v) in ideal.iter().enumerate() {
        padded[k] = v.clamp(-1.0, 1.0);
        residual += (v - padded[k]).powi(2);
    }
    Ok(Conversion { action: padded, residual: residual.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::revolute_chain;
    use crate::dynamics::{step, SimConfig};
    use crate::scene::{ArticulationDesc, EnvDescriptor, TemplateLibrary};

    fn scene(dof: usize, gravity_comp: bool) -> SceneBatch {
        let lib = TemplateLibrary::from([("chain".to_string(), revolute_chain("chain", dof, 0.15, 0.2).unwrap())]);
        let mut a = ArticulationDesc::new("arm", "chain");
        a.gravity_compensation = gravity_comp;
        a.init_qpos = Some((0..dof).map(|i| if i == 1 { 0.6 } else { 0.3 }).collect());
        SceneBatch::build(&lib, vec![EnvDescriptor { articulations: vec![a], ..Default::default() }; 2], 0).unwrap()
    }

    #[test]
    fn action_dims() {
        let s = scene(3, true);
        let joint = Controller::new(ControllerConfig::new(ControlMode::PdJointPos, "arm"), &s).unwrap();
        assert_eq!(joint.action_dim(), 3);
        let ee = Controller::new(ControllerConfig::new(ControlMode::PdEeDeltaPose, "arm").with_ee("link2"), &s).unwrap();
        assert_eq!(ee.action_dim(), 6);
        let err = Controller::new(ControllerConfig::new(ControlMode::PdJointPos, "arm").with_joints(&["nope"]), &s);
        assert!(matches!(err, Err(ControllerError::UnknownJoint { .. })));
    }

    #[test]
    fn zero_delta_holds_current_position() {
        let s = scene(3, true);
        let c = Controller::new(ControllerConfig::new(ControlMode::PdJointDeltaPos, "arm"), &s).unwrap();
        let mut d = DriveTargets::new(&s);
        c.apply(&s, &[0.0; 6], &mut d).unwrap();
        assert_eq!(&d.target_pos[0..3], s.env_qpos(0));
    }

    #[test]
    fn delta_clamps_to_limit() {
        let mut s = scene(3, true);
        s.set_env_qpos(0, &[2.95, 0.0, 0.0]).unwrap();
        let c = Controller::new(ControllerConfig::new(ControlMode::PdJointDeltaPos, "arm"), &s).unwrap();
        let mut d = DriveTargets::new(&s);
        let r = c.apply(&s, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0], &mut d).unwrap();
        assert_eq!(d.target_pos[0], 3.0);
        assert_eq!(r.clipped, 1);
    }

    #[test]
    fn normalization_round_trip() {
        for x in [-3.0, -1.0, 0.0, 0.5, 2.9] {
            let r = (-3.0, 3.0);
            assert!((unnormalize(normalize(x, r), r) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn hold_with_gravity_compensation() {
        let mut s = scene(3, true);
        let c = Controller::new(ControllerConfig::new(ControlMode::PdJointDeltaPos, "arm"), &s).unwrap();
        let q0 = s.env_qpos(0).to_vec();
        let cfg = SimConfig::default();
        let mut d = DriveTargets::new(&s);
        for _ in 0..100 {
            c.apply(&s, &[0.0; 6], &mut d).unwrap();
            step(&mut s, &d, &cfg).unwrap();
        }
        let drift: f64 = s.env_qpos(0).iter().zip(&q0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(drift < 1e-3, "{drift}");
    }

    #[test]
    fn ee_delta_moves_along_x() {
        let mut s = scene(6, true);
        let c = Controller::new(ControllerConfig::new(ControlMode::PdEeDeltaPose, "arm").with_ee("link5").with_scale(0.01).with_gains(1e4, 100.0), &s).unwrap();
        let x0 = c.ee_pose(&s, 0).unwrap().translation.x;
        let cfg = SimConfig::default();
        let mut d = DriveTargets::new(&s);
        let a = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let actions: Vec<f64> = a.iter().chain(a.iter()).copied().collect();
        for _ in 0..10 {
            c.apply(&s, &actions, &mut d).unwrap();
            step(&mut s, &d, &cfg).unwrap();
        }
        let dx = c.ee_pose(&s, 0).unwrap().translation.x - x0;
        assert!((0.05 * 0.7..=0.1 * 1.3).contains(&dx), "{dx}");
    }

    #[test]
    fn conversions() {
        let s = scene(3, true);
        let pos = Controller::new(ControllerConfig::new(ControlMode::PdJointPos, "arm"), &s).unwrap();
        let delta = Controller::new(ControllerConfig::new(ControlMode::PdJointDeltaPos, "arm"), &s).unwrap();
        let a = [0.1, 0.2, 0.15];
        assert_eq!(convert_action(&pos, &pos, &s, 0, &a).unwrap().action, a.to_vec());
        let conv = convert_action(&pos, &delta, &s, 0, &a).unwrap();
        let targets = pos.targets_for(&s, 0, &a).unwrap();
        for k in 0..3 {
            let expected = (targets[k] - s.env_qpos(0)[k]) / 0.1;
            assert!((conv.action[k] - expected.clamp(-1.0, 1.0)).abs() < 1e-12);
        }
        assert!(conv.residual > 0.0);
    }
}
