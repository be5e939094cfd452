//! Batched forward dynamics and time integration.
//!
//! Each substep runs, per env: joint drives and articulated-body forward
//! dynamics, free-body force integration, contact detection, projected
//! Gauss-Seidel contact resolution, then semi-implicit position integration
//! with joint-limit clamping. Envs are independent and stepped in parallel.

mod aba;
mod contacts;
mod solver;

pub use aba::{aba_forward_dynamics, AbaFactor};
pub use contacts::{Body, Contact, ContactSet};

use crate::assets::shape_inertia;
use crate::kinematics::forward_kinematics_into;
use crate::pose::{Pose, Vec3};
use crate::scene::{BodyKind, EnvRows, Layout, SceneBatch};
use nalgebra::{Matrix3, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("sim_freq {sim_freq} is not a positive multiple of control_freq {control_freq}")]
    Frequency { sim_freq: u32, control_freq: u32 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("drive targets sized {got:?}, scene needs {expected:?}")]
    DriveShape { expected: (usize, usize), got: (usize, usize) },
    #[error("non-finite state in envs {envs:?}; they are frozen until reset")]
    Diverged { envs: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub friction_coeff: f64,
    pub restitution: f64,
    pub penetration_slop: f64,
    pub baumgarte_beta: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self { friction_coeff: 1.0, restitution: 0.0, penetration_slop: 5e-4, baumgarte_beta: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sim_freq: u32,
    pub control_freq: u32,
    pub solver_pos_iters: u32,
    pub solver_vel_iters: u32,
    pub gravity: [f64; 3],
    pub contact: ContactConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sim_freq: 120,
            control_freq: 60,
            solver_pos_iters: 4,
            solver_vel_iters: 0,
            gravity: [0.0, 0.0, -9.81],
            contact: ContactConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.control_freq == 0 || self.sim_freq == 0 || !self.sim_freq.is_multiple_of(self.control_freq) {
            return Err(DynamicsError::Frequency { sim_freq: self.sim_freq, control_freq: self.control_freq });
        }
        let c = &self.contact;
        if !(c.friction_coeff >= 0.0 && (0.0..=1.0).contains(&c.restitution) && c.penetration_slop >= 0.0 && (0.0..=1.0).contains(&c.baumgarte_beta)) {
            return Err(DynamicsError::Config(format!("contact parameters out of range: {c:?}")));
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return Err(DynamicsError::Config("gravity must be finite".into()));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.sim_freq / self.control_freq) as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sim_freq as f64
    }

    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_freq as f64
    }

    pub fn gravity(&self) -> Vec3 {
        Vec3::from(self.gravity)
    }

    pub fn from_json(text: &str) -> Result<Self, DynamicsError> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| DynamicsError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-DOF PD drive parameters, padded `N × dof_max` like the scene buffers.
/// Zero gains leave a joint passive.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveTargets {
    pub num_envs: usize,
    pub dof_max: usize,
    pub target_pos: Vec<f64>,
    pub target_vel: Vec<f64>,
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub force_limit: Vec<f64>,
}

impl DriveTargets {
    pub fn new(scene: &SceneBatch) -> Self {
        let n = scene.num_envs() * scene.dof_max();
        Self {
            num_envs: scene.num_envs(),
            dof_max: scene.dof_max(),
            target_pos: vec![0.0; n],
            target_vel: vec![0.0; n],
            kp: vec![0.0; n],
            kd: vec![0.0; n],
            force_limit: vec![f64::INFINITY; n],
        }
    }

    pub fn index(&self, env: usize, dof: usize) -> usize {
        env * self.dof_max + dof
    }

    pub fn set_gains(&mut self, env: usize, dof: usize, kp: f64, kd: f64, force_limit: f64) {
        let i = self.index(env, dof);
        self.kp[i] = kp;
        self.kd[i] = kd;
        self.force_limit[i] = force_limit;
    }

    pub fn set_target(&mut self, env: usize, dof: usize, pos: f64, vel: f64) {
        let i = self.index(env, dof);
        self.target_pos[i] = pos;
        self.target_vel[i] = vel;
    }

    fn row(&self, env: usize) -> DriveRow<'_> {
        let r = env * self.dof_max..(env + 1) * self.dof_max;
        DriveRow {
            target_pos: &self.target_pos[r.clone()],
            target_vel: &self.target_vel[r.clone()],
            kp: &self.kp[r.clone()],
            kd: &self.kd[r.clone()],
            force_limit: &self.force_limit[r],
        }
    }
}

struct DriveRow<'a> {
    target_pos: &'a [f64],
    target_vel: &'a [f64],
    kp: &'a [f64],
    kd: &'a [f64],
    force_limit: &'a [f64],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    /// Contacts found in the last substep, summed over envs.
    pub contacts: usize,
    /// Unsupported shape pairs encountered, summed over envs and substeps.
    pub unsupported_pairs: usize,
}

/// Advances every env by one control period (`sim_freq / control_freq`
/// substeps). Envs that go non-finite are restored to their state at the
/// start of the call, flagged as diverged and skipped by later steps until
/// they are reset; the error lists them while all other envs advance.
pub fn step(scene: &mut SceneBatch, drives: &DriveTargets, cfg: &SimConfig) -> Result<StepStats, DynamicsError> {
    cfg.validate()?;
    if (drives.num_envs, drives.dof_max) != (scene.num_envs(), scene.dof_max()) {
        return Err(DynamicsError::DriveShape {
            expected: (scene.num_envs(), scene.dof_max()),
            got: (drives.num_envs, drives.dof_max),
        });
    }
    let (layout, rows) = scene.split_rows();
    let results: Vec<(StepStats, bool)> = rows
        .into_par_iter()
        .map(|mut r| {
            if *r.diverged {
                return (StepStats::default(), false);
            }
            let env = r.env;
            let outcome = step_env(layout, &mut r, &drives.row(env), cfg);
            (outcome.0, outcome.1)
        })
        .collect();
    let mut stats = StepStats::default();
    let mut diverged = Vec::new();
    for (env, (s, d)) in results.into_iter().enumerate() {
        stats.contacts += s.contacts;
        stats.unsupported_pairs += s.unsupported_pairs;
        if d {
            diverged.push(env);
        }
    }
    if diverged.is_empty() {
        Ok(stats)
    } else {
        Err(DynamicsError::Diverged { envs: diverged })
    }
}

/// Contacts of every env at the current state.
pub fn detect_contacts(scene: &SceneBatch, cfg: &SimConfig) -> ContactSet {
    let layout = scene.layout();
    let mut set = ContactSet::default();
    let mut colliders = Vec::new();
    for env in 0..scene.num_envs() {
        let lm = layout.link_max;
        let am = layout.actor_max;
        let b = scene.buffers();
        contacts::env_colliders(
            layout,
            env,
            &b.link_pose[env * lm..(env + 1) * lm],
            &b.actor_pose[env * am..(env + 1) * am],
            &mut colliders,
        );
        contacts::detect_env(env, layout.has_ground(env), &colliders, cfg.contact.penetration_slop, &mut set);
    }
    set
}

struct Backup {
    qpos: Vec<f64>,
    qvel: Vec<f64>,
    qacc: Vec<f64>,
    link_pose: Vec<Pose>,
    actor_pose: Vec<Pose>,
    actor_linvel: Vec<Vec3>,
    actor_angvel: Vec<Vec3>,
}

impl Backup {
    fn take(r: &EnvRows) -> Self {
        Self {
            qpos: r.qpos.to_vec(),
            qvel: r.qvel.to_vec(),
            qacc: r.qacc.to_vec(),
            link_pose: r.link_pose.to_vec(),
            actor_pose: r.actor_pose.to_vec(),
            actor_linvel: r.actor_linvel.to_vec(),
            actor_angvel: r.actor_angvel.to_vec(),
        }
    }

    fn restore(&self, r: &mut EnvRows) {
        r.qpos.copy_from_slice(&self.qpos);
        r.qvel.copy_from_slice(&self.qvel);
        r.qacc.copy_from_slice(&self.qacc);
        r.link_pose.copy_from_slice(&self.link_pose);
        r.actor_pose.copy_from_slice(&self.actor_pose);
        r.actor_linvel.copy_from_slice(&self.actor_linvel);
        r.actor_angvel.copy_from_slice(&self.actor_angvel);
    }
}

fn env_is_finite(r: &EnvRows) -> bool {
    r.qpos.iter().chain(r.qvel.iter()).all(|v| v.is_finite())
        && r.actor_pose.iter().all(Pose::is_finite)
        && r.actor_linvel.iter().chain(r.actor_angvel.iter()).all(|v| v.iter().all(|x| x.is_finite()))
}

fn step_env(layout: &Layout, r: &mut EnvRows, drives: &DriveRow, cfg: &SimConfig) -> (StepStats, bool) {
    let backup = Backup::take(r);
    let mut stats = StepStats::default();
    let mut scratch = Scratch::default();
    for _ in 0..cfg.substeps() {
        let s = substep(layout, r, drives, cfg, &mut scratch);
        stats.contacts = s.contacts;
        stats.unsupported_pairs += s.unsupported_pairs;
        if !env_is_finite(r) {
            backup.restore(r);
            *r.diverged = true;
            return (stats, true);
        }
    }
    r.actor_force.fill(Vec3::zeros());
    r.actor_torque.fill(Vec3::zeros());
    (stats, false)
}

#[derive(Default)]
struct Scratch {
    colliders: Vec<contacts::Collider>,
    contacts: ContactSet,
}

fn substep(layout: &Layout, r: &mut EnvRows, drives: &DriveRow, cfg: &SimConfig, scratch: &mut Scratch) -> StepStats {
    let env = r.env;
    let dt = cfg.dt();
    let g = cfg.gravity();

    // articulations: implicit PD drives folded into the joint-space inertia
    let slots = &layout.articulations[env];
    let mut factors = Vec::with_capacity(slots.len());
    for slot in slots {
        let m = &slot.model;
        let dofs = slot.dofs();
        let q = &r.qpos[dofs.clone()];
        let qd = &r.qvel[dofs.clone()];
        let mut tau = vec![0.0; m.dof()];
        let mut armature = vec![0.0; m.dof()];
        for (k, d) in dofs.clone().enumerate() {
            let (kp, kd) = (drives.kp[d], drives.kd[d]);
            let damping = m.damping[k];
            armature[k] = dt * damping;
            tau[k] = -damping * qd[k];
            if kp == 0.0 && kd == 0.0 {
                continue;
            }
            let err = drives.target_pos[d] - q[k];
            let verr = drives.target_vel[d] - qd[k];
            let implicit = kp * (err - dt * qd[k]) + kd * verr;
            let limit = drives.force_limit[d];
            if implicit.abs() <= limit {
                tau[k] += implicit;
                armature[k] += dt * kd + dt * dt * kp;
            } else {
                tau[k] += (kp * err + kd * verr).clamp(-limit, limit);
            }
        }
        let f = AbaFactor::new(m, &slot.base_pose, q, &armature, &g);
        let mut qdd = vec![0.0; m.dof()];
        f.solve(m, qd, &tau, None, !slot.gravity_compensation, &mut qdd);
        for (k, d) in dofs.enumerate() {
            r.qacc[d] = qdd[k];
            r.qvel[d] += dt * qdd[k];
        }
        factors.push(f);
    }

    // free bodies
    let actors = &layout.descriptors[env].actors;
    let mut inv_inertia = Vec::with_capacity(actors.len());
    let mut body_inertia = Vec::with_capacity(actors.len());
    for (k, a) in actors.iter().enumerate() {
        let ib = shape_inertia(&a.shape, a.mass.max(0.0));
        let ib_inv = ib.try_inverse().unwrap_or_else(Matrix3::zeros);
        let rot = r.actor_pose[k].rotation_matrix();
        inv_inertia.push(rot * ib_inv * rot.transpose());
        body_inertia.push((ib, ib_inv));
        if a.kind == BodyKind::Dynamic {
            r.actor_linvel[k] += dt * (g + r.actor_force[k] / a.mass);
            let iw = rot * ib * rot.transpose();
            let l = iw * r.actor_angvel[k] + dt * r.actor_torque[k];
            r.actor_angvel[k] = inv_inertia[k] * l;
        }
    }

    // contacts
    contacts::env_colliders(layout, env, r.link_pose, r.actor_pose, &mut scratch.colliders);
    scratch.contacts.contacts.clear();
    scratch.contacts.unsupported_pairs = 0;
    contacts::detect_env(env, layout.has_ground(env), &scratch.colliders, cfg.contact.penetration_slop, &mut scratch.contacts);
    let ctx = solver::SolverContext { layout, env, factors: &factors, actor_inv_inertia: &inv_inertia };
    solver::solve(
        &ctx,
        r,
        &scratch.contacts.contacts,
        &cfg.contact,
        dt,
        cfg.solver_pos_iters as usize,
        cfg.solver_vel_iters as usize,
    );

    // positions
    for slot in slots {
        let m = &slot.model;
        for (k, d) in slot.dofs().enumerate() {
            r.qpos[d] += dt * r.qvel[d];
            if r.qpos[d] < m.lower[k] {
                r.qpos[d] = m.lower[k];
                r.qvel[d] = r.qvel[d].max(0.0);
            } else if r.qpos[d] > m.upper[k] {
                r.qpos[d] = m.upper[k];
                r.qvel[d] = r.qvel[d].min(0.0);
            }
        }
        forward_kinematics_into(m, &slot.base_pose, &r.qpos[slot.dofs()], &mut r.link_pose[slot.links()]);
    }
    for (k, a) in actors.iter().enumerate() {
        if a.kind == BodyKind::Static {
            continue;
        }
        let pose = r.actor_pose[k];
        let w = r.actor_angvel[k];
        let rot0 = pose.rotation_matrix();
        let (ib, ib_inv) = body_inertia[k];
        let l = rot0 * ib * rot0.transpose() * w;
        let rotation = UnitQuaternion::from_scaled_axis(w * dt) * pose.rotation();
        r.actor_pose[k] = Pose::from_parts(pose.translation + dt * r.actor_linvel[k], rotation);
        if a.kind == BodyKind::Dynamic {
            let rot1 = r.actor_pose[k].rotation_matrix();
            r.actor_angvel[k] = rot1 * ib_inv * rot1.transpose() * l;
        }
    }
    StepStats { contacts: scratch.contacts.contacts.len(), unsupported_pairs: scratch.contacts.unsupported_pairs }
}
