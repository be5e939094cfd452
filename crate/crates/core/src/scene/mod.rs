//! Heterogeneous batched scene storage.
//!
//! Every environment may hold different articulations and actors. Per-env
//! state lives in flat buffers padded to the batch maximum:
//!
//! * joint state `qpos`, `qvel`, `qacc`: `N × dof_max`, an env's articulations
//!   concatenated in descriptor order;
//! * link pose cache: `N × link_max`;
//! * actor state: `N × actor_max`.
//!
//! Entries past an env's own count are masked out, kept at zero (identity
//! for poses) and never read by the engine.

mod state;
mod view;

pub use state::{StateSnapshot, StateError};
pub use view::{ActorView, ArticulationView, JointView, LinkView, Masked, View};

use crate::assets::{ArticulationTemplate, AssetError, Shape};
use crate::kinematics::forward_kinematics_into;
use crate::model::ArticulationModel;
use crate::pose::{Pose, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene needs at least one environment")]
    NoEnvs,
    #[error("env {env}: unknown template `{template}`")]
    UnknownTemplate { env: usize, template: String },
    #[error("env {env}: {message}")]
    InvalidDescriptor { env: usize, message: String },
    #[error("template {name}: {source}")]
    Model { name: String, source: AssetError },
    #[error("no entity `{path}`; nearest: {}", suggestions.join(", "))]
    Lookup { path: String, suggestions: Vec<String> },
    #[error("`{path}` is a {found}, not a {wanted}")]
    WrongKind { path: String, found: &'static str, wanted: &'static str },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("env {env} out of range ({num_envs} envs)")]
    EnvOutOfRange { env: usize, num_envs: usize },
    #[error("too many entities for 16-bit segmentation ids")]
    TooManyEntities,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyKind {
    Static,
    /// Pose and velocity set externally; infinite mass in contacts.
    Kinematic,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticulationDesc {
    pub name: String,
    pub template: String,
    pub base_pose: Pose,
    pub init_qpos: Option<Vec<f64>>,
    /// Gravity does not act on this articulation's joints.
    pub gravity_compensation: bool,
    /// Links take part in contact detection.
    pub collisions: bool,
}

impl ArticulationDesc {
    pub fn new(name: impl Into<String>, template: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            template: template.into(),
            base_pose: Pose::identity(),
            init_qpos: None,
            gravity_compensation: false,
            collisions: true,
        }
    }

    pub fn at(mut self, pose: Pose) -> Self {
        self.base_pose = pose;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorDesc {
    pub name: String,
    pub shape: Shape,
    pub mass: f64,
    pub kind: BodyKind,
    pub pose: Pose,
    pub color: [f64; 4],
    pub collision: bool,
}

impl ActorDesc {
    pub fn dynamic(name: impl Into<String>, shape: Shape, mass: f64, pose: Pose) -> Self {
        Self {
            name: name.into(),
            shape,
            mass,
            kind: BodyKind::Dynamic,
            pose,
            color: [0.8, 0.3, 0.2, 1.0],
            collision: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvDescriptor {
    pub articulations: Vec<ArticulationDesc>,
    pub actors: Vec<ActorDesc>,
    /// Infinite static plane `z = 0`.
    pub ground: bool,
}

pub type TemplateLibrary = BTreeMap<String, ArticulationTemplate>;

/// One articulation instance inside one env.
#[derive(Debug, Clone)]
pub struct ArticulationSlot {
    pub name: String,
    pub model: Arc<ArticulationModel>,
    pub dof_offset: usize,
    pub link_offset: usize,
    pub base_pose: Pose,
    pub gravity_compensation: bool,
    pub collisions: bool,
}

impl ArticulationSlot {
    pub fn dofs(&self) -> std::ops::Range<usize> {
        self.dof_offset..self.dof_offset + self.model.dof()
    }

    pub fn links(&self) -> std::ops::Range<usize> {
        self.link_offset..self.link_offset + self.model.num_links()
    }
}

/// Render appearance of one entity in one env.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Appearance {
    pub color: [f32; 3],
    /// Alternate colour and cell size (m) of a world-space checker pattern.
    pub checker: Option<([f32; 3], f32)>,
}

impl Appearance {
    pub fn solid(rgba: [f64; 4]) -> Self {
        Self {
            color: [rgba[0] as f32, rgba[1] as f32, rgba[2] as f32],
            checker: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct JointRef {
    pub dof: Option<usize>,
    pub link: usize,
    pub articulation: usize,
    pub joint: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Resolved {
    Articulation(Vec<Option<usize>>),
    Link(Vec<Option<usize>>),
    Joint(Vec<Option<JointRef>>),
    Actor(Vec<Option<usize>>),
}

/// Immutable structure of a built scene.
#[derive(Debug, Clone)]
pub struct Layout {
    pub num_envs: usize,
    pub dof_max: usize,
    pub link_max: usize,
    pub actor_max: usize,
    pub descriptors: Vec<EnvDescriptor>,
    pub articulations: Vec<Vec<ArticulationSlot>>,
    pub dof_count: Vec<usize>,
    pub link_count: Vec<usize>,
    pub actor_count: Vec<usize>,
    /// `(articulation slot, link index)` of each link slot, per env.
    pub link_owner: Vec<Vec<(usize, usize)>>,
    pub entity_ids: BTreeMap<String, u16>,
    /// Segmentation id per link slot (`N × link_max`), 0 when masked.
    pub link_seg: Vec<u16>,
    /// Segmentation id per actor slot (`N × actor_max`), 0 when masked.
    pub actor_seg: Vec<u16>,
    pub ground_id: u16,
    pub layout_hash: String,
    pub(crate) resolved: HashMap<String, Resolved>,
}

impl Layout {
    pub fn actor(&self, env: usize, slot: usize) -> &ActorDesc {
        &self.descriptors[env].actors[slot]
    }

    pub fn has_ground(&self, env: usize) -> bool {
        self.descriptors[env].ground
    }
}

/// Mutable per-env state.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffers {
    pub qpos: Vec<f64>,
    pub qvel: Vec<f64>,
    pub qacc: Vec<f64>,
    pub link_pose: Vec<Pose>,
    pub actor_pose: Vec<Pose>,
    pub actor_linvel: Vec<Vec3>,
    pub actor_angvel: Vec<Vec3>,
    /// External force/torque applied during the next step, then cleared.
    pub actor_force: Vec<Vec3>,
    pub actor_torque: Vec<Vec3>,
    pub diverged: Vec<bool>,
}

/// Mutable view of one env's rows of every buffer.
pub struct EnvRows<'a> {
    pub env: usize,
    pub qpos: &'a mut [f64],
    pub qvel: &'a mut [f64],
    pub qacc: &'a mut [f64],
    pub link_pose: &'a mut [Pose],
    pub actor_pose: &'a mut [Pose],
    pub actor_linvel: &'a mut [Vec3],
    pub actor_angvel: &'a mut [Vec3],
    pub actor_force: &'a mut [Vec3],
    pub actor_torque: &'a mut [Vec3],
    pub diverged: &'a mut bool,
}

#[derive(Debug, Clone)]
pub struct SceneBatch {
    layout: Layout,
    pub(crate) buffers: Buffers,
    link_appearance: Vec<Appearance>,
    actor_appearance: Vec<Appearance>,
    rngs: Vec<ChaCha8Rng>,
    master_seed: u64,
}

fn env_rng(master_seed: u64, env: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(env as u64);
    rng
}

fn layout_hash(descriptors: &[EnvDescriptor], templates: &BTreeMap<String, Arc<ArticulationModel>>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(descriptors).expect("descriptors serialize"));
    for (name, m) in templates {
        h.update(name.as_bytes());
        h.update(serde_json::to_vec(&m.template).expect("templates serialize"));
    }
    hex::encode(&h.finalize()[..8])
}

impl SceneBatch {
    /// Builds padded buffers for the given per-env descriptors.
    pub fn build(library: &TemplateLibrary, descriptors: Vec<EnvDescriptor>, seed: u64) -> Result<Self, SceneError> {
        let n = descriptors.len();
        if n == 0 {
            return Err(SceneError::NoEnvs);
        }
        let mut models: BTreeMap<String, Arc<ArticulationModel>> = BTreeMap::new();
        let mut articulations = Vec::with_capacity(n);
        for (env, d) in descriptors.iter().enumerate() {
            let mut slots = Vec::new();
            let (mut dof, mut link) = (0, 0);
            let mut names = std::collections::HashSet::new();
            for a in &d.articulations {
                if !names.insert(a.name.as_str()) {
                    return Err(SceneError::InvalidDescriptor { env, message: format!("duplicate name `{}`", a.name) });
                }
                let model = match models.get(&a.template) {
                    Some(m) => m.clone(),
                    None => {
                        let t = library.get(&a.template).ok_or_else(|| SceneError::UnknownTemplate {
                            env,
                            template: a.template.clone(),
                        })?;
                        let m = Arc::new(ArticulationModel::new(t.clone()).map_err(|source| SceneError::Model {
                            name: a.template.clone(),
                            source,
                        })?);
                        models.insert(a.template.clone(), m.clone());
                        m
                    }
                };
                if let Some(q) = &a.init_qpos {
                    if q.len() != model.dof() {
                        return Err(SceneError::InvalidDescriptor {
                            env,
                            message: format!("{}: init_qpos has {} values for {} DOFs", a.name, q.len(), model.dof()),
                        });
                    }
                }
                slots.push(ArticulationSlot {
                    name: a.name.clone(),
                    dof_offset: dof,
                    link_offset: link,
                    base_pose: a.base_pose,
                    gravity_compensation: a.gravity_compensation,
                    collisions: a.collisions,
                    model: model.clone(),
                });
                dof += model.dof();
                link += model.num_links();
            }
            for a in &d.actors {
                if !names.insert(a.name.as_str()) {
                    return Err(SceneError::InvalidDescriptor { env, message: format!("duplicate name `{}`", a.name) });
                }
                if !a.shape.is_valid() || (a.kind == BodyKind::Dynamic && !(a.mass > 0.0)) {
                    return Err(SceneError::InvalidDescriptor { env, message: format!("actor `{}` has invalid shape or mass", a.name) });
                }
            }
            articulations.push(slots);
        }
        let dof_count: Vec<usize> = articulations.iter().map(|s| s.iter().map(|a| a.model.dof()).sum()).collect();
        let link_count: Vec<usize> = articulations.iter().map(|s| s.iter().map(|a| a.model.num_links()).sum()).collect();
        let actor_count: Vec<usize> = descriptors.iter().map(|d| d.actors.len()).collect();
        let dof_max = dof_count.iter().copied().max().unwrap_or(0);
        let link_max = link_count.iter().copied().max().unwrap_or(0);
        let actor_max = actor_count.iter().copied().max().unwrap_or(0);

        // entity registry: same path, same id in every env
        let mut entity_ids = BTreeMap::new();
        let mut next_id: u32 = 1;
        let mut register = |name: String, ids: &mut BTreeMap<String, u16>| -> Result<u16, SceneError> {
            if let Some(id) = ids.get(&name) {
                return Ok(*id);
            }
            if next_id > u16::MAX as u32 {
                return Err(SceneError::TooManyEntities);
            }
            let id = next_id as u16;
            next_id += 1;
            ids.insert(name, id);
            Ok(id)
        };
        let ground_id = if descriptors.iter().any(|d| d.ground) {
            register("ground".into(), &mut entity_ids)?
        } else {
            0
        };
        let mut link_seg = vec![0u16; n * link_max];
        let mut actor_seg = vec![0u16; n * actor_max];
        let mut link_owner = Vec::with_capacity(n);
        for env in 0..n {
            let mut owners = Vec::new();
            for (ai, slot) in articulations[env].iter().enumerate() {
                for (li, l) in slot.model.template.links.iter().enumerate() {
                    link_seg[env * link_max + slot.link_offset + li] =
                        register(format!("{}/{}", slot.name, l.name), &mut entity_ids)?;
                    owners.push((ai, li));
                }
            }
            link_owner.push(owners);
            for (k, a) in descriptors[env].actors.iter().enumerate() {
                actor_seg[env * actor_max + k] = register(a.name.clone(), &mut entity_ids)?;
            }
        }

        let resolved = resolve_names(&descriptors, &articulations);
        let layout = Layout {
            num_envs: n,
            dof_max,
            link_max,
            actor_max,
            layout_hash: layout_hash(&descriptors, &models),
            descriptors,
            articulations,
            dof_count,
            link_count,
            actor_count,
            link_owner,
            entity_ids,
            link_seg,
            actor_seg,
            ground_id,
            resolved,
        };

        let mut link_appearance = vec![Appearance::solid([0.0; 4]); n * link_max];
        let mut actor_appearance = vec![Appearance::solid([0.0; 4]); n * actor_max];
        for env in 0..n {
            for slot in &layout.articulations[env] {
                for (li, l) in slot.model.template.links.iter().enumerate() {
                    link_appearance[env * link_max + slot.link_offset + li] = Appearance::solid(l.visual_color);
                }
            }
            for (k, a) in layout.descriptors[env].actors.iter().enumerate() {
                actor_appearance[env * actor_max + k] = Appearance::solid(a.color);
            }
        }

        let buffers = Buffers {
            qpos: vec![0.0; n * dof_max],
            qvel: vec![0.0; n * dof_max],
            qacc: vec![0.0; n * dof_max],
            link_pose: vec![Pose::identity(); n * link_max],
            actor_pose: vec![Pose::identity(); n * actor_max],
            actor_linvel: vec![Vec3::zeros(); n * actor_max],
            actor_angvel: vec![Vec3::zeros(); n * actor_max],
            actor_force: vec![Vec3::zeros(); n * actor_max],
            actor_torque: vec![Vec3::zeros(); n * actor_max],
            diverged: vec![false; n],
        };
        let mut scene = SceneBatch {
            rngs: (0..n).map(|i| env_rng(seed, i)).collect(),
            master_seed: seed,
            layout,
            buffers,
            link_appearance,
            actor_appearance,
        };
        for env in 0..n {
            scene.apply_initial_state(env);
        }
        Ok(scene)
    }

    /// Restores an env to the poses and joint positions in its descriptor,
    /// with zero velocities.
    pub fn apply_initial_state(&mut self, env: usize) {
        let (dm, am) = (self.layout.dof_max, self.layout.actor_max);
        for slot in &self.layout.articulations[env] {
            let row = &mut self.buffers.qpos[env * dm..];
            let init = self.layout.descriptors[env]
                .articulations
                .iter()
                .find(|a| a.name == slot.name)
                .and_then(|a| a.init_qpos.clone());
            for (k, d) in slot.dofs().enumerate() {
                row[d] = init.as_ref().map_or(0.0, |q| q[k]);
            }
        }
        let nd = self.layout.dof_count[env];
        self.buffers.qvel[env * dm..env * dm + nd].fill(0.0);
        self.buffers.qacc[env * dm..env * dm + nd].fill(0.0);
        for (k, a) in self.layout.descriptors[env].actors.iter().enumerate() {
            self.buffers.actor_pose[env * am + k] = a.pose;
            self.buffers.actor_linvel[env * am + k] = Vec3::zeros();
            self.buffers.actor_angvel[env * am + k] = Vec3::zeros();
            self.buffers.actor_force[env * am + k] = Vec3::zeros();
            self.buffers.actor_torque[env * am + k] = Vec3::zeros();
        }
        self.buffers.diverged[env] = false;
        self.refresh_link_poses(env);
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_envs(&self) -> usize {
        self.layout.num_envs
    }

    pub fn dof_max(&self) -> usize {
        self.layout.dof_max
    }

    pub fn layout_hash(&self) -> &str {
        &self.layout.layout_hash
    }

    pub fn buffers(&self) -> &Buffers {
        &self.buffers
    }

    /// `N × dof_max` validity mask, row-major.
    pub fn dof_mask(&self) -> Vec<bool> {
        mask_rows(&self.layout.dof_count, self.layout.dof_max)
    }

    pub fn actor_mask(&self) -> Vec<bool> {
        mask_rows(&self.layout.actor_count, self.layout.actor_max)
    }

    pub fn link_mask(&self) -> Vec<bool> {
        mask_rows(&self.layout.link_count, self.layout.link_max)
    }

    fn check_env(&self, env: usize) -> Result<(), SceneError> {
        if env >= self.num_envs() {
            return Err(SceneError::EnvOutOfRange { env, num_envs: self.num_envs() });
        }
        Ok(())
    }

    /// Valid joint positions of one env (length = env DOF).
    pub fn env_qpos(&self, env: usize) -> &[f64] {
        let dm = self.layout.dof_max;
        &self.buffers.qpos[env * dm..env * dm + self.layout.dof_count[env]]
    }

    pub fn env_qvel(&self, env: usize) -> &[f64] {
        let dm = self.layout.dof_max;
        &self.buffers.qvel[env * dm..env * dm + self.layout.dof_count[env]]
    }

    pub fn env_actor_poses(&self, env: usize) -> &[Pose] {
        let am = self.layout.actor_max;
        &self.buffers.actor_pose[env * am..env * am + self.layout.actor_count[env]]
    }

    pub fn env_actor_linvel(&self, env: usize) -> &[Vec3] {
        let am = self.layout.actor_max;
        &self.buffers.actor_linvel[env * am..env * am + self.layout.actor_count[env]]
    }

    pub fn env_actor_angvel(&self, env: usize) -> &[Vec3] {
        let am = self.layout.actor_max;
        &self.buffers.actor_angvel[env * am..env * am + self.layout.actor_count[env]]
    }

    pub fn env_link_poses(&self, env: usize) -> &[Pose] {
        let lm = self.layout.link_max;
        &self.buffers.link_pose[env * lm..env * lm + self.layout.link_count[env]]
    }

    /// Writes valid joint positions of one env and refreshes its link poses.
    pub fn set_env_qpos(&mut self, env: usize, q: &[f64]) -> Result<(), SceneError> {
        self.check_env(env)?;
        let nd = self.layout.dof_count[env];
        if q.len() != nd {
            return Err(SceneError::Dimension { expected: nd, got: q.len() });
        }
        let dm = self.layout.dof_max;
        self.buffers.qpos[env * dm..env * dm + nd].copy_from_slice(q);
        self.refresh_link_poses(env);
        Ok(())
    }

    pub fn set_env_qvel(&mut self, env: usize, v: &[f64]) -> Result<(), SceneError> {
        self.check_env(env)?;
        let nd = self.layout.dof_count[env];
        if v.len() != nd {
            return Err(SceneError::Dimension { expected: nd, got: v.len() });
        }
        let dm = self.layout.dof_max;
        self.buffers.qvel[env * dm..env * dm + nd].copy_from_slice(v);
        Ok(())
    }

    pub fn set_actor_pose(&mut self, env: usize, slot: usize, pose: Pose) -> Result<(), SceneError> {
        self.check_env(env)?;
        if slot >= self.layout.actor_count[env] {
            return Err(SceneError::Dimension { expected: self.layout.actor_count[env], got: slot });
        }
        self.buffers.actor_pose[env * self.layout.actor_max + slot] = pose;
        Ok(())
    }

    pub fn set_actor_velocity(&mut self, env: usize, slot: usize, linear: Vec3, angular: Vec3) -> Result<(), SceneError> {
        self.check_env(env)?;
        if slot >= self.layout.actor_count[env] {
            return Err(SceneError::Dimension { expected: self.layout.actor_count[env], got: slot });
        }
        let i = env * self.layout.actor_max + slot;
        self.buffers.actor_linvel[i] = linear;
        self.buffers.actor_angvel[i] = angular;
        Ok(())
    }

    /// Adds a world-frame force through the actor's centre for the next step.
    pub fn apply_actor_force(&mut self, env: usize, slot: usize, force: Vec3, torque: Vec3) -> Result<(), SceneError> {
        self.check_env(env)?;
        if slot >= self.layout.actor_count[env] {
            return Err(SceneError::Dimension { expected: self.layout.actor_count[env], got: slot });
        }
        let i = env * self.layout.actor_max + slot;
        self.buffers.actor_force[i] += force;
        self.buffers.actor_torque[i] += torque;
        Ok(())
    }

    /// Recomputes the link pose cache of one env from its joint positions.
    pub fn refresh_link_poses(&mut self, env: usize) {
        let (dm, lm) = (self.layout.dof_max, self.layout.link_max);
        for slot in &self.layout.articulations[env] {
            let q = &self.buffers.qpos[env * dm + slot.dof_offset..env * dm + slot.dof_offset + slot.model.dof()];
            let out = &mut self.buffers.link_pose
                [env * lm + slot.link_offset..env * lm + slot.link_offset + slot.model.num_links()];
            forward_kinematics_into(&slot.model, &slot.base_pose, q, out);
        }
    }

    pub fn refresh_all_link_poses(&mut self) {
        for env in 0..self.num_envs() {
            self.refresh_link_poses(env);
        }
    }

    /// Per-env RNG stream derived from `(master_seed, env)`.
    pub fn rng(&mut self, env: usize) -> &mut ChaCha8Rng {
        &mut self.rngs[env]
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Restarts the RNG streams of the selected envs from a new master seed.
    /// Envs outside the mask keep their streams.
    pub fn reseed(&mut self, seed: u64, env_mask: Option<&[bool]>) {
        self.master_seed = seed;
        for env in 0..self.num_envs() {
            if env_mask.is_none_or(|m| m[env]) {
                self.rngs[env] = env_rng(seed, env);
            }
        }
    }

    pub fn diverged(&self) -> &[bool] {
        &self.buffers.diverged
    }

    pub fn link_appearance(&self, env: usize, link_slot: usize) -> &Appearance {
        &self.link_appearance[env * self.layout.link_max + link_slot]
    }

    pub fn actor_appearance(&self, env: usize, slot: usize) -> &Appearance {
        &self.actor_appearance[env * self.layout.actor_max + slot]
    }

    /// Per-env appearance override for an entity (link path or actor name).
    pub fn set_appearance(&mut self, env: usize, path: &str, appearance: Appearance) -> Result<(), SceneError> {
        self.check_env(env)?;
        match self.view(path)? {
            View::Link(v) => {
                if let Some(s) = v.slots()[env] {
                    self.link_appearance[env * self.layout.link_max + s] = appearance;
                }
            }
            View::Actor(v) => {
                if let Some(s) = v.slots()[env] {
                    self.actor_appearance[env * self.layout.actor_max + s] = appearance;
                }
            }
            View::Articulation(v) => {
                if let Some(a) = v.slots()[env] {
                    let range = self.layout.articulations[env][a].links();
                    for s in range {
                        self.link_appearance[env * self.layout.link_max + s] = appearance;
                    }
                }
            }
            View::Joint(_) => {
                return Err(SceneError::WrongKind { path: path.into(), found: "joint", wanted: "renderable entity" })
            }
        }
        Ok(())
    }

    /// Splits the buffers into disjoint per-env rows for parallel stepping.
    pub fn split_rows(&mut self) -> (&Layout, Vec<EnvRows<'_>>) {
        let l = &self.layout;
        let b = &mut self.buffers;
        let (dm, lm, am) = (l.dof_max.max(1), l.link_max.max(1), l.actor_max.max(1));
        let mut rows = Vec::with_capacity(l.num_envs);
        let mut qpos = b.qpos.chunks_mut(dm);
        let mut qvel = b.qvel.chunks_mut(dm);
        let mut qacc = b.qacc.chunks_mut(dm);
        let mut link = b.link_pose.chunks_mut(lm);
        let mut apose = b.actor_pose.chunks_mut(am);
        let mut alin = b.actor_linvel.chunks_mut(am);
        let mut aang = b.actor_angvel.chunks_mut(am);
        let mut afor = b.actor_force.chunks_mut(am);
        let mut ator = b.actor_torque.chunks_mut(am);
        for (env, diverged) in b.diverged.iter_mut().enumerate() {
            rows.push(EnvRows {
                env,
                qpos: qpos.next().unwrap_or_default(),
                qvel: qvel.next().unwrap_or_default(),
                qacc: qacc.next().unwrap_or_default(),
                link_pose: link.next().unwrap_or_default(),
                actor_pose: apose.next().unwrap_or_default(),
                actor_linvel: alin.next().unwrap_or_default(),
                actor_angvel: aang.next().unwrap_or_default(),
                actor_force: afor.next().unwrap_or_default(),
                actor_torque: ator.next().unwrap_or_default(),
                diverged,
            });
        }
        (l, rows)
    }

    /// Descriptor of one env, for building a stand-alone copy of it.
    pub fn env_descriptor(&self, env: usize) -> &EnvDescriptor {
        &self.layout.descriptors[env]
    }

    /// Templates referenced by this scene.
    pub fn template_library(&self) -> TemplateLibrary {
        let mut lib = TemplateLibrary::new();
        for slots in &self.layout.articulations {
            for s in slots {
                let key = self.layout.descriptors.iter().flat_map(|d| &d.articulations).find(|a| a.name == s.name).map(|a| a.template.clone());
                if let Some(k) = key {
                    lib.entry(k).or_insert_with(|| s.model.template.clone());
                }
            }
        }
        lib
    }
}

fn mask_rows(counts: &[usize], width: usize) -> Vec<bool> {
    counts.iter().flat_map(|c| (0..width).map(move |j| j < *c)).collect()
}

fn resolve_names(descriptors: &[EnvDescriptor], articulations: &[Vec<ArticulationSlot>]) -> HashMap<String, Resolved> {
    let n = descriptors.len();
    let mut out: HashMap<String, Resolved> = HashMap::new();
    for env in 0..n {
        for (ai, slot) in articulations[env].iter().enumerate() {
            if let Resolved::Articulation(v) = out.entry(slot.name.clone()).or_insert_with(|| Resolved::Articulation(vec![None; n])) { v[env] = Some(ai) }
            let t = &slot.model.template;
            for (li, l) in t.links.iter().enumerate() {
                if let Resolved::Link(v) = out
                    .entry(format!("{}/{}", slot.name, l.name))
                    .or_insert_with(|| Resolved::Link(vec![None; n]))
                {
                    v[env] = Some(slot.link_offset + li);
                }
            }
            for (ji, j) in t.joints.iter().enumerate() {
                let r = JointRef {
                    dof: slot.model.dof_of_joint[ji].map(|d| slot.dof_offset + d),
                    link: slot.link_offset + j.child_link,
                    articulation: ai,
                    joint: ji,
                };
                if let Resolved::Joint(v) = out
                    .entry(format!("{}/{}", slot.name, j.name))
                    .or_insert_with(|| Resolved::Joint(vec![None; n]))
                {
                    v[env] = Some(r);
                }
            }
        }
        for (k, a) in descriptors[env].actors.iter().enumerate() {
            if let Resolved::Actor(v) = out.entry(a.name.clone()).or_insert_with(|| Resolved::Actor(vec![None; n])) {
                v[env] = Some(k);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
