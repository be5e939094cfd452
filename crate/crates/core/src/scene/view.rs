//! Named, batched handles into a [`SceneBatch`].
//!
//! A view is resolved once from an entity path (`"arm"`, `"arm/link2"`,
//! `"arm/elbow"`, `"cube"`) and caches the buffer slot of that entity in every
//! env. Envs that lack the entity are masked out.

use super::{JointRef, Resolved, SceneBatch, SceneError};
use crate::pose::{Pose, Vec3};

/// Per-env values with a validity mask. Masked entries hold a default value.
#[derive(Debug, Clone, PartialEq)]
pub struct Masked<T> {
    pub values: Vec<T>,
    pub mask: Vec<bool>,
}

impl<T> Masked<T> {
    /// Values of the envs where the entity exists.
    pub fn valid(&self) -> impl Iterator<Item = (usize, &T)> {
        self.values.iter().enumerate().filter(|(i, _)| self.mask[*i])
    }
}

#[derive(Debug, Clone)]
pub enum View {
    Articulation(ArticulationView),
    Link(LinkView),
    Joint(JointView),
    Actor(ActorView),
}

impl View {
    fn kind(&self) -> &'static str {
        match self {
            View::Articulation(_) => "articulation",
            View::Link(_) => "link",
            View::Joint(_) => "joint",
            View::Actor(_) => "actor",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArticulationView {
    pub path: String,
    slots: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct LinkView {
    pub path: String,
    slots: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct JointView {
    pub path: String,
    refs: Vec<Option<JointRef>>,
}

#[derive(Debug, Clone)]
pub struct ActorView {
    pub path: String,
    slots: Vec<Option<usize>>,
}

fn mask_of<T>(v: &[Option<T>]) -> Vec<bool> {
    v.iter().map(Option::is_some).collect()
}

fn check_len(expected: usize, got: usize) -> Result<(), SceneError> {
    if expected != got {
        return Err(SceneError::Dimension { expected, got });
    }
    Ok(())
}

impl ArticulationView {
    /// Articulation slot index in each env.
    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    pub fn mask(&self) -> Vec<bool> {
        mask_of(&self.slots)
    }

    /// Joint positions of this articulation, one row per env.
    pub fn qpos(&self, scene: &SceneBatch) -> Masked<Vec<f64>> {
        self.rows(scene, &scene.buffers.qpos)
    }

    pub fn qvel(&self, scene: &SceneBatch) -> Masked<Vec<f64>> {
        self.rows(scene, &scene.buffers.qvel)
    }

    fn rows(&self, scene: &SceneBatch, buf: &[f64]) -> Masked<Vec<f64>> {
        let l = scene.layout();
        let values = self
            .slots
            .iter()
            .enumerate()
            .map(|(env, s)| match s {
                Some(a) => {
                    let r = l.articulations[env][*a].dofs();
                    buf[env * l.dof_max + r.start..env * l.dof_max + r.end].to_vec()
                }
                None => Vec::new(),
            })
            .collect();
        Masked { values, mask: self.mask() }
    }

    /// Writes joint positions in the envs where `env_mask` is set and the
    /// articulation exists. Link poses are refreshed.
    pub fn set_qpos(&self, scene: &mut SceneBatch, rows: &[Vec<f64>], env_mask: Option<&[bool]>) -> Result<(), SceneError> {
        check_len(scene.num_envs(), rows.len())?;
        for (env, s) in self.slots.iter().enumerate() {
            let Some(a) = s else { continue };
            if !env_mask.is_none_or(|m| m[env]) {
                continue;
            }
            let r = scene.layout.articulations[env][*a].dofs();
            check_len(r.len(), rows[env].len())?;
            let dm = scene.layout.dof_max;
            scene.buffers.qpos[env * dm + r.start..env * dm + r.end].copy_from_slice(&rows[env]);
            scene.refresh_link_poses(env);
        }
        Ok(())
    }

    pub fn set_qvel(&self, scene: &mut SceneBatch, rows: &[Vec<f64>], env_mask: Option<&[bool]>) -> Result<(), SceneError> {
        check_len(scene.num_envs(), rows.len())?;
        for (env, s) in self.slots.iter().enumerate() {
            let Some(a) = s else { continue };
            if !env_mask.is_none_or(|m| m[env]) {
                continue;
            }
            let r = scene.layout.articulations[env][*a].dofs();
            check_len(r.len(), rows[env].len())?;
            let dm = scene.layout.dof_max;
            scene.buffers.qvel[env * dm + r.start..env * dm + r.end].copy_from_slice(&rows[env]);
        }
        Ok(())
    }

    /// World pose of the articulation root.
    pub fn root_pose(&self, scene: &SceneBatch) -> Masked<Pose> {
        let l = scene.layout();
        let values = self
            .slots
            .iter()
            .enumerate()
            .map(|(env, s)| s.map_or(Pose::identity(), |a| l.articulations[env][a].base_pose))
            .collect();
        Masked { values, mask: self.mask() }
    }
}

impl LinkView {
    /// Link slot index in each env.
    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    pub fn mask(&self) -> Vec<bool> {
        mask_of(&self.slots)
    }

    pub fn pose(&self, scene: &SceneBatch) -> Masked<Pose> {
        let lm = scene.layout.link_max;
        let values = self
            .slots
            .iter()
            .enumerate()
            .map(|(env, s)| s.map_or(Pose::identity(), |k| scene.buffers.link_pose[env * lm + k]))
            .collect();
        Masked { values, mask: self.mask() }
    }
}

impl JointView {
    pub fn mask(&self) -> Vec<bool> {
        mask_of(&self.refs)
    }

    /// Padded DOF column of this joint in each env; `None` where the joint is
    /// absent or fixed.
    pub fn dof_columns(&self) -> Vec<Option<usize>> {
        self.refs.iter().map(|r| r.and_then(|r| r.dof)).collect()
    }

    fn read(&self, scene: &SceneBatch, buf: &[f64]) -> Masked<f64> {
        let dm = scene.layout.dof_max;
        let values = self
            .refs
            .iter()
            .enumerate()
            .map(|(env, r)| r.and_then(|r| r.dof).map_or(0.0, |d| buf[env * dm + d]))
            .collect();
        Masked { values, mask: self.mask() }
    }

    pub fn qpos(&self, scene: &SceneBatch) -> Masked<f64> {
        self.read(scene, &scene.buffers.qpos)
    }

    pub fn qvel(&self, scene: &SceneBatch) -> Masked<f64> {
        self.read(scene, &scene.buffers.qvel)
    }

    /// `(lower, upper)` limits in each env.
    pub fn limits(&self, scene: &SceneBatch) -> Masked<(f64, f64)> {
        let values = self
            .refs
            .iter()
            .enumerate()
            .map(|(env, r)| match r {
                Some(r) => {
                    let j = &scene.layout.articulations[env][r.articulation].model.template.joints[r.joint];
                    (j.lower, j.upper)
                }
                None => (0.0, 0.0),
            })
            .collect();
        Masked { values, mask: self.mask() }
    }

    pub fn set_qpos(&self, scene: &mut SceneBatch, values: &[f64], env_mask: Option<&[bool]>) -> Result<(), SceneError> {
        check_len(scene.num_envs(), values.len())?;
        let dm = scene.layout.dof_max;
        for (env, r) in self.refs.iter().enumerate() {
            if let Some(d) = r.and_then(|r| r.dof) {
                if env_mask.is_none_or(|m| m[env]) {
                    scene.buffers.qpos[env * dm + d] = values[env];
                    scene.refresh_link_poses(env);
                }
            }
        }
        Ok(())
    }

    pub fn set_qvel(&self, scene: &mut SceneBatch, values: &[f64], env_mask: Option<&[bool]>) -> Result<(), SceneError> {
        check_len(scene.num_envs(), values.len())?;
        let dm = scene.layout.dof_max;
        for (env, r) in self.refs.iter().enumerate() {
            if let Some(d) = r.and_then(|r| r.dof) {
                if env_mask.is_none_or(|m| m[env]) {
                    scene.buffers.qvel[env * dm + d] = values[env];
                }
            }
        }
        Ok(())
    }

    /// World pose of the joint's child link.
    pub fn child_pose(&self, scene: &SceneBatch) -> Masked<Pose> {
        let lm = scene.layout.link_max;
        let values = self
            .refs
            .iter()
            .enumerate()
            .map(|(env, r)| r.map_or(Pose::identity(), |r| scene.buffers.link_pose[env * lm + r.link]))
            .collect();
        Masked { values, mask: self.mask() }
    }
}

impl ActorView {
    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    pub fn mask(&self) -> Vec<bool> {
        mask_of(&self.slots)
    }

    fn read<T: Copy>(&self, scene: &SceneBatch, buf: &[T], default: T) -> Masked<T> {
        let am = scene.layout.actor_max;
        let values = self
            .slots
            .iter()
            .enumerate()
            .map(|(env, s)| s.map_or(default, |k| buf[env * am + k]))
            .collect();
        Masked { values, mask: self.mask() }
    }

    pub fn pose(&self, scene: &SceneBatch) -> Masked<Pose> {
        self.read(scene, &scene.buffers.actor_pose, Pose::identity())
    }

    pub fn linvel(&self, scene: &SceneBatch) -> Masked<Vec3> {
        self.read(scene, &scene.buffers.actor_linvel, Vec3::zeros())
    }

    pub fn angvel(&self, scene: &SceneBatch) -> Masked<Vec3> {
        self.read(scene, &scene.buffers.actor_angvel, Vec3::zeros())
    }

    pub fn set_pose(&self, scene: &mut SceneBatch, poses: &[Pose], env_mask: Option<&[bool]>) -> Result<(), SceneError> {
        check_len(scene.num_envs(), poses.len())?;
        let am = scene.layout.actor_max;
        for (env, s) in self.slots.iter().enumerate() {
            if let Some(k) = s {
                if env_mask.is_none_or(|m| m[env]) {
                    scene.buffers.actor_pose[env * am + k] = poses[env];
                }
            }
        }
        Ok(())
    }

    pub fn set_velocity(
        &self,
        scene: &mut SceneBatch,
        linear: &[Vec3],
        angular: &[Vec3],
        env_mask: Option<&[bool]>,
    ) -> Result<(), SceneError> {
        check_len(scene.num_envs(), linear.len())?;
        check_len(scene.num_envs(), angular.len())?;
        let am = scene.layout.actor_max;
        for (env, s) in self.slots.iter().enumerate() {
            if let Some(k) = s {
                if env_mask.is_none_or(|m| m[env]) {
                    scene.buffers.actor_linvel[env * am + k] = linear[env];
                    scene.buffers.actor_angvel[env * am + k] = angular[env];
                }
            }
        }
        Ok(())
    }
}

impl SceneBatch {
    /// Resolves an entity path. Unknown paths report the closest known names.
    pub fn view(&self, path: &str) -> Result<View, SceneError> {
        match self.layout.resolved.get(path) {
            Some(Resolved::Articulation(s)) => Ok(View::Articulation(ArticulationView { path: path.into(), slots: s.clone() })),
            Some(Resolved::Link(s)) => Ok(View::Link(LinkView { path: path.into(), slots: s.clone() })),
            Some(Resolved::Joint(r)) => Ok(View::Joint(JointView { path: path.into(), refs: r.clone() })),
            Some(Resolved::Actor(s)) => Ok(View::Actor(ActorView { path: path.into(), slots: s.clone() })),
            None => Err(SceneError::Lookup { path: path.into(), suggestions: self.nearest_names(path, 3) }),
        }
    }

    pub fn nearest_names(&self, path: &str, k: usize) -> Vec<String> {
        let mut names: Vec<(usize, &String)> =
            self.layout.resolved.keys().map(|n| (strsim::levenshtein(path, n), n)).collect();
        names.sort();
        names.into_iter().take(k).map(|(_, n)| n.clone()).collect()
    }

    /// All entity paths known to this scene, sorted.
    pub fn entity_paths(&self) -> Vec<String> {
        let mut v: Vec<String> = self.layout.resolved.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn articulation(&self, path: &str) -> Result<ArticulationView, SceneError> {
        match self.view(path)? {
            View::Articulation(v) => Ok(v),
            other => Err(SceneError::WrongKind { path: path.into(), found: other.kind(), wanted: "articulation" }),
        }
    }

    pub fn link(&self, path: &str) -> Result<LinkView, SceneError> {
        match self.view(path)? {
            View::Link(v) => Ok(v),
            other => Err(SceneError::WrongKind { path: path.into(), found: other.kind(), wanted: "link" }),
        }
    }

    pub fn joint(&self, path: &str) -> Result<JointView, SceneError> {
        match self.view(path)? {
            View::Joint(v) => Ok(v),
            other => Err(SceneError::WrongKind { path: path.into(), found: other.kind(), wanted: "joint" }),
        }
    }

    pub fn actor(&self, path: &str) -> Result<ActorView, SceneError> {
        match self.view(path)? {
            View::Actor(v) => Ok(v),
            other => Err(SceneError::WrongKind { path: path.into(), found: other.kind(), wanted: "actor" }),
        }
    }
}
