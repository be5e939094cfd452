//! Full dynamic state capture and restore.

use super::SceneBatch;
use crate::pose::{Pose, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("snapshot layout {found} does not match scene layout {expected}")]
    LayoutMismatch { expected: String, found: String },
    #[error("env mask has {got} entries for {expected} envs")]
    MaskLength { expected: usize, got: usize },
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

/// Dynamic state of every env: joint state, actor poses and velocities.
///
/// Arrays are padded exactly like the scene buffers. Actor poses are stored
/// as `[x, y, z, w, qx, qy, qz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub layout_hash: String,
    pub num_envs: usize,
    pub dof_max: usize,
    pub actor_max: usize,
    pub qpos: Vec<f64>,
    pub qvel: Vec<f64>,
    pub qacc: Vec<f64>,
    pub actor_pose: Vec<f64>,
    pub actor_linvel: Vec<f64>,
    pub actor_angvel: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ArrayMeta {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    layout_hash: String,
    num_envs: usize,
    dof_max: usize,
    actor_max: usize,
    arrays: Vec<ArrayMeta>,
}

impl StateSnapshot {
    fn arrays(&self) -> [(&'static str, &Vec<f64>, usize); 6] {
        [
            ("qpos", &self.qpos, self.dof_max),
            ("qvel", &self.qvel, self.dof_max),
            ("qacc", &self.qacc, self.dof_max),
            ("actor_pose", &self.actor_pose, self.actor_max * 7),
            ("actor_linvel", &self.actor_linvel, self.actor_max * 3),
            ("actor_angvel", &self.actor_angvel, self.actor_max * 3),
        ]
    }

    /// Row of env `env` as a single-env snapshot payload (no header checks).
    pub fn env_slice(&self, env: usize) -> StateSnapshot {
        let take = |v: &Vec<f64>, w: usize| v[env * w..(env + 1) * w].to_vec();
        StateSnapshot {
            layout_hash: self.layout_hash.clone(),
            num_envs: 1,
            dof_max: self.dof_max,
            actor_max: self.actor_max,
            qpos: take(&self.qpos, self.dof_max),
            qvel: take(&self.qvel, self.dof_max),
            qacc: take(&self.qacc, self.dof_max),
            actor_pose: take(&self.actor_pose, self.actor_max * 7),
            actor_linvel: take(&self.actor_linvel, self.actor_max * 3),
            actor_angvel: take(&self.actor_angvel, self.actor_max * 3),
        }
    }

    /// `u64` little-endian header length, JSON header, then each array as
    /// little-endian `f64` in header order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            layout_hash: self.layout_hash.clone(),
            num_envs: self.num_envs,
            dof_max: self.dof_max,
            actor_max: self.actor_max,
            arrays: self
                .arrays()
                .iter()
                .map(|(name, _, w)| ArrayMeta { name: name.to_string(), shape: vec![self.num_envs, *w], dtype: "<f8".into() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, v, _) in self.arrays() {
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StateError> {
        let bad = |m: &str| StateError::Malformed(m.to_string());
        if bytes.len() < 8 {
            return Err(bad("truncated header length"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| StateError::Malformed(e.to_string()))?;
        let mut pos = 8 + hlen;
        let mut arrays = Vec::new();
        for meta in &header.arrays {
            if meta.dtype != "<f8" {
                return Err(StateError::Malformed(format!("unsupported dtype {}", meta.dtype)));
            }
            let count: usize = meta.shape.iter().product();
            let raw = bytes.get(pos..pos + count * 8).ok_or_else(|| bad("truncated array data"))?;
            arrays.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect::<Vec<f64>>());
            pos += count * 8;
        }
        if arrays.len() != 6 {
            return Err(bad("expected 6 arrays"));
        }
        let mut it = arrays.into_iter();
        let snap = StateSnapshot {
            layout_hash: header.layout_hash,
            num_envs: header.num_envs,
            dof_max: header.dof_max,
            actor_max: header.actor_max,
            qpos: it.next().unwrap(),
            qvel: it.next().unwrap(),
            qacc: it.next().unwrap(),
            actor_pose: it.next().unwrap(),
            actor_linvel: it.next().unwrap(),
            actor_angvel: it.next().unwrap(),
        };
        for (name, v, w) in snap.arrays() {
            if v.len() != snap.num_envs * w {
                return Err(StateError::Malformed(format!("{name} has {} values", v.len())));
            }
        }
        Ok(snap)
    }
}

impl SceneBatch {
    pub fn get_state(&self) -> StateSnapshot {
        let b = &self.buffers;
        StateSnapshot {
            layout_hash: self.layout.layout_hash.clone(),
            num_envs: self.layout.num_envs,
            dof_max: self.layout.dof_max,
            actor_max: self.layout.actor_max,
            qpos: b.qpos.clone(),
            qvel: b.qvel.clone(),
            qacc: b.qacc.clone(),
            actor_pose: b
                .actor_pose
                .iter()
                .flat_map(|p| {
                    let t = p.translation;
                    let q = p.wxyz();
                    [t.x, t.y, t.z, q[0], q[1], q[2], q[3]]
                })
                .collect(),
            actor_linvel: b.actor_linvel.iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
            actor_angvel: b.actor_angvel.iter().flat_map(|v| [v.x, v.y, v.z]).collect(),
        }
    }

    /// Overwrites the state of the envs selected by `env_mask` (all when
    /// `None`). Other envs are left untouched.
    pub fn set_state(&mut self, snap: &StateSnapshot, env_mask: Option<&[bool]>) -> Result<(), StateError> {
        if snap.layout_hash != self.layout.layout_hash {
            return Err(StateError::LayoutMismatch {
                expected: self.layout.layout_hash.clone(),
                found: snap.layout_hash.clone(),
            });
        }
        let n = self.layout.num_envs;
        if let Some(m) = env_mask {
            if m.len() != n {
                return Err(StateError::MaskLength { expected: n, got: m.len() });
            }
        }
        let (dm, am) = (self.layout.dof_max, self.layout.actor_max);
        for env in 0..n {
            if !env_mask.is_none_or(|m| m[env]) {
                continue;
            }
            let b = &mut self.buffers;
            let r = env * dm..(env + 1) * dm;
            b.qpos[r.clone()].copy_from_slice(&snap.qpos[r.clone()]);
            b.qvel[r.clone()].copy_from_slice(&snap.qvel[r.clone()]);
            b.qacc[r.clone()].copy_from_slice(&snap.qacc[r]);
            for k in env * am..(env + 1) * am {
                let p = &snap.actor_pose[k * 7..k * 7 + 7];
                b.actor_pose[k] = Pose::from_raw([p[0], p[1], p[2]], [p[3], p[4], p[5], p[6]]);
                let l = &snap.actor_linvel[k * 3..k * 3 + 3];
                b.actor_linvel[k] = Vec3::new(l[0], l[1], l[2]);
                let a = &snap.actor_angvel[k * 3..k * 3 + 3];
                b.actor_angvel[k] = Vec3::new(a[0], a[1], a[2]);
                b.actor_force[k] = Vec3::zeros();
                b.actor_torque[k] = Vec3::zeros();
            }
            b.diverged[env] = false;
            self.refresh_link_poses(env);
        }
        Ok(())
    }
}
