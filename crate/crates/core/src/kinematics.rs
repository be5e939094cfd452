//! Forward kinematics, geometric Jacobians and damped-least-squares IK.
//!
//! Twists and Jacobian rows are ordered `(linear xyz, angular xyz)` and
//! expressed in the world frame. The orientation part of a pose error is the
//! axis-angle vector of `R_target * R_currentᵀ`.

use crate::model::ArticulationModel;
use crate::pose::{Pose, PoseBatch, PoseError, Vec3};
use crate::scene::{SceneBatch, SceneError};
use nalgebra::{DVector, Matrix6, Matrix6xX, Vector6};
use thiserror::Error;

pub const DEFAULT_IK_LAMBDA: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("link index {index} out of range ({num_links} links)")]
    LinkOutOfRange { index: usize, num_links: usize },
    #[error("twist contains non-finite values")]
    NonFiniteTwist,
    #[error("damping must be positive, got {0}")]
    BadDamping(f64),
    #[error("expected {expected} joint values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("articulation `{articulation}` has no link `{link}` in env {env}")]
    UnknownLink { articulation: String, link: String, env: usize },
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Per-env Jacobians laid out `N × 6 × D_max` over the scene's padded DOF
/// columns. Columns outside the articulation (or padding) are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianBatch {
    pub num_envs: usize,
    pub dof_max: usize,
    pub data: Vec<f64>,
    /// `N × D_max`, true where the column belongs to the articulation.
    pub mask: Vec<bool>,
}

impl JacobianBatch {
    pub fn get(&self, env: usize, row: usize, col: usize) -> f64 {
        self.data[(env * 6 + row) * self.dof_max + col]
    }

    pub fn env_matrix(&self, env: usize) -> Matrix6xX<f64> {
        Matrix6xX::from_fn(self.dof_max, |r, c| self.get(env, r, c))
    }
}

/// Jacobian of `link` on articulation `articulation` in every env that holds
/// it, read from the scene's link pose cache.
pub fn scene_jacobian(scene: &SceneBatch, articulation: &str, link: &str) -> Result<JacobianBatch, KinematicsError> {
    let view = scene.articulation(articulation)?;
    let layout = scene.layout();
    let (n, dmax) = (scene.num_envs(), scene.dof_max());
    let mut out = JacobianBatch { num_envs: n, dof_max: dmax, data: vec![0.0; n * 6 * dmax], mask: vec![false; n * dmax] };
    for (env, slot) in view.slots().iter().enumerate() {
        let Some(a) = *slot else { continue };
        let slot = &layout.articulations[env][a];
        let li = slot.model.template.link_index(link).ok_or_else(|| KinematicsError::UnknownLink {
            articulation: articulation.to_string(),
            link: link.to_string(),
            env,
        })?;
        let jac = jacobian(&slot.model, &scene.env_link_poses(env)[slot.links()], li)?;
        for d in 0..slot.model.dof() {
            let col = slot.dof_offset + d;
            out.mask[env * dmax + col] = true;
            for r in 0..6 {
                out.data[(env * 6 + r) * dmax + col] = jac[(r, d)];
            }
        }
    }
    Ok(out)
}

/// DLS joint steps for every env, `N × D_max` with zeros outside the
/// articulation. `twists` holds one twist per env; envs without the
/// articulation get a zero row.
pub fn scene_ik_delta(
    scene: &SceneBatch,
    articulation: &str,
    link: &str,
    twists: &[Vector6<f64>],
    lambda: f64,
) -> Result<Vec<Vec<f64>>, KinematicsError> {
    if twists.len() != scene.num_envs() {
        return Err(KinematicsError::Dimension { expected: scene.num_envs(), got: twists.len() });
    }
    let jb = scene_jacobian(scene, articulation, link)?;
    (0..scene.num_envs())
        .map(|env| {
            let dq = dls_solve(&jb.env_matrix(env), &twists[env], lambda)?;
            Ok(dq.iter().zip(&jb.mask[env * jb.dof_max..(env + 1) * jb.dof_max]).map(|(v, m)| if *m { *v } else { 0.0 }).collect())
        })
        .collect()
}

/// World pose of every link, written into `out` (length = number of links).
pub fn forward_kinematics_into(model: &ArticulationModel, base: &Pose, q: &[f64], out: &mut [Pose]) {
    out[0] = *base;
    for (j, joint) in model.template.joints.iter().enumerate() {
        let qj = model.dof_of_joint[j].map_or(0.0, |d| q[d]);
        out[joint.child_link] = out[joint.parent_link].compose(&joint.transform(qj));
    }
}

pub fn forward_kinematics(model: &ArticulationModel, base: &Pose, q: &[f64]) -> Vec<Pose> {
    let mut out = vec![Pose::identity(); model.num_links()];
    forward_kinematics_into(model, base, q, &mut out);
    out
}

/// Batched FK for one template: returns one [`PoseBatch`] per link, each
/// holding that link's pose in every environment. `base` may be a singleton.
pub fn forward_kinematics_batch(
    model: &ArticulationModel,
    base: &PoseBatch,
    qpos: &[Vec<f64>],
) -> Result<Vec<PoseBatch>, KinematicsError> {
    let n = qpos.len();
    if base.len() != 1 && base.len() != n {
        return Err(PoseError::Dimension { left: base.len(), right: n }.into());
    }
    if let Some(row) = qpos.iter().find(|r| r.len() < model.dof()) {
        return Err(KinematicsError::Dimension { expected: model.dof(), got: row.len() });
    }
    let per_env: Vec<Vec<Pose>> = qpos
        .iter()
        .enumerate()
        .map(|(i, q)| forward_kinematics(model, base.get(i), q))
        .collect();
    (0..model.num_links())
        .map(|l| Ok(PoseBatch::new(per_env.iter().map(|p| p[l]).collect())?))
        .collect()
}

/// DOFs whose value lies outside the joint limits by more than `slack`.
pub fn limit_violations(model: &ArticulationModel, q: &[f64], slack: f64) -> Vec<usize> {
    (0..model.dof())
        .filter(|d| q[*d] < model.lower[*d] - slack || q[*d] > model.upper[*d] + slack)
        .collect()
}

/// World-frame axis and a point on the axis for DOF `d`, read off the link
/// pose cache.
pub fn dof_axis(model: &ArticulationModel, poses: &[Pose], d: usize) -> (Vec3, Vec3) {
    let joint = &model.template.joints[model.dof_joint[d]];
    let child = &poses[joint.child_link];
    (child.transform_vector(&joint.axis), child.translation)
}

/// Geometric Jacobian of a point rigidly attached to `link`, given in world
/// coordinates.
pub fn point_jacobian(
    model: &ArticulationModel,
    poses: &[Pose],
    link: usize,
    point: &Vec3,
) -> Result<Matrix6xX<f64>, KinematicsError> {
    if link >= model.num_links() {
        return Err(KinematicsError::LinkOutOfRange { index: link, num_links: model.num_links() });
    }
    let mut jac = Matrix6xX::zeros(model.dof());
    for &d in &model.ancestor_dofs[link] {
        let (z, o) = dof_axis(model, poses, d);
        let col = match model.template.joints[model.dof_joint[d]].joint_type {
            crate::assets::JointType::Revolute => {
                let lin = z.cross(&(point - o));
                Vector6::new(lin.x, lin.y, lin.z, z.x, z.y, z.z)
            }
            _ => Vector6::new(z.x, z.y, z.z, 0.0, 0.0, 0.0),
        };
        jac.set_column(d, &col);
    }
    Ok(jac)
}

/// Geometric Jacobian of the origin of `link`'s frame.
pub fn jacobian(model: &ArticulationModel, poses: &[Pose], link: usize) -> Result<Matrix6xX<f64>, KinematicsError> {
    let p = poses
        .get(link)
        .ok_or(KinematicsError::LinkOutOfRange { index: link, num_links: model.num_links() })?
        .translation;
    point_jacobian(model, poses, link, &p)
}

/// Twist `(translation, axis-angle)` carried by a delta pose.
pub fn twist_from_delta(delta: &Pose) -> Vector6<f64> {
    let w = delta.rotation().scaled_axis();
    let t = delta.translation;
    Vector6::new(t.x, t.y, t.z, w.x, w.y, w.z)
}

/// Twist that moves `current` onto `target`.
pub fn twist_between(current: &Pose, target: &Pose) -> Vector6<f64> {
    let t = target.translation - current.translation;
    let w = current.rotation_error_to(target);
    Vector6::new(t.x, t.y, t.z, w.x, w.y, w.z)
}

/// Damped least squares: `dq = Jᵀ (J Jᵀ + λ² I)⁻¹ twist`, with the 6×6
/// system solved by Cholesky.
pub fn dls_solve(jac: &Matrix6xX<f64>, twist: &Vector6<f64>, lambda: f64) -> Result<DVector<f64>, KinematicsError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(KinematicsError::BadDamping(lambda));
    }
    if twist.iter().any(|v| !v.is_finite()) {
        return Err(KinematicsError::NonFiniteTwist);
    }
    let a: Matrix6<f64> = jac * jac.transpose() + Matrix6::identity() * (lambda * lambda);
    let chol = a.cholesky().expect("J Jᵀ + λ²I is positive definite for λ > 0");
    Ok(jac.transpose() * chol.solve(twist))
}

/// Joint step that moves `link` along `twist` (world frame).
pub fn ik_delta(
    model: &ArticulationModel,
    poses: &[Pose],
    link: usize,
    twist: &Vector6<f64>,
    lambda: f64,
) -> Result<DVector<f64>, KinematicsError> {
    let jac = jacobian(model, poses, link)?;
    dls_solve(&jac, twist, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::load_urdf;
    use std::f64::consts::FRAC_PI_2;

    fn pendulum() -> ArticulationModel {
        ArticulationModel::new(load_urdf(include_str!("../assets/pendulum2.urdf")).unwrap().value).unwrap()
    }

    fn prismatic_x() -> ArticulationModel {
        let xml = r#"<robot name="p"><link name="a"/>
          <link name="b"><inertial><mass value="1"/><inertia ixx="1" ixy="0" ixz="0" iyy="1" iyz="0" izz="1"/></inertial></link>
          <joint name="j" type="prismatic"><parent link="a"/><child link="b"/><axis xyz="1 0 0"/></joint></robot>"#;
        ArticulationModel::new(load_urdf(xml).unwrap().value).unwrap()
    }

    #[test]
    fn zero_configuration_is_cumulative_origins() {
        let m = pendulum();
        let p = forward_kinematics(&m, &Pose::identity(), &[0.0, 0.0]);
        assert_eq!(p[1].translation, Vec3::zeros());
        assert_eq!(p[2].translation, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(p[3].translation, Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn planar_2r_end_frame() {
        let m = pendulum();
        let p = forward_kinematics(&m, &Pose::identity(), &[FRAC_PI_2, FRAC_PI_2]);
        assert!((p[3].translation - Vec3::new(-1.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn planar_2r_jacobian_at_zero() {
        let m = pendulum();
        let p = forward_kinematics(&m, &Pose::identity(), &[0.0, 0.0]);
        let j = jacobian(&m, &p, 3).unwrap();
        assert!((j.column(0).fixed_rows::<3>(0) - Vec3::new(0.0, 2.0, 0.0)).amax() < 1e-12);
        assert!((j.column(1).fixed_rows::<3>(0) - Vec3::new(0.0, 1.0, 0.0)).amax() < 1e-12);
        assert_eq!(j.column(0).fixed_rows::<3>(3), Vec3::z());
    }

    #[test]
    fn prismatic_chain_has_no_angular_rows() {
        let m = prismatic_x();
        let p = forward_kinematics(&m, &Pose::identity(), &[0.3]);
        let j = jacobian(&m, &p, 1).unwrap();
        assert!(j.fixed_rows::<3>(3).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn prismatic_dls_scalar() {
        let m = prismatic_x();
        let p = forward_kinematics(&m, &Pose::identity(), &[0.0]);
        let twist = Vector6::new(0.01, 0.0, 0.0, 0.0, 0.0, 0.0);
        let dq = ik_delta(&m, &p, 1, &twist, 1e-6).unwrap();
        assert!((dq[0] - 0.01).abs() < 1e-6);
        let zero = ik_delta(&m, &p, 1, &Vector6::zeros(), 0.05).unwrap();
        assert_eq!(zero[0], 0.0);
    }

    #[test]
    fn errors() {
        let m = prismatic_x();
        let p = forward_kinematics(&m, &Pose::identity(), &[0.0]);
        assert!(matches!(jacobian(&m, &p, 7), Err(KinematicsError::LinkOutOfRange { .. })));
        let bad = Vector6::new(f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(ik_delta(&m, &p, 1, &bad, 0.05), Err(KinematicsError::NonFiniteTwist));
        assert!(matches!(ik_delta(&m, &p, 1, &Vector6::zeros(), 0.0), Err(KinematicsError::BadDamping(_))));
    }

    #[test]
    fn batch_matches_serial() {
        let m = pendulum();
        let qs = vec![vec![0.1, 0.2], vec![-0.4, 1.0], vec![2.0, -3.0]];
        let base = PoseBatch::single(Pose::from_translation(Vec3::new(0.0, 0.0, 1.0)));
        let links = forward_kinematics_batch(&m, &base, &qs).unwrap();
        for (i, q) in qs.iter().enumerate() {
            let serial = forward_kinematics(&m, &base[0], q);
            for l in 0..m.num_links() {
                assert_eq!(links[l][i], serial[l]);
            }
        }
        assert_eq!(limit_violations(&m, &[4.0, 0.0], 0.0), vec![0]);
    }
}
