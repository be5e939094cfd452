//! Batched rigid transforms.
//!
//! A [`Pose`] is a translation plus a unit quaternion stored scalar-first
//! `(w, x, y, z)`. Quaternions are renormalized and sign-canonicalized
//! (`w >= 0`, ties broken on `x`, then `y`, then `z`) after every operation
//! that produces one, so two equal rotations always compare equal.
//!
//! [`PoseBatch`] holds `N >= 1` poses. Binary operations accept equal sizes
//! or a singleton on either side, which is broadcast against every element
//! of the other operand.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("incompatible batch sizes {left} and {right}")]
    Dimension { left: usize, right: usize },
    #[error("pose batch must contain at least one pose")]
    Empty,
    #[error("matrix {index}: rotation block not orthonormal (deviation {deviation:.3e})")]
    NotOrthonormal { index: usize, deviation: f64 },
    #[error("matrix {index}: bottom row must be (0, 0, 0, 1)")]
    BadBottomRow { index: usize },
}

/// A single rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoseRepr", from = "PoseRepr")]
pub struct Pose {
    pub translation: Vec3,
    rotation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    wxyz: [f64; 4],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        PoseRepr {
            position: p.translation.into(),
            wxyz: p.wxyz(),
        }
    }
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        Pose::from_raw(r.position, r.wxyz)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: Quaternion<f64>) -> UnitQuaternion<f64> {
    let n = q.norm();
    let mut c = [q.w / n, q.i / n, q.j / n, q.k / n];
    let flip = c
        .iter()
        .find(|v| **v != 0.0)
        .map(|v| *v < 0.0)
        .unwrap_or(false);
    if flip {
        for v in &mut c {
            *v = -*v;
        }
    }
    UnitQuaternion::new_unchecked(Quaternion::new(c[0], c[1], c[2], c[3]))
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a position and a scalar-first quaternion. The
    /// quaternion is normalized; it must not be zero.
    pub fn new(translation: Vec3, wxyz: [f64; 4]) -> Self {
        Self {
            translation,
            rotation: canonical(Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3])),
        }
    }

    /// Rebuilds a pose from stored components. Quaternions that are already
    /// unit length (within 1e-12) keep their exact bits; others are normalized.
    pub fn from_raw(position: [f64; 3], wxyz: [f64; 4]) -> Self {
        let [w, x, y, z] = wxyz;
        let q = Quaternion::new(w, x, y, z);
        let rotation = if (q.norm() - 1.0).abs() < 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            canonical(q)
        };
        Pose {
            translation: Vec3::from(position),
            rotation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            translation: t,
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn from_parts(translation: Vec3, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            translation,
            rotation: canonical(*rotation.quaternion()),
        }
    }

    /// Rotation given as an axis-angle vector (direction = axis, norm = angle).
    pub fn from_axis_angle(translation: Vec3, axis_angle: Vec3) -> Self {
        Self::from_parts(translation, UnitQuaternion::from_scaled_axis(axis_angle))
    }

    /// Fixed-axis roll/pitch/yaw, applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(translation: Vec3, rpy: [f64; 3]) -> Self {
        Self::from_parts(
            translation,
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.rotation.to_rotation_matrix().matrix()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Pose {
            translation: self.translation + self.rotation * other.translation,
            rotation: canonical(q),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            translation: -(inv * self.translation),
            rotation: canonical(*inv.quaternion()),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Inverse of [`Pose::to_matrix`]. The rotation block must be orthonormal
    /// with determinant +1 to within `1e-6`.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Pose, PoseError> {
        Self::from_matrix_indexed(m, 0)
    }

    fn from_matrix_indexed(m: &Matrix4<f64>, index: usize) -> Result<Pose, PoseError> {
        if m[(3, 0)] != 0.0 || m[(3, 1)] != 0.0 || m[(3, 2)] != 0.0 || m[(3, 3)] != 1.0 {
            return Err(PoseError::BadBottomRow { index });
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let deviation = (r.transpose() * r - Matrix3::identity()).amax();
        let det = r.determinant();
        if deviation > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(PoseError::NotOrthonormal {
                index,
                deviation: deviation.max((det - 1.0).abs()),
            });
        }
        Ok(Pose {
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
            rotation: canonical(quaternion_from_rotation(&r)),
        })
    }

    /// Rotation from `self` to `target` as a world-frame axis-angle vector,
    /// i.e. the axis-angle of `R_target * R_selfᵀ`.
    pub fn rotation_error_to(&self, target: &Pose) -> Vec3 {
        (target.rotation * self.rotation.inverse()).scaled_axis()
    }

    /// Angle in radians between the two orientations.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.wxyz().iter().all(|v| v.is_finite())
    }
}

/// Shepperd's method: pick the largest diagonal combination to avoid
/// dividing by a small number.
fn quaternion_from_rotation(r: &Matrix3<f64>) -> Quaternion<f64> {
    let tr = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    if tr > r[(0, 0)] && tr > r[(1, 1)] && tr > r[(2, 2)] {
        let s = (1.0 + tr).sqrt() * 2.0;
        Quaternion::new(
            0.25 * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] >= r[(1, 1)] && r[(0, 0)] >= r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        Quaternion::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            0.25 * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] >= r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        Quaternion::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            0.25 * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        Quaternion::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            0.25 * s,
        )
    }
}

/// `N >= 1` homogeneous 4×4 transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrixBatch(Vec<Matrix4<f64>>);

impl TransformMatrixBatch {
    pub fn new(mats: Vec<Matrix4<f64>>) -> Result<Self, PoseError> {
        if mats.is_empty() {
            return Err(PoseError::Empty);
        }
        Ok(Self(mats))
    }

    pub fn matrices(&self) -> &[Matrix4<f64>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseBatch {
    poses: Vec<Pose>,
}

fn broadcast_len(left: usize, right: usize) -> Result<usize, PoseError> {
    match (left, right) {
        (a, b) if a == b => Ok(a),
        (1, b) => Ok(b),
        (a, 1) => Ok(a),
        (a, b) => Err(PoseError::Dimension { left: a, right: b }),
    }
}

impl PoseBatch {
    pub fn new(poses: Vec<Pose>) -> Result<Self, PoseError> {
        if poses.is_empty() {
            return Err(PoseError::Empty);
        }
        Ok(Self { poses })
    }

    pub fn single(pose: Pose) -> Self {
        Self { poses: vec![pose] }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            poses: vec![Pose::identity(); n.max(1)],
        }
    }

    /// Builds a batch from raw `N×3` positions and scalar-first `N×4` quaternions.
    pub fn from_arrays(positions: &[[f64; 3]], quaternions: &[[f64; 4]]) -> Result<Self, PoseError> {
        if positions.len() != quaternions.len() {
            return Err(PoseError::Dimension {
                left: positions.len(),
                right: quaternions.len(),
            });
        }
        Self::new(
            positions
                .iter()
                .zip(quaternions)
                .map(|(p, q)| Pose::new(Vec3::from(*p), *q))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn get(&self, i: usize) -> &Pose {
        if self.poses.len() == 1 {
            &self.poses[0]
        } else {
            &self.poses[i]
        }
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.poses.iter().map(|p| p.translation.into()).collect()
    }

    pub fn quaternions(&self) -> Vec<[f64; 4]> {
        self.poses.iter().map(Pose::wxyz).collect()
    }

    pub fn compose(&self, other: &PoseBatch) -> Result<PoseBatch, PoseError> {
        let n = broadcast_len(self.len(), other.len())?;
        Ok(PoseBatch {
            poses: (0..n).map(|i| self.get(i).compose(other.get(i))).collect(),
        })
    }

    pub fn inverse(&self) -> PoseBatch {
        PoseBatch {
            poses: self.poses.iter().map(Pose::inverse).collect(),
        }
    }

    /// Maps an `N×K×3` point set. A singleton batch of poses applies to
    /// every point row; a single point row is broadcast against every pose.
    pub fn transform_points(&self, points: &[Vec<Vec3>]) -> Result<Vec<Vec<Vec3>>, PoseError> {
        let n = broadcast_len(self.len(), points.len())?;
        Ok((0..n)
            .map(|i| {
                let row = if points.len() == 1 { &points[0] } else { &points[i] };
                let pose = self.get(i);
                row.iter().map(|p| pose.transform_point(p)).collect()
            })
            .collect())
    }

    pub fn to_matrix(&self) -> TransformMatrixBatch {
        TransformMatrixBatch(self.poses.iter().map(Pose::to_matrix).collect())
    }

    pub fn from_matrix(m: &TransformMatrixBatch) -> Result<PoseBatch, PoseError> {
        let poses = m
            .0
            .iter()
            .enumerate()
            .map(|(i, m)| Pose::from_matrix_indexed(m, i))
            .collect::<Result<Vec<_>, _>>()?;
        PoseBatch::new(poses)
    }
}

impl std::ops::Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl std::ops::Index<usize> for PoseBatch {
    type Output = Pose;
    fn index(&self, i: usize) -> &Pose {
        &self.poses[i]
    }
}

impl From<Pose> for PoseBatch {
    fn from(p: Pose) -> Self {
        PoseBatch::single(p)
    }
}
