//! 6D spatial vector algebra, angular part first: motion `[ω; v]`,
//! force `[n; f]`.

use crate::pose::{Pose, Vec3};
use nalgebra::{Matrix3, Matrix6, Vector6};

pub type SVec = Vector6<f64>;
pub type SMat = Matrix6<f64>;

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn svec(angular: Vec3, linear: Vec3) -> SVec {
    SVec::new(angular.x, angular.y, angular.z, linear.x, linear.y, linear.z)
}

pub fn angular(v: &SVec) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

pub fn linear(v: &SVec) -> Vec3 {
    Vec3::new(v[3], v[4], v[5])
}

/// Motion cross product `v ×`.
pub fn cross_motion(v: &SVec, m: &SVec) -> SVec {
    let (w, u) = (angular(v), linear(v));
    let (mw, mu) = (angular(m), linear(m));
    svec(w.cross(&mw), w.cross(&mu) + u.cross(&mw))
}

/// Force cross product `v ×*`.
pub fn cross_force(v: &SVec, f: &SVec) -> SVec {
    let (w, u) = (angular(v), linear(v));
    let (n, fl) = (angular(f), linear(f));
    svec(w.cross(&n) + u.cross(&fl), w.cross(&fl))
}

/// Coordinate transform of motion vectors from frame A to frame B, where
/// `b_in_a` is the pose of B expressed in A.
pub fn motion_transform(b_in_a: &Pose) -> SMat {
    let e = b_in_a.rotation_matrix().transpose();
    let r = b_in_a.translation;
    let mut x = SMat::zeros();
    x.fixed_view_mut::<3, 3>(0, 0).copy_from(&e);
    x.fixed_view_mut::<3, 3>(3, 3).copy_from(&e);
    x.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-e * skew(&r)));
    x
}

/// Rigid-body inertia about the frame origin for a body of `mass` with
/// centre of mass `com` and rotational inertia `i_com` about it.
pub fn rigid_inertia(mass: f64, com: &Vec3, i_com: &Matrix3<f64>) -> SMat {
    let c = skew(com);
    let mut m = SMat::zeros();
    m.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(i_com + mass * c * c.transpose()));
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(mass * c));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(mass * c.transpose()));
    m.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * mass));
    m
}
