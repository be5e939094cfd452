//! Articulated-body algorithm for fixed-base articulations.
//!
//! Quantities are in link coordinates. The work is split in two: [`AbaFactor`]
//! holds everything that depends only on joint positions (transforms,
//! articulated inertias), and [`AbaFactor::solve`] runs the velocity and force
//! dependent sweeps. One factorization serves both the free-motion solve and
//! the unit-impulse responses used by the contact solver.

use crate::model::ArticulationModel;
use crate::pose::{Pose, Vec3};
use crate::spatial::{cross_force, cross_motion, motion_transform, svec, SMat, SVec};

#[derive(Debug, Clone)]
pub struct AbaFactor {
    /// Parent-to-child motion transform per link (index 0 unused).
    x_up: Vec<SMat>,
    /// Articulated inertia handed to the parent, per link.
    ia: Vec<SMat>,
    u: Vec<SVec>,
    d_inv: Vec<f64>,
    /// Gravity in root-link coordinates.
    root_gravity: Vec3,
}

impl AbaFactor {
    /// Factorizes the articulation at joint positions `q`. `armature[d]` is
    /// added to the joint-space inertia of DOF `d`.
    pub fn new(model: &ArticulationModel, base: &Pose, q: &[f64], armature: &[f64], gravity: &Vec3) -> Self {
        let n = model.num_links();
        let mut x_up = vec![SMat::identity(); n];
        for (j, joint) in model.template.joints.iter().enumerate() {
            let qj = model.dof_of_joint[j].map_or(0.0, |d| q[d]);
            x_up[joint.child_link] = motion_transform(&joint.transform(qj));
        }
        let mut ia: Vec<SMat> = model.inertia.clone();
        let mut u = vec![SVec::zeros(); n];
        let mut d_inv = vec![0.0; n];
        for i in (1..n).rev() {
            let j = model.joint_of_link[i].unwrap();
            let mut a = ia[i];
            if let Some(d) = model.dof_of_joint[j] {
                let s = model.motion_axis[j];
                let ui = a * s;
                let di = s.dot(&ui) + armature[d];
                u[i] = ui;
                d_inv[i] = 1.0 / di;
                a -= ui * ui.transpose() * d_inv[i];
                ia[i] = a;
            }
            let p = model.parent[i].unwrap();
            let contrib = x_up[i].transpose() * a * x_up[i];
            ia[p] += contrib;
        }
        Self {
            x_up,
            ia,
            u,
            d_inv,
            root_gravity: base.rotation().inverse_transform_vector(gravity),
        }
    }

    /// Joint accelerations for velocities `qd` and joint forces `tau`.
    /// `f_ext` are link-frame spatial forces `[torque; force]` about each link
    /// origin. With `with_gravity` false the root does not accelerate.
    pub fn solve(
        &self,
        model: &ArticulationModel,
        qd: &[f64],
        tau: &[f64],
        f_ext: Option<&[SVec]>,
        with_gravity: bool,
        qdd: &mut [f64],
    ) {
        let n = model.num_links();
        let mut v = vec![SVec::zeros(); n];
        let mut c = vec![SVec::zeros(); n];
        let mut pa = vec![SVec::zeros(); n];
        let moving = qd.iter().any(|x| *x != 0.0);
        for i in 1..n {
            let j = model.joint_of_link[i].unwrap();
            let p = model.parent[i].unwrap();
            if moving {
                let vj = model.dof_of_joint[j].map_or(SVec::zeros(), |d| model.motion_axis[j] * qd[d]);
                v[i] = self.x_up[i] * v[p] + vj;
                c[i] = cross_motion(&v[i], &vj);
                pa[i] = cross_force(&v[i], &(model.inertia[i] * v[i]));
            }
            if let Some(f) = f_ext {
                pa[i] -= f[i];
            }
        }
        let mut u_force = vec![0.0; n];
        for i in (1..n).rev() {
            let j = model.joint_of_link[i].unwrap();
            let mut pi = pa[i] + self.ia[i] * c[i];
            if let Some(d) = model.dof_of_joint[j] {
                let ui = tau[d] - model.motion_axis[j].dot(&pa[i]);
                u_force[i] = ui;
                pi += self.u[i] * (ui * self.d_inv[i]);
            }
            let p = model.parent[i].unwrap();
            let up = self.x_up[i].transpose() * pi;
            pa[p] += up;
        }
        let mut a = vec![SVec::zeros(); n];
        if with_gravity {
            a[0] = svec(Vec3::zeros(), -self.root_gravity);
        }
        for i in 1..n {
            let j = model.joint_of_link[i].unwrap();
            let p = model.parent[i].unwrap();
            let ai = self.x_up[i] * a[p] + c[i];
            a[i] = match model.dof_of_joint[j] {
                Some(d) => {
                    let s = model.motion_axis[j];
                    let acc = (u_force[i] - self.u[i].dot(&ai)) * self.d_inv[i];
                    qdd[d] = acc;
                    ai + s * acc
                }
                None => ai,
            };
        }
    }
}

/// One-shot forward dynamics: `qdd = M⁻¹ (tau − C(q, qd) − g(q))`, with
/// `f_ext` as in [`AbaFactor::solve`].
pub fn aba_forward_dynamics(
    model: &ArticulationModel,
    base: &Pose,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    f_ext: Option<&[SVec]>,
    gravity: &Vec3,
) -> Vec<f64> {
    let zeros = vec![0.0; model.dof()];
    let f = AbaFactor::new(model, base, q, &zeros, gravity);
    let mut qdd = vec![0.0; model.dof()];
    f.solve(model, qd, tau, f_ext, true, &mut qdd);
    qdd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::{JointSpec, LinkSpec, Shape, TemplateBuilder};

    fn point_pendulum(m: f64, l: f64) -> ArticulationModel {
        let bob = LinkSpec {
            mass: m,
            inertia: nalgebra::Matrix3::zeros(),
            inertial_origin: Pose::from_translation(Vec3::new(l, 0.0, 0.0)),
            ..LinkSpec::solid("bob", Shape::Sphere { radius: 0.01 }, m, Pose::identity())
        };
        let t = TemplateBuilder::new("p", LinkSpec::massless("base"))
            .attach("base", JointSpec::revolute("hinge", Vec3::y(), Pose::identity()), bob)
            .build()
            .unwrap();
        ArticulationModel::new(t).unwrap()
    }

    #[test]
    fn rest_without_gravity_is_zero() {
        let m = point_pendulum(1.0, 1.0);
        let qdd = aba_forward_dynamics(&m, &Pose::identity(), &[0.3], &[0.0], &[0.0], None, &Vec3::zeros());
        assert_eq!(qdd, vec![0.0]);
    }

    #[test]
    fn point_pendulum_matches_analytic() {
        // hinge about +y, bob along +x: the angle from the downward vertical
        // is q - pi/2 for gravity along -z.
        let (mass, l, g) = (2.0, 0.7, 9.81);
        let m = point_pendulum(mass, l);
        for q in [-1.0, -0.2, 0.0, 0.4, 1.3, 2.9] {
            let qdd = aba_forward_dynamics(&m, &Pose::identity(), &[q], &[0.5], &[0.0], None, &Vec3::new(0.0, 0.0, -g));
            let expected = -(g / l) * (q - std::f64::consts::FRAC_PI_2).sin();
            assert!((qdd[0] - expected).abs() < 1e-10, "{q}: {} vs {expected}", qdd[0]);
        }
    }

    #[test]
    fn armature_adds_inertia() {
        let m = point_pendulum(1.0, 1.0);
        let f = AbaFactor::new(&m, &Pose::identity(), &[0.0], &[1.0], &Vec3::zeros());
        let mut qdd = [0.0];
        f.solve(&m, &[0.0], &[4.0], None, false, &mut qdd);
        assert!((qdd[0] - 2.0).abs() < 1e-12);
    }
}
