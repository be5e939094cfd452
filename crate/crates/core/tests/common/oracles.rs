//! World-frame reference algorithms written from scratch with 4×4 matrices
//! and plain 6-vectors, sharing no code with the engine besides the template
//! data structures.

use batchsim::assets::{ArticulationTemplate, JointSpec, JointType, LinkSpec, Shape, TemplateBuilder};
use batchsim::pose::{Pose, Vec3};
use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix6, Vector6};
use rand::Rng;

pub fn pose_matrix(p: &Pose) -> Matrix4<f64> {
    let [w, x, y, z] = p.wxyz();
    let r = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
    );
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.translation);
    m
}

fn rodrigues(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// World transforms of every link via 4×4 matrix products.
pub fn fk_matrices(t: &ArticulationTemplate, base: &Pose, q: &[f64]) -> Vec<Matrix4<f64>> {
    let dof_of = t.joint_dof_indices();
    let mut out = vec![Matrix4::identity(); t.links.len()];
    out[0] = pose_matrix(base);
    for (j, joint) in t.joints.iter().enumerate() {
        let qj = dof_of[j].map_or(0.0, |d| q[d]);
        let mut motion = Matrix4::identity();
        match joint.joint_type {
            JointType::Revolute => motion.fixed_view_mut::<3, 3>(0, 0).copy_from(&rodrigues(&joint.axis, qj)),
            JointType::Prismatic => motion.fixed_view_mut::<3, 1>(0, 3).copy_from(&(joint.axis * qj)),
            JointType::Fixed => {}
        }
        out[joint.child_link] = out[joint.parent_link] * pose_matrix(&joint.origin) * motion;
    }
    out
}

fn cross3(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn crm(v: &Vector6<f64>) -> Matrix6<f64> {
    let w = Vec3::new(v[0], v[1], v[2]);
    let u = Vec3::new(v[3], v[4], v[5]);
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&cross3(&w));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&cross3(&w));
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&cross3(&u));
    m
}

struct WorldModel {
    /// Motion subspace of each DOF in world Plücker coordinates.
    s: Vec<Vector6<f64>>,
    /// World spatial inertia about the world origin, per link.
    inertia: Vec<Matrix6<f64>>,
    parent: Vec<Option<usize>>,
    /// DOF of the joint driving each link.
    dof_of_link: Vec<Option<usize>>,
}

fn world_model(t: &ArticulationTemplate, base: &Pose, q: &[f64]) -> WorldModel {
    let tf = fk_matrices(t, base, q);
    let dof_of = t.joint_dof_indices();
    let n = t.links.len();
    let mut parent = vec![None; n];
    let mut dof_of_link = vec![None; n];
    let mut s = vec![Vector6::zeros(); t.dof()];
    for (j, joint) in t.joints.iter().enumerate() {
        parent[joint.child_link] = Some(joint.parent_link);
        if let Some(d) = dof_of[j] {
            dof_of_link[joint.child_link] = Some(d);
            let m = tf[joint.child_link];
            let z = m.fixed_view::<3, 3>(0, 0) * joint.axis;
            let o: Vec3 = m.fixed_view::<3, 1>(0, 3).into();
            s[d] = match joint.joint_type {
                JointType::Revolute => {
                    let v = o.cross(&z);
                    Vector6::new(z.x, z.y, z.z, v.x, v.y, v.z)
                }
                _ => Vector6::new(0.0, 0.0, 0.0, z.x, z.y, z.z),
            };
        }
    }
    let inertia = t
        .links
        .iter()
        .zip(&tf)
        .map(|(l, m)| {
            let ic = pose_matrix(&l.inertial_origin);
            let world = m * ic;
            let r = world.fixed_view::<3, 3>(0, 0).into_owned();
            let c: Vec3 = world.fixed_view::<3, 1>(0, 3).into();
            let icw = r * l.inertia * r.transpose();
            let cx = cross3(&c);
            let mut out = Matrix6::zeros();
            out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(icw - l.mass * cx * cx));
            out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(l.mass * cx));
            out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-l.mass * cx));
            out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * l.mass));
            out
        })
        .collect();
    WorldModel { s, inertia, parent, dof_of_link }
}

/// Recursive Newton-Euler inverse dynamics in world coordinates.
pub fn rnea(t: &ArticulationTemplate, base: &Pose, q: &[f64], qd: &[f64], qdd: &[f64], gravity: &Vec3) -> DVector<f64> {
    let w = world_model(t, base, q);
    let n = t.links.len();
    let mut v = vec![Vector6::zeros(); n];
    let mut a = vec![Vector6::zeros(); n];
    a[0] = Vector6::new(0.0, 0.0, 0.0, -gravity.x, -gravity.y, -gravity.z);
    let mut f = vec![Vector6::zeros(); n];
    for i in 1..n {
        let p = w.parent[i].unwrap();
        v[i] = v[p];
        a[i] = a[p];
        if let Some(d) = w.dof_of_link[i] {
            let vj = w.s[d] * qd[d];
            v[i] += vj;
            a[i] += w.s[d] * qdd[d] + crm(&v[i]) * vj;
        }
        f[i] = w.inertia[i] * a[i] - crm(&v[i]).transpose() * (w.inertia[i] * v[i]);
    }
    let mut tau = DVector::zeros(t.dof());
    for i in (1..n).rev() {
        if let Some(d) = w.dof_of_link[i] {
            tau[d] = w.s[d].dot(&f[i]);
        }
        let p = w.parent[i].unwrap();
        let fi = f[i];
        f[p] += fi;
    }
    tau
}

/// Composite-rigid-body joint-space inertia matrix in world coordinates.
pub fn crba(t: &ArticulationTemplate, base: &Pose, q: &[f64]) -> DMatrix<f64> {
    let w = world_model(t, base, q);
    let n = t.links.len();
    let mut ic = w.inertia.clone();
    for i in (1..n).rev() {
        let p = w.parent[i].unwrap();
        let c = ic[i];
        ic[p] += c;
    }
    let mut m = DMatrix::zeros(t.dof(), t.dof());
    for i in 1..n {
        let Some(di) = w.dof_of_link[i] else { continue };
        let f = ic[i] * w.s[di];
        let mut j = Some(i);
        while let Some(k) = j {
            if let Some(dk) = w.dof_of_link[k] {
                m[(di, dk)] = w.s[dk].dot(&f);
                m[(dk, di)] = m[(di, dk)];
            }
            j = w.parent[k];
        }
    }
    m
}

/// Forward dynamics by solving `M qdd = tau - C(q, qd)`.
pub fn forward_dynamics_oracle(t: &ArticulationTemplate, base: &Pose, q: &[f64], qd: &[f64], tau: &[f64], gravity: &Vec3) -> DVector<f64> {
    let zeros = vec![0.0; t.dof()];
    let c = rnea(t, base, q, qd, &zeros, gravity);
    let m = crba(t, base, q);
    m.lu().solve(&(DVector::from_column_slice(tau) - c)).expect("mass matrix is invertible")
}

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.2 {
            return v.normalize();
        }
    }
}

fn random_pose(rng: &mut impl Rng, reach: f64) -> Pose {
    let mut c = || if reach > 0.0 { rng.gen_range(-reach..reach) } else { 0.0 };
    let t = Vec3::new(c(), c(), c());
    Pose::from_axis_angle(
        t,
        random_unit(rng) * rng.gen_range(0.0..3.0),
    )
}

/// Random tree with `dof` moving joints (revolute or prismatic, random axes
/// and frames), occasional fixed joints, and random mass properties.
pub fn random_tree(rng: &mut impl Rng, dof: usize) -> ArticulationTemplate {
    let mut b = TemplateBuilder::new("random", LinkSpec::massless("root"));
    let mut names = vec!["root".to_string()];
    let mut moving = 0;
    let mut i = 0;
    while moving < dof {
        let parent = names[rng.gen_range(0..names.len())].clone();
        let name = format!("l{i}");
        let mut link = LinkSpec::solid(&name, Shape::Sphere { radius: 0.05 }, rng.gen_range(0.3..2.0), random_pose(rng, 0.3));
        let d = Vec3::new(rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2), rng.gen_range(0.01..0.2));
        let r = *random_pose(rng, 0.0).rotation().to_rotation_matrix().matrix();
        link.inertia = r * Matrix3::from_diagonal(&(d + Vec3::repeat(d.sum()))) * r.transpose();
        let origin = random_pose(rng, 0.5);
        let joint = match rng.gen_range(0..10) {
            0 if i > 0 => JointSpec::fixed(format!("j{i}"), origin),
            1..=3 => {
                moving += 1;
                JointSpec::prismatic(format!("j{i}"), random_unit(rng), origin)
            }
            _ => {
                moving += 1;
                JointSpec::revolute(format!("j{i}"), random_unit(rng), origin)
            }
        };
        b = b.attach(&parent, joint, link);
        names.push(name);
        i += 1;
    }
    b.build().expect("random tree is valid")
}
