//! Mass properties of primitive shapes.

use super::Shape;
use crate::pose::{Pose, Vec3};
use nalgebra::Matrix3;

/// Rotational inertia of a solid shape of the given mass about its centre,
/// in the shape frame.
pub fn shape_inertia(shape: &Shape, mass: f64) -> Matrix3<f64> {
    match *shape {
        Shape::Sphere { radius } => Matrix3::from_diagonal_element(0.4 * mass * radius * radius),
        Shape::Box { half_extents: h } => Matrix3::from_diagonal(&Vec3::new(
            mass / 3.0 * (h[1] * h[1] + h[2] * h[2]),
            mass / 3.0 * (h[0] * h[0] + h[2] * h[2]),
            mass / 3.0 * (h[0] * h[0] + h[1] * h[1]),
        )),
        Shape::Cylinder { radius: r, half_length: h } => {
            let t = mass * (3.0 * r * r + 4.0 * h * h) / 12.0;
            Matrix3::from_diagonal(&Vec3::new(t, t, 0.5 * mass * r * r))
        }
        Shape::Capsule { radius: r, half_length: h } => {
            // split the mass between the cylinder and the two hemispherical caps by volume
            let vc = 2.0 * h;
            let vs = 4.0 / 3.0 * r;
            let mc = mass * vc / (vc + vs);
            let ms = mass - mc;
            let axial = mc * r * r / 2.0 + ms * 0.4 * r * r;
            let transverse =
                mc * (h * h / 3.0 + r * r / 4.0) + ms * (0.4 * r * r + h * h + 0.75 * h * r);
            Matrix3::from_diagonal(&Vec3::new(transverse, transverse, axial))
        }
    }
}

/// Lumps `(mass, inertia about own centre in own frame, pose of that frame)`
/// parts into a single body: total mass, centre of mass and inertia about
/// the centre of mass, both in the common frame.
pub fn combine_inertias(parts: &[(f64, Matrix3<f64>, Pose)]) -> (f64, Vec3, Matrix3<f64>) {
    let mass: f64 = parts.iter().map(|p| p.0).sum();
    if mass <= 0.0 {
        return (0.0, Vec3::zeros(), Matrix3::zeros());
    }
    let com = parts
        .iter()
        .fold(Vec3::zeros(), |acc, (m, _, pose)| acc + pose.translation * *m)
        / mass;
    let mut inertia = Matrix3::zeros();
    for (m, i, pose) in parts {
        let r = pose.rotation_matrix();
        let d = pose.translation - com;
        inertia += r * i * r.transpose()
            + *m * (Matrix3::identity() * d.dot(&d) - d * d.transpose());
    }
    (mass, com, 0.5 * (inertia + inertia.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capsule_reduces_to_sphere() {
        let cap = shape_inertia(&Shape::Capsule { radius: 0.3, half_length: 1e-12 }, 2.0);
        let sph = shape_inertia(&Shape::Sphere { radius: 0.3 }, 2.0);
        assert!((cap - sph).amax() < 1e-9);
    }

    #[test]
    fn parallel_axis_two_points() {
        let tiny = Matrix3::zeros();
        let parts = [
            (1.0, tiny, Pose::from_translation(Vec3::new(1.0, 0.0, 0.0))),
            (1.0, tiny, Pose::from_translation(Vec3::new(-1.0, 0.0, 0.0))),
        ];
        let (m, c, i) = combine_inertias(&parts);
        assert_eq!(m, 2.0);
        assert_eq!(c, Vec3::zeros());
        assert!((i - Matrix3::from_diagonal(&Vec3::new(0.0, 2.0, 2.0))).amax() < 1e-12);
    }
}
