//! Narrow-phase contact generation between primitive shapes.

use crate::assets::Shape;
use crate::pose::{Pose, Vec3};
use crate::scene::{BodyKind, Layout};

/// A body taking part in a contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Body {
    Ground,
    Actor(usize),
    /// Link slot within the env.
    Link(usize),
}

/// A single contact point. `normal` points from `b` to `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub env: usize,
    pub a: Body,
    pub b: Body,
    pub point: Vec3,
    pub normal: Vec3,
    pub depth: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContactSet {
    pub contacts: Vec<Contact>,
    /// Shape pairs within reach of each other that have no narrow-phase routine.
    pub unsupported_pairs: usize,
}

/// Collision geometry placed in the world.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Collider {
    pub body: Body,
    pub shape: Shape,
    pub pose: Pose,
    /// Articulation slot for links; used to skip self-collision.
    pub articulation: Option<usize>,
    pub movable: bool,
}

pub(crate) fn env_colliders(layout: &Layout, env: usize, link_pose: &[Pose], actor_pose: &[Pose], out: &mut Vec<Collider>) {
    out.clear();
    for (ai, slot) in layout.articulations[env].iter().enumerate() {
        if !slot.collisions {
            continue;
        }
        for (li, link) in slot.model.template.links.iter().enumerate() {
            let ls = slot.link_offset + li;
            for cs in &link.collision_shapes {
                out.push(Collider {
                    body: Body::Link(ls),
                    shape: cs.shape,
                    pose: link_pose[ls].compose(&cs.origin),
                    articulation: Some(ai),
                    movable: slot.model.link_is_dynamic(li),
                });
            }
        }
    }
    for (k, a) in layout.descriptors[env].actors.iter().enumerate() {
        if a.collision {
            out.push(Collider {
                body: Body::Actor(k),
                shape: a.shape,
                pose: actor_pose[k],
                articulation: None,
                movable: a.kind != BodyKind::Static,
            });
        }
    }
}

/// All contacts of one env, appended to `set`.
pub(crate) fn detect_env(env: usize, ground: bool, colliders: &[Collider], margin: f64, set: &mut ContactSet) {
    for (i, ci) in colliders.iter().enumerate() {
        if ground && ci.movable {
            let before = set.contacts.len();
            if !shape_plane(&ci.shape, &ci.pose, margin, &mut |point, normal, depth| {
                set.contacts.push(Contact { env, a: ci.body, b: Body::Ground, point, normal, depth })
            })
                && ci.pose.translation.z - ci.shape.bounding_radius() < margin {
                    set.unsupported_pairs += 1;
                }
            debug_assert!(set.contacts[before..].iter().all(|c| c.depth >= -margin));
        }
        for cj in &colliders[i + 1..] {
            if !(ci.movable || cj.movable) || ci.body == cj.body {
                continue;
            }
            if ci.articulation.is_some() && ci.articulation == cj.articulation {
                continue;
            }
            let reach = ci.shape.bounding_radius() + cj.shape.bounding_radius() + margin;
            if (ci.pose.translation - cj.pose.translation).norm_squared() > reach * reach {
                continue;
            }
            let mut push = |point, normal, depth| {
                set.contacts.push(Contact { env, a: ci.body, b: cj.body, point, normal, depth })
            };
            if !shape_shape(&ci.shape, &ci.pose, &cj.shape, &cj.pose, margin, &mut push) {
                set.unsupported_pairs += 1;
            }
        }
    }
}

type Emit<'a> = dyn FnMut(Vec3, Vec3, f64) + 'a;

/// Contacts of a shape against the plane `z = 0`. Returns false when the
/// shape has no plane routine.
fn shape_plane(shape: &Shape, pose: &Pose, margin: f64, emit: &mut Emit) -> bool {
    let n = Vec3::z();
    match *shape {
        Shape::Sphere { radius } => {
            sphere_plane(&pose.translation, radius, margin, emit);
            true
        }
        Shape::Capsule { radius, half_length } => {
            for s in [-1.0, 1.0] {
                let c = pose.transform_point(&Vec3::new(0.0, 0.0, s * half_length));
                sphere_plane(&c, radius, margin, emit);
            }
            true
        }
        Shape::Box { half_extents: h } => {
            let mut corners: Vec<(f64, Vec3)> = Vec::with_capacity(8);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        let p = pose.transform_point(&Vec3::new(sx * h[0], sy * h[1], sz * h[2]));
                        if -p.z >= -margin {
                            corners.push((-p.z, p));
                        }
                    }
                }
            }
            corners.sort_by(|a, b| b.0.total_cmp(&a.0));
            for (depth, p) in corners.into_iter().take(4) {
                emit(Vec3::new(p.x, p.y, 0.0), n, depth);
            }
            true
        }
        Shape::Cylinder { .. } => false,
    }
}

fn sphere_plane(c: &Vec3, r: f64, margin: f64, emit: &mut Emit) {
    let depth = r - c.z;
    if depth >= -margin {
        emit(Vec3::new(c.x, c.y, 0.0), Vec3::z(), depth);
    }
}

fn sphere_sphere(ca: &Vec3, ra: f64, cb: &Vec3, rb: f64, margin: f64, emit: &mut Emit) {
    let d = ca - cb;
    let dist = d.norm();
    let depth = ra + rb - dist;
    if depth < -margin {
        return;
    }
    let n = if dist > 1e-12 { d / dist } else { Vec3::z() };
    emit(cb + n * (rb - depth * 0.5), n, depth);
}

/// Sphere `a` against box `b`.
fn sphere_box(ca: &Vec3, r: f64, h: &[f64; 3], pb: &Pose, margin: f64, emit: &mut Emit) {
    let local = pb.inverse().transform_point(ca);
    let he = Vec3::new(h[0], h[1], h[2]);
    let clamped = Vec3::new(
        local.x.clamp(-he.x, he.x),
        local.y.clamp(-he.y, he.y),
        local.z.clamp(-he.z, he.z),
    );
    let inside = clamped == local;
    let (n_local, depth, surface) = if inside {
        let gaps = he - local.abs();
        let axis = gaps.imin();
        let mut n = Vec3::zeros();
        n[axis] = local[axis].signum();
        if n[axis] == 0.0 {
            n[axis] = 1.0;
        }
        let mut s = local;
        s[axis] = he[axis] * n[axis];
        (n, r + gaps[axis], s)
    } else {
        let d = local - clamped;
        let dist = d.norm();
        (d / dist, r - dist, clamped)
    };
    if depth < -margin {
        return;
    }
    emit(pb.transform_point(&surface), pb.transform_vector(&n_local), depth);
}

fn segment_closest(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-24 {
        return *a;
    }
    a + ab * ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
}

fn shape_shape(sa: &Shape, pa: &Pose, sb: &Shape, pb: &Pose, margin: f64, emit: &mut Emit) -> bool {
    use Shape::*;
    let capsule_axis = |p: &Pose, hl: f64| (p.transform_point(&Vec3::new(0.0, 0.0, -hl)), p.transform_point(&Vec3::new(0.0, 0.0, hl)));
    match (*sa, *sb) {
        (Sphere { radius: ra }, Sphere { radius: rb }) => sphere_sphere(&pa.translation, ra, &pb.translation, rb, margin, emit),
        (Sphere { radius }, Box { half_extents }) => sphere_box(&pa.translation, radius, &half_extents, pb, margin, emit),
        (Box { half_extents }, Sphere { radius }) => {
            sphere_box(&pb.translation, radius, &half_extents, pa, margin, &mut |p, n: Vec3, d| emit(p, -n, d))
        }
        (Capsule { radius: ra, half_length }, Sphere { radius: rb }) => {
            let (a0, a1) = capsule_axis(pa, half_length);
            let c = segment_closest(&pb.translation, &a0, &a1);
            sphere_sphere(&c, ra, &pb.translation, rb, margin, emit)
        }
        (Sphere { radius: ra }, Capsule { radius: rb, half_length }) => {
            let (b0, b1) = capsule_axis(pb, half_length);
            let c = segment_closest(&pa.translation, &b0, &b1);
            sphere_sphere(&pa.translation, ra, &c, rb, margin, emit)
        }
        _ => return false,
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn collect(f: impl FnOnce(&mut Emit)) -> Vec<(Vec3, Vec3, f64)> {
        let mut out = Vec::new();
        f(&mut |p, n, d| out.push((p, n, d)));
        out
    }

    #[test]
    fn sphere_on_plane() {
        let c = collect(|e| {
            shape_plane(&Shape::Sphere { radius: 0.1 }, &Pose::from_translation(Vec3::new(0.0, 0.0, 0.05)), 5e-4, e);
        });
        assert_eq!(c.len(), 1);
        assert!((c[0].2 - 0.05).abs() < 1e-15);
        assert_eq!(c[0].1, Vec3::z());
    }

    #[test]
    fn resting_box_has_four_corners() {
        let c = collect(|e| {
            shape_plane(&Shape::Box { half_extents: [0.5; 3] }, &Pose::from_translation(Vec3::new(0.0, 0.0, 0.5)), 5e-4, e);
        });
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|(p, _, d)| d.abs() < 1e-15 && p.x.abs() == 0.5 && p.y.abs() == 0.5));
    }

    #[test]
    fn two_spheres() {
        let c = collect(|e| {
            sphere_sphere(&Vec3::new(0.15, 0.0, 0.0), 0.1, &Vec3::zeros(), 0.1, 5e-4, e);
        });
        assert_eq!(c.len(), 1);
        assert!((c[0].2 - 0.05).abs() < 1e-15);
        assert_eq!(c[0].1, Vec3::x());
    }

    #[test]
    fn sphere_against_box_face_and_flip() {
        let bx = Pose::identity();
        let c = collect(|e| {
            shape_shape(&Shape::Sphere { radius: 0.1 }, &Pose::from_translation(Vec3::new(0.0, 0.0, 0.55)), &Shape::Box { half_extents: [0.5; 3] }, &bx, 5e-4, e);
        });
        assert_eq!(c.len(), 1);
        assert!((c[0].2 - 0.05).abs() < 1e-12);
        assert!((c[0].1 - Vec3::z()).norm() < 1e-12);
        let f = collect(|e| {
            shape_shape(&Shape::Box { half_extents: [0.5; 3] }, &bx, &Shape::Sphere { radius: 0.1 }, &Pose::from_translation(Vec3::new(0.0, 0.0, 0.55)), 5e-4, e);
        });
        assert!((f[0].1 + Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn capsule_lying_on_plane_touches_at_both_ends() {
        let p = Pose::from_axis_angle(Vec3::new(0.0, 0.0, 0.05), Vec3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0));
        let c = collect(|e| {
            shape_plane(&Shape::Capsule { radius: 0.05, half_length: 0.2 }, &p, 5e-4, e);
        });
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|(_, _, d)| d.abs() < 1e-12));
    }

    #[test]
    fn unsupported_pair_reports_false() {
        let b = Shape::Box { half_extents: [0.1; 3] };
        assert!(!shape_shape(&b, &Pose::identity(), &b, &Pose::identity(), 5e-4, &mut |_, _, _| {}));
    }
}
