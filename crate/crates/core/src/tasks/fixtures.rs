//! Primitive-only robot templates used by the task suite.

use crate::assets::{load_mjcf, ArticulationTemplate, AssetError, JointSpec, LinkSpec, Shape, TemplateBuilder};
use crate::pose::{Pose, Vec3};
use nalgebra::Matrix3;
use std::f64::consts::FRAC_PI_2;

pub const CARTPOLE_MJCF: &str = include_str!("../../assets/cartpole.xml");

/// Link length of both moving segments of [`arm3`].
pub const ARM_LINK: f64 = 0.3;
/// Height of the shoulder joint above the arm base.
pub const ARM_SHOULDER: f64 = 0.1;

/// Slider + hinge cart-pole from the MJCF fixture.
pub fn cartpole() -> Result<ArticulationTemplate, AssetError> {
    let mut t = load_mjcf(CARTPOLE_MJCF)?.value.remove(0);
    t.name = "cartpole".into();
    Ok(t)
}

/// Link without collision geometry: a point-like mass.
fn carriage(name: &str, mass: f64) -> LinkSpec {
    let mut l = LinkSpec::massless(name);
    l.mass = mass;
    l.inertia = Matrix3::identity() * mass * 1e-3;
    l
}

fn capsule_along_x(name: &str, length: f64, mass: f64) -> LinkSpec {
    let origin = Pose::from_axis_angle(Vec3::new(length / 2.0, 0.0, 0.0), Vec3::new(0.0, FRAC_PI_2, 0.0));
    LinkSpec::solid(name, Shape::Capsule { radius: 0.025, half_length: length / 2.0 - 0.025 }, mass, origin)
}

/// Three-joint arm: `yaw` (z), `shoulder` (y), `elbow` (y) and a fixed `ee`
/// frame at the forearm tip. Positive pitch angles lower the arm.
pub fn arm3() -> Result<ArticulationTemplate, AssetError> {
    let turret = LinkSpec::solid("turret", Shape::Sphere { radius: 0.04 }, 0.5, Pose::identity()).with_color([0.3, 0.3, 0.35, 1.0]);
    TemplateBuilder::new("arm3", LinkSpec::massless("base"))
        .attach("base", JointSpec::revolute("yaw", Vec3::z(), Pose::identity()).limits(-3.0, 3.0), turret)
        .attach(
            "turret",
            JointSpec::revolute("shoulder", Vec3::y(), Pose::from_translation(Vec3::new(0.0, 0.0, ARM_SHOULDER))).limits(-2.0, 2.0),
            capsule_along_x("upper", ARM_LINK, 0.5).with_color([0.9, 0.6, 0.2, 1.0]),
        )
        .attach(
            "upper",
            JointSpec::revolute("elbow", Vec3::y(), Pose::from_translation(Vec3::new(ARM_LINK, 0.0, 0.0))).limits(-2.6, 2.6),
            capsule_along_x("fore", ARM_LINK, 0.4).with_color([0.9, 0.6, 0.2, 1.0]),
        )
        .attach("fore", JointSpec::fixed("tip", Pose::from_translation(Vec3::new(ARM_LINK, 0.0, 0.0))), LinkSpec::massless("ee"))
        .build()
}

/// Planar pusher: prismatic `px`, `py` carrying a sphere `tip` of radius
/// `radius`.
pub fn pusher(radius: f64, range: f64) -> Result<ArticulationTemplate, AssetError> {
    TemplateBuilder::new("pusher", LinkSpec::massless("base"))
        .attach("base", JointSpec::prismatic("px", Vec3::x(), Pose::identity()).limits(-range, range), carriage("carriage", 0.3))
        .attach(
            "carriage",
            JointSpec::prismatic("py", Vec3::y(), Pose::identity()).limits(-range, range),
            LinkSpec::solid("tip", Shape::Sphere { radius }, 0.5, Pose::identity()).with_color([0.2, 0.7, 0.3, 1.0]),
        )
        .build()
}

/// Cartesian gantry: prismatic `gx`, `gy`, `gz` ending in a pen `tool`
/// whose frame origin is the pen tip.
pub fn gantry(range: f64, height: f64) -> Result<ArticulationTemplate, AssetError> {
    let pen = LinkSpec::solid(
        "tool",
        Shape::Cylinder { radius: 0.006, half_length: 0.03 },
        0.2,
        Pose::from_translation(Vec3::new(0.0, 0.0, 0.03)),
    )
    .with_color([0.1, 0.1, 0.1, 1.0]);
    TemplateBuilder::new("gantry", LinkSpec::massless("base"))
        .attach("base", JointSpec::prismatic("gx", Vec3::x(), Pose::identity()).limits(-range, range), carriage("bridge", 0.3))
        .attach("bridge", JointSpec::prismatic("gy", Vec3::y(), Pose::identity()).limits(-range, range), carriage("saddle", 0.2))
        .attach("saddle", JointSpec::prismatic("gz", Vec3::z(), Pose::identity()).limits(0.0, height), pen)
        .build()
}
