//! Fixed scenes shared by several integration tests.

use batchsim::assets::{revolute_chain, Shape};
use batchsim::pose::{Pose, Vec3};
use batchsim::render::CameraConfig;
use batchsim::scene::{ActorDesc, ArticulationDesc, EnvDescriptor, SceneBatch, TemplateLibrary};
use std::path::PathBuf;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Arm, cube, ball and cylinder on the ground, with the arm posed.
pub fn golden_fixture() -> SceneBatch {
    let lib = TemplateLibrary::from([("arm".to_string(), revolute_chain("arm", 3, 0.3, 1.0).unwrap())]);
    let env = EnvDescriptor {
        articulations: vec![ArticulationDesc::new("arm", "arm").at(Pose::from_translation(Vec3::new(0.0, 0.0, 0.2)))],
        actors: vec![
            ActorDesc::dynamic("cube", Shape::Box { half_extents: [0.08; 3] }, 1.0, Pose::from_translation(Vec3::new(0.4, 0.25, 0.08))),
            ActorDesc::dynamic("ball", Shape::Sphere { radius: 0.1 }, 1.0, Pose::from_translation(Vec3::new(0.2, -0.3, 0.1))),
            ActorDesc::dynamic("pin", Shape::Cylinder { radius: 0.04, half_length: 0.12 }, 1.0, Pose::from_translation(Vec3::new(-0.2, 0.2, 0.12))),
        ],
        ground: true,
    };
    let mut s = SceneBatch::build(&lib, vec![env], 0).unwrap();
    s.set_env_qpos(0, &[0.4, -0.6, 0.9]).unwrap();
    s.refresh_all_link_poses();
    s
}

pub fn golden_camera() -> CameraConfig {
    CameraConfig::looking_at("golden", 128, 96, 0.9, Vec3::new(1.4, 0.9, 1.0), Vec3::new(0.15, 0.0, 0.15))
}
