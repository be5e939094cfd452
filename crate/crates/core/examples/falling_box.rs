//! A box dropped on the ground comes to rest on a four-point manifold.

use batchsim::assets::Shape;
use batchsim::dynamics::{detect_contacts, step, DriveTargets, SimConfig};
use batchsim::pose::{Pose, Vec3};
use batchsim::scene::{ActorDesc, EnvDescriptor, SceneBatch, TemplateLibrary};

fn main() {
    let cube = ActorDesc::dynamic("box", Shape::Box { half_extents: [0.1; 3] }, 1.0, Pose::from_translation(Vec3::new(0.0, 0.0, 0.6)));
    let env = EnvDescriptor { articulations: vec![], actors: vec![cube], ground: true };
    let mut scene = SceneBatch::build(&TemplateLibrary::new(), vec![env], 0).unwrap();
    let cfg = SimConfig::default();
    let drives = DriveTargets::new(&scene);
    for k in 0..=90 {
        if k % 15 == 0 {
            let z = scene.env_actor_poses(0)[0].translation.z;
            println!("t {:.2} s  z {z:.4}  contacts {}", k as f64 / cfg.control_freq as f64, detect_contacts(&scene, &cfg).contacts.len());
        }
        step(&mut scene, &drives, &cfg).unwrap();
    }
}
