//! Renders a small scene and writes RGB and segmentation PNGs to the
//! directory given as the first argument (default: the temp dir).

use batchsim::assets::{revolute_chain, Shape};
use batchsim::pose::{Pose, Vec3};
use batchsim::render::{pointcloud, render, save_rgb_png, save_seg_png, CameraConfig};
use batchsim::scene::{ActorDesc, ArticulationDesc, EnvDescriptor, SceneBatch, TemplateLibrary};

fn main() {
    let out = std::env::args().nth(1).map_or_else(std::env::temp_dir, Into::into);
    let lib = TemplateLibrary::from([("arm".to_string(), revolute_chain("arm", 3, 0.3, 1.0).unwrap())]);
    let env = EnvDescriptor {
        articulations: vec![ArticulationDesc::new("arm", "arm").at(Pose::from_translation(Vec3::new(0.0, 0.0, 0.2)))],
        actors: vec![ActorDesc::dynamic("ball", Shape::Sphere { radius: 0.1 }, 1.0, Pose::from_translation(Vec3::new(0.3, -0.3, 0.1)))],
        ground: true,
    };
    let scene = SceneBatch::build(&lib, vec![env], 0).unwrap();
    let cam = CameraConfig::looking_at("front", 160, 120, 0.9, Vec3::new(1.4, 0.9, 1.0), Vec3::new(0.15, 0.0, 0.15));
    let frame = &render(&scene, std::slice::from_ref(&cam)).unwrap()[0];
    save_rgb_png(frame, 0, &out.join("front_rgb.png")).unwrap();
    save_seg_png(frame, 0, &out.join("front_seg.png")).unwrap();
    let cloud = &pointcloud(frame, &cam, true)[0];
    println!("{} points; images in {}", cloud.len(), out.display());
}
