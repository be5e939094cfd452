//! Composing, inverting and batching rigid poses.

use batchsim::pose::{Pose, PoseBatch, Vec3};

fn main() {
    let base = Pose::from_rpy(Vec3::new(0.5, 0.0, 0.2), [0.0, 0.0, std::f64::consts::FRAC_PI_2]);
    let tool = Pose::from_translation(Vec3::new(0.1, 0.0, 0.0));
    let world_tool = base * tool;
    println!("tool in world: {:?} wxyz {:?}", world_tool.translation.as_slice(), world_tool.wxyz());
    let back = world_tool.inverse().compose(&base);
    println!("tool^-1 from base: {:?}", back.translation.as_slice());

    let batch = PoseBatch::new(vec![base, tool, world_tool]).unwrap();
    let moved = batch.compose(&PoseBatch::single(Pose::from_translation(Vec3::z()))).unwrap();
    for p in moved.positions() {
        println!("{p:?}");
    }
}
