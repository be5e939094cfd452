//! Damped least-squares steps toward a goal pose on a 6-joint chain.

use batchsim::assets::revolute_chain;
use batchsim::kinematics::{forward_kinematics, ik_delta, twist_between, DEFAULT_IK_LAMBDA};
use batchsim::model::ArticulationModel;
use batchsim::pose::Pose;

fn main() {
    let m = ArticulationModel::new(revolute_chain("arm", 6, 0.3, 1.0).unwrap()).unwrap();
    let ee = m.num_links() - 1;
    let goal = forward_kinematics(&m, &Pose::identity(), &[0.4, -0.3, 0.5, 0.2, -0.6, 0.1])[ee];
    let mut q = vec![0.1; 6];
    for it in 0..30 {
        let poses = forward_kinematics(&m, &Pose::identity(), &q);
        let twist = twist_between(&poses[ee], &goal);
        if it % 5 == 0 {
            println!("iter {it:>2}: error {:.2e}", twist.norm());
        }
        let dq = ik_delta(&m, &poses, ee, &twist, DEFAULT_IK_LAMBDA).unwrap();
        q.iter_mut().zip(dq.iter()).for_each(|(a, d)| *a += d);
    }
}
