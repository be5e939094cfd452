//! The same ReachPose episode start driven through each arm control mode.

use batchsim::controllers::ControlMode;
use batchsim::envs::Environment;
use batchsim::tasks::make_task;
use serde_json::json;

fn main() {
    for mode in [ControlMode::PdJointPos, ControlMode::PdJointDeltaPos, ControlMode::PdEeDeltaPose] {
        let mut env = make_task("ReachPose", 1, 0, &json!({ "control_mode": mode.name() })).unwrap();
        env.reset(Some(0), None).unwrap();
        let dim = env.action_dim();
        let mut action = vec![0.0; dim];
        action[0] = 0.5;
        for _ in 0..30 {
            env.step(&action).unwrap();
        }
        println!("{:<20} action dim {dim}  qpos {:.3?}", mode.name(), env.scene.env_qpos(0));
    }
}
