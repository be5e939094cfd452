//! Records scripted joint-position demos, replays them bitwise, then
//! converts them to end-effector delta control.

use batchsim::controllers::ControlMode;
use batchsim::record::{record, replay, RecordConfig, ReplayOptions};
use batchsim::tasks::scripted_solution;

fn main() {
    let mut cfg = RecordConfig::new("ReachPose", 0, 5);
    cfg.overrides.control_mode = Some(ControlMode::PdJointPos);
    cfg.source = "scripted".into();
    let demos = record(&cfg, scripted_solution("ReachPose").unwrap().as_mut()).unwrap();
    let again = replay(&demos, &ReplayOptions::default()).unwrap();
    println!("bitwise replay: {}", again.content_digest() == demos.content_digest());
    let converted = replay(&demos, &ReplayOptions { control_mode: Some(ControlMode::PdEeDeltaPose), ..Default::default() }).unwrap();
    for (k, ep) in converted.episodes.iter().enumerate() {
        let c = ep.conversion.as_ref().unwrap();
        println!(
            "episode {k}: final EE error {:.2e} m, success {} -> {}, max residual {:.2}",
            c.final_pos_error.unwrap(),
            c.success_before,
            c.success_after,
            c.max_residual
        );
    }
}
