//! Scripted solutions of the manipulation tasks through the eval wrapper.

use batchsim::envs::EvalWrapper;
use batchsim::tasks::{make_task, scripted_solution};
use serde_json::json;

fn main() {
    for task in ["ReachPose", "PushCube", "TableDraw", "HandoverReach"] {
        let mut policy = scripted_solution(task).unwrap();
        let mut w = EvalWrapper::new(make_task(task, 16, 0, &json!(null)).unwrap());
        let m = w.run_episode(0, |e, o| policy.act(e, o)).unwrap();
        let rate = |f: fn(&batchsim::envs::EpisodeMetrics) -> bool| m.iter().filter(|x| f(x)).count() as f64 / m.len() as f64;
        println!("{task:<14} success_once {:.2}  success_at_end {:.2}", rate(|x| x.success_once), rate(|x| x.success_at_end));
    }
}
