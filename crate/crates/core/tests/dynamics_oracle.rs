mod common;

use batchsim::dynamics::aba_forward_dynamics;
use batchsim::model::ArticulationModel;
use batchsim::pose::{Pose, Vec3};
use common::oracles::{forward_dynamics_oracle, random_tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn aba_matches_crba_rnea_on_random_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = Vec3::new(0.0, 0.0, -9.81);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let dof = 1 + case % 5;
        let t = random_tree(&mut rng, dof);
        let model = ArticulationModel::new(t.clone()).unwrap();
        let base = Pose::from_axis_angle(Vec3::new(0.1, -0.2, 0.3), Vec3::new(0.2, 0.1, -0.3));
        let q: Vec<f64> = (0..dof).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let qd: Vec<f64> = (0..dof).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let tau: Vec<f64> = (0..dof).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let got = aba_forward_dynamics(&model, &base, &q, &qd, &tau, None, &g);
        let want = forward_dynamics_oracle(&t, &base, &q, &qd, &tau, &g);
        for d in 0..dof {
            let err = (got[d] - want[d]).abs() / want[d].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-8, "worst error {worst}");
}
