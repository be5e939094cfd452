mod common;

use batchsim::assets::{revolute_chain, TemplateBuilder};
use batchsim::kinematics::{dls_solve, forward_kinematics, ik_delta, jacobian, scene_ik_delta, scene_jacobian, twist_between};
use batchsim::model::ArticulationModel;
use batchsim::pose::Pose;
use batchsim::scene::{ArticulationDesc, EnvDescriptor, SceneBatch, TemplateLibrary};
use common::oracles::{fk_matrices, random_tree};
use nalgebra::{Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    for case in 0..1000 {
        let t = random_tree(&mut rng, 1 + case % 6);
        let m = ArticulationModel::new(t.clone()).unwrap();
        let q: Vec<f64> = (0..m.dof()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let link = rng.gen_range(0..m.num_links());
        let j = jacobian(&m, &forward_kinematics(&m, &Pose::identity(), &q), link).unwrap();
        for d in 0..m.dof() {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[d] += h;
            qm[d] -= h;
            let pp = fk_matrices(&t, &Pose::identity(), &qp)[link];
            let pm = fk_matrices(&t, &Pose::identity(), &qm)[link];
            for r in 0..3 {
                let fd = (pp[(r, 3)] - pm[(r, 3)]) / (2.0 * h);
                assert!((fd - j[(r, d)]).abs() < 1e-5, "case {case} dof {d} row {r}: {fd} vs {}", j[(r, d)]);
            }
        }
    }
}

#[test]
fn dls_equals_normal_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..500 {
        let t = random_tree(&mut rng, 1 + case % 7);
        let m = ArticulationModel::new(t).unwrap();
        let q: Vec<f64> = (0..m.dof()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let j = jacobian(&m, &forward_kinematics(&m, &Pose::identity(), &q), m.num_links() - 1).unwrap();
        let twist = Vector6::from_fn(|_, _| rng.gen_range(-0.1..0.1));
        let lambda = 0.05;
        let a: Matrix6<f64> = &j * j.transpose() + Matrix6::identity() * lambda * lambda;
        let oracle = j.transpose() * a.try_inverse().unwrap() * twist;
        let dq = dls_solve(&j, &twist, lambda).unwrap();
        assert!((dq - oracle).amax() < 1e-9, "case {case}");
    }
}

#[test]
fn small_ik_steps_reduce_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = ArticulationModel::new(revolute_chain("arm", 6, 0.3, 1.0).unwrap()).unwrap();
    let ee = m.num_links() - 1;
    for case in 0..1000 {
        let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let goal_q: Vec<f64> = q.iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
        let now = forward_kinematics(&m, &Pose::identity(), &q);
        let goal = forward_kinematics(&m, &Pose::identity(), &goal_q)[ee];
        let twist = twist_between(&now[ee], &goal);
        let dq = ik_delta(&m, &now, ee, &twist, 0.05).unwrap();
        let q2: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, b)| a + b).collect();
        let after = forward_kinematics(&m, &Pose::identity(), &q2)[ee];
        let e0 = twist.norm();
        let e1 = twist_between(&after, &goal).norm();
        assert!(e1 <= e0, "case {case}: {e1} > {e0}");
    }
}

#[test]
fn fk_equals_compose_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let t = random_tree(&mut rng, 4);
        let m = ArticulationModel::new(t.clone()).unwrap();
        let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let poses = forward_kinematics(&m, &Pose::identity(), &q);
        for (j, joint) in t.joints.iter().enumerate() {
            let qj = m.dof_of_joint[j].map_or(0.0, |d| q[d]);
            let composed = poses[joint.parent_link] * joint.transform(qj);
            let c = poses[joint.child_link];
            assert!((composed.translation - c.translation).amax() < 1e-12);
            assert!(composed.angle_to(&c) < 1e-7);
        }
    }
}

#[test]
fn scene_jacobian_is_padded_and_matches_per_env() {
    let lib = TemplateLibrary::from([
        ("two".to_string(), revolute_chain("two", 2, 0.3, 1.0).unwrap()),
        ("four".to_string(), revolute_chain("four", 4, 0.3, 1.0).unwrap()),
        ("empty".to_string(), TemplateBuilder::new("empty", batchsim::assets::LinkSpec::massless("base")).build().unwrap()),
    ]);
    let env = |t: &str| EnvDescriptor { articulations: vec![ArticulationDesc::new("arm", t)], ..Default::default() };
    let mut s = SceneBatch::build(&lib, vec![env("two"), env("four"), EnvDescriptor::default()], 0).unwrap();
    s.set_env_qpos(0, &[0.3, -0.2]).unwrap();
    s.set_env_qpos(1, &[0.1, 0.5, -0.7, 0.2]).unwrap();
    s.refresh_all_link_poses();
    let jb = scene_jacobian(&s, "arm", "link1").unwrap();
    assert_eq!((jb.num_envs, jb.dof_max, jb.data.len()), (3, 4, 3 * 6 * 4));
    assert_eq!(&jb.mask[..4], &[true, true, false, false]);
    assert!(jb.mask[8..].iter().all(|m| !m));
    for env in 0..2 {
        let slot = &s.layout().articulations[env][0];
        let own = jacobian(&slot.model, s.env_link_poses(env), 2).unwrap();
        for r in 0..6 {
            for d in 0..4 {
                let expected = if d < slot.model.dof() { own[(r, d)] } else { 0.0 };
                assert_eq!(jb.get(env, r, d), expected);
            }
        }
    }
    let twists = vec![Vector6::new(0.01, 0.0, 0.0, 0.0, 0.0, 0.0); 3];
    let dq = scene_ik_delta(&s, "arm", "link1", &twists, 0.05).unwrap();
    assert_eq!(dq[0][2..], [0.0, 0.0]);
    assert!(dq[2].iter().all(|v| *v == 0.0));
    assert!(dq[1].iter().any(|v| *v != 0.0));
    assert!(scene_jacobian(&s, "arm", "nope").is_err());
}
