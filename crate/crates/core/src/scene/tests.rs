use super::*;
use crate::assets::revolute_chain;
use crate::kinematics::forward_kinematics;

fn library() -> TemplateLibrary {
    let mut lib = TemplateLibrary::new();
    for d in [2, 5] {
        lib.insert(format!("chain{d}"), revolute_chain(&format!("chain{d}"), d, 0.4, 1.0).unwrap());
    }
    lib
}

fn chain_env(template: &str) -> EnvDescriptor {
    EnvDescriptor { articulations: vec![ArticulationDesc::new("arm", template)], actors: vec![], ground: true }
}

fn cube(name: &str, x: f64) -> ActorDesc {
    ActorDesc::dynamic(name, Shape::Box { half_extents: [0.02; 3] }, 0.1, Pose::from_translation(Vec3::new(x, 0.0, 0.02)))
}

#[test]
fn padding_follows_max_dof() {
    let s = SceneBatch::build(&library(), vec![chain_env("chain2"), chain_env("chain5")], 0).unwrap();
    assert_eq!(s.dof_max(), 5);
    assert_eq!(s.buffers().qpos.len(), 10);
    assert_eq!(
        s.dof_mask(),
        vec![true, true, false, false, false, true, true, true, true, true]
    );
}

#[test]
fn actor_masks_follow_counts() {
    let descs = [1, 3, 2]
        .iter()
        .map(|k| EnvDescriptor {
            articulations: vec![],
            actors: (0..*k).map(|i| cube(&format!("obj{i}"), i as f64 * 0.1)).collect(),
            ground: true,
        })
        .collect();
    let s = SceneBatch::build(&library(), descs, 0).unwrap();
    let m = s.actor_mask();
    let rows: Vec<usize> = m.chunks(3).map(|r| r.iter().filter(|b| **b).count()).collect();
    assert_eq!(rows, vec![1, 3, 2]);
    let v = s.actor("obj2").unwrap();
    assert_eq!(v.mask(), vec![false, true, false]);
    assert_eq!(v.pose(&s).values[0], Pose::identity());
}

#[test]
fn unknown_template_names_env() {
    let err = SceneBatch::build(&library(), vec![chain_env("chain2"), chain_env("nope")], 0).unwrap_err();
    assert_eq!(err, SceneError::UnknownTemplate { env: 1, template: "nope".into() });
}

#[test]
fn homogeneous_batch_stacks_single_builds() {
    let lib = library();
    let mut d = chain_env("chain5");
    d.articulations[0].init_qpos = Some(vec![0.1, -0.2, 0.3, 0.0, 0.5]);
    let batch = SceneBatch::build(&lib, vec![d.clone(); 3], 0).unwrap();
    let single = SceneBatch::build(&lib, vec![d], 0).unwrap();
    for env in 0..3 {
        assert_eq!(batch.env_qpos(env), single.env_qpos(0));
        assert_eq!(batch.env_link_poses(env), single.env_link_poses(0));
    }
}

#[test]
fn views_resolve_paths() {
    let s = SceneBatch::build(&library(), vec![chain_env("chain2"), chain_env("chain5")], 0).unwrap();
    let j = s.joint("arm/joint1").unwrap();
    assert_eq!(j.qpos(&s).values, vec![0.0, 0.0]);
    let j4 = s.joint("arm/joint4").unwrap();
    assert_eq!(j4.mask(), vec![false, true]);
    match s.view("arm/jiont1") {
        Err(SceneError::Lookup { suggestions, .. }) => assert_eq!(suggestions[0], "arm/joint1"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(s.link("arm/joint1"), Err(SceneError::WrongKind { .. })));
}

#[test]
fn link_pose_matches_fk() {
    let lib = library();
    let mut d = chain_env("chain5");
    d.articulations[0].base_pose = Pose::from_rpy(Vec3::new(0.1, 0.2, 0.3), [0.0, 0.0, 0.4]);
    let mut s = SceneBatch::build(&lib, vec![d.clone()], 0).unwrap();
    let q = vec![0.3, -0.5, 1.0, 0.2, -0.1];
    s.articulation("arm").unwrap().set_qpos(&mut s, std::slice::from_ref(&q), None).unwrap();
    let model = ArticulationModel::new(lib["chain5"].clone()).unwrap();
    let oracle = forward_kinematics(&model, &d.articulations[0].base_pose, &q);
    let got = s.link("arm/link4").unwrap().pose(&s).values[0];
    assert_eq!(got, oracle[5]);
}

#[test]
fn heterogeneous_joint_view_matches_scalar_reads() {
    let lib = library();
    let mut a = chain_env("chain2");
    a.articulations[0].init_qpos = Some(vec![0.5, 0.6]);
    let mut b = chain_env("chain5");
    b.articulations[0].init_qpos = Some(vec![1.0, 1.1, 1.2, 1.3, 1.4]);
    let s = SceneBatch::build(&lib, vec![a, b], 0).unwrap();
    let v = s.joint("arm/joint1").unwrap();
    assert_eq!(v.qpos(&s).values, vec![s.env_qpos(0)[1], s.env_qpos(1)[1]]);
}

#[test]
fn writes_never_touch_masked_slots() {
    let mut s = SceneBatch::build(&library(), vec![chain_env("chain2"), chain_env("chain5")], 0).unwrap();
    s.articulation("arm").unwrap().set_qpos(&mut s, &[vec![1.0, 2.0], vec![1.0; 5]], None).unwrap();
    s.joint("arm/joint4").unwrap().set_qpos(&mut s, &[9.0, 9.0], None).unwrap();
    assert_eq!(&s.buffers().qpos[2..5], &[0.0, 0.0, 0.0]);
    assert_eq!(s.buffers().qpos[9], 9.0);
}

#[test]
fn state_round_trip_is_bit_exact() {
    let mut s = SceneBatch::build(
        &library(),
        vec![
            EnvDescriptor { actors: vec![cube("a", 0.0)], ..chain_env("chain2") },
            EnvDescriptor { actors: vec![cube("a", 0.3), cube("b", 0.5)], ..chain_env("chain5") },
        ],
        7,
    )
    .unwrap();
    s.set_env_qpos(1, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
    s.set_actor_pose(1, 1, Pose::from_rpy(Vec3::new(0.1, 0.2, 0.3), [0.3, 0.2, 0.1])).unwrap();
    let before = s.buffers().clone();
    let snap = s.get_state();
    s.set_state(&snap, None).unwrap();
    assert_eq!(s.buffers(), &before);

    let restored = StateSnapshot::from_bytes(&snap.to_bytes()).unwrap();
    assert_eq!(restored, snap);

    let mut other = s.get_state();
    other.qpos.iter_mut().for_each(|v| *v += 1.0);
    s.set_state(&other, Some(&[true, false])).unwrap();
    assert_eq!(&s.buffers().qpos[5..], &before.qpos[5..]);
    assert_eq!(s.buffers().qpos[0], before.qpos[0] + 1.0);
}

#[test]
fn layout_mismatch_reports_hashes() {
    let a = SceneBatch::build(&library(), vec![chain_env("chain2")], 0).unwrap();
    let mut b = SceneBatch::build(&library(), vec![chain_env("chain5")], 0).unwrap();
    assert!(matches!(b.set_state(&a.get_state(), None), Err(StateError::LayoutMismatch { .. })));
}

#[test]
fn rng_streams_are_per_env() {
    use rand::Rng;
    let lib = library();
    let mut a = SceneBatch::build(&lib, vec![chain_env("chain2"); 3], 42).unwrap();
    let mut b = SceneBatch::build(&lib, vec![chain_env("chain2"); 3], 42).unwrap();
    let _: f64 = a.rng(0).gen();
    assert_eq!(a.rng(2).gen::<u64>(), b.rng(2).gen::<u64>());
    assert_ne!(a.rng(1).gen::<u64>(), b.rng(2).gen::<u64>());
}

#[test]
fn segmentation_ids_are_shared_across_envs() {
    let s = SceneBatch::build(&library(), vec![chain_env("chain2"), chain_env("chain5")], 0).unwrap();
    let l = s.layout();
    assert_eq!(l.link_seg[1], l.link_seg[l.link_max + 1]);
    assert_eq!(l.link_seg[4], 0);
    assert_eq!(l.entity_ids["ground"], l.ground_id);
}
