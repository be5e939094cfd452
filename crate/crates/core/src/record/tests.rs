use super::*;
use crate::envs::Environment;
use crate::tasks::scripted_solution;

fn reach_demo(episodes: usize, keep_states: bool) -> Trajectory {
    let mut cfg = RecordConfig::new("ReachPose", 3, episodes);
    cfg.overrides.control_mode = Some(ControlMode::PdJointPos);
    cfg.source = "scripted".into();
    cfg.keep_states = keep_states;
    record(&cfg, scripted_solution("ReachPose").unwrap().as_mut()).unwrap()
}

#[test]
fn save_load_round_trip() {
    let t = reach_demo(2, true);
    let dir = tempfile::tempdir().unwrap();
    t.save(dir.path()).unwrap();
    let back = Trajectory::load(dir.path()).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.content_digest(), t.content_digest());
    assert_eq!(t.episodes[0].states.rows, t.episodes[0].len() + 1);
    assert_eq!(t.episodes[0].actions.len(), t.episodes[0].len() * 3);
}

#[test]
fn replay_is_bitwise() {
    let t = reach_demo(3, true);
    let a = replay(&t, &ReplayOptions::default()).unwrap();
    let b = replay(&t, &ReplayOptions::default()).unwrap();
    assert_eq!(a.content_digest(), t.content_digest());
    assert_eq!(a.content_digest(), b.content_digest());
    let dir = tempfile::tempdir().unwrap();
    let (da, db) = (dir.path().join("a"), dir.path().join("b"));
    a.save(&da).unwrap();
    t.save(&db).unwrap();
    for entry in std::fs::read_dir(&da).unwrap() {
        let name = entry.unwrap().file_name();
        if name != "manifest.json" {
            assert_eq!(std::fs::read(da.join(&name)).unwrap(), std::fs::read(db.join(&name)).unwrap());
        }
    }
}

#[test]
fn stored_flags_match_a_fresh_evaluation() {
    let t = reach_demo(3, false);
    assert!(t.episodes.iter().all(|e| e.states.rows == 1));
    for ep in &t.episodes {
        let env = make_task_with("ReachPose", 1, t.header.seed, &t.header.overrides).unwrap();
        let mut w = EvalWrapper::new(env);
        let d = t.header.action_dim;
        let mut step = 0;
        let m = w
            .run_episode(ep.seed, |_, _| {
                step += 1;
                ep.actions[(step - 1) * d..step * d].to_vec()
            })
            .unwrap();
        assert_eq!(m[0], ep.metrics);
        assert_eq!(m[0], metrics_from_steps(&ep.reward, &ep.success, &ep.fail));
    }
    assert!(t.episodes.iter().all(|e| e.metrics.success_once));
}

#[test]
fn rgbd_regeneration_leaves_states_alone() {
    let mut cfg = RecordConfig::new("ReachPose", 3, 2);
    cfg.overrides.cameras = Some("2x40x30".into());
    let t = record(&cfg, scripted_solution("ReachPose").unwrap().as_mut()).unwrap();
    let r = replay(&t, &ReplayOptions { obs_mode: Some(ObsMode::Rgbd), ..Default::default() }).unwrap();
    assert_eq!(r.header.obs_mode, ObsMode::Rgbd);
    assert_eq!(r.header.cameras.len(), 2);
    for (a, b) in t.episodes.iter().zip(&r.episodes) {
        assert_eq!(a.states, b.states);
        assert_eq!(a.obs_state, b.obs_state);
        assert_eq!(b.images.len(), 2);
        for (img, cam) in b.images.iter().zip(&r.header.cameras) {
            assert_eq!((img.camera.as_str(), img.width, img.height, img.frames), (cam.name.as_str(), 40, 30, a.len() + 1));
            assert_eq!(img.rgb.len(), img.frames * 40 * 30 * 3);
            assert_eq!(img.depth.len(), img.frames * 40 * 30);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    r.save(dir.path()).unwrap();
    assert_eq!(Trajectory::load(dir.path()).unwrap(), r);
    let clouds = replay(&t, &ReplayOptions { obs_mode: Some(ObsMode::Pointcloud), ..Default::default() }).unwrap();
    let c = &clouds.episodes[0].clouds[0];
    assert_eq!(c.offsets.len(), t.episodes[0].len() + 2);
    assert_eq!(*c.offsets.last().unwrap() as usize * 6, c.points.len());
    assert_eq!(clouds.episodes[0].states, t.episodes[0].states);
}

#[test]
fn joint_to_ee_conversion_report_is_exact() {
    let t = reach_demo(6, true);
    let c = replay(&t, &ReplayOptions { control_mode: Some(ControlMode::PdEeDeltaPose), ..Default::default() }).unwrap();
    assert_eq!(c.header.controllers["robot"].mode, ControlMode::PdEeDeltaPose);
    assert_eq!(c.header.action_dim, 6);
    let env = make_task_with("ReachPose", 1, c.header.seed, &c.header.overrides).unwrap();
    let mut preserved = 0;
    for (src, ep) in t.episodes.iter().zip(&c.episodes) {
        let r = ep.conversion.as_ref().unwrap();
        let errs = ee_errors(&env, &src.states, &ep.states).unwrap();
        assert_eq!(r.max_pos_error, Some(errs.iter().map(|e| e.0).fold(0.0, f64::max)));
        assert_eq!(r.max_rot_error, Some(errs.iter().map(|e| e.1).fold(0.0, f64::max)));
        assert_eq!(r.final_pos_error, Some(errs.last().unwrap().0));
        assert_eq!(r.max_residual, ep.residual.iter().copied().fold(0.0, f64::max));
        assert_eq!(r.flagged, r.max_residual > r.residual_bound);
        preserved += r.success_preserved as usize;
        println!("final {:.5} m {:.5} rad residual {:.3}", r.final_pos_error.unwrap(), r.final_rot_error.unwrap(), r.max_residual);
    }
    assert!(preserved >= 5, "{preserved}/6");
    let dir = tempfile::tempdir().unwrap();
    c.save(dir.path()).unwrap();
    assert_eq!(Trajectory::load(dir.path()).unwrap(), c);
}

#[test]
fn mismatches_are_refused() {
    let t = reach_demo(1, true);
    let mut v = t.clone();
    v.header.engine_version = "0.0.0-other".into();
    assert!(matches!(replay(&v, &ReplayOptions::default()), Err(RecordError::Version { .. })));
    let mut l = t.clone();
    l.header.layout_hash = "deadbeef".into();
    assert!(matches!(replay(&l, &ReplayOptions::default()), Err(RecordError::Layout { .. })));
    let mut a = t.clone();
    a.episodes[0].actions[12] += 0.25;
    assert!(matches!(replay(&a, &ReplayOptions::default()), Err(RecordError::Diverged { episode: 0, step: 5 })));
    let mut s = t.clone();
    s.episodes[0].seed += 1;
    assert!(matches!(replay(&s, &ReplayOptions::default()), Err(RecordError::InitialState { episode: 0 })));
    let thin = reach_demo(1, false);
    let conv = ReplayOptions { control_mode: Some(ControlMode::PdEeDeltaPose), ..Default::default() };
    assert!(matches!(replay(&thin, &conv), Err(RecordError::MissingStates { episode: 0 })));

    let dir = tempfile::tempdir().unwrap();
    v.save(dir.path()).unwrap();
    let err = Trajectory::load(dir.path()).unwrap_err();
    assert!(matches!(err, RecordError::Version { .. }) && err.to_string().contains("manifest.json"));
    let missing = dir.path().join("nope");
    let err = Trajectory::load(&missing).unwrap_err();
    assert!(err.to_string().contains("nope"), "{err}");
    t.save(dir.path()).unwrap();
    std::fs::write(dir.path().join("ep0000.reward.bin"), [0u8; 3]).unwrap();
    let err = Trajectory::load(dir.path()).unwrap_err();
    assert!(matches!(err, RecordError::Format { .. }) && err.to_string().contains("ep0000.reward.bin"));
}

#[test]
fn env_time_limit_sets_length() {
    let mut cfg = RecordConfig::new("PushCube", 0, 1);
    cfg.overrides.time_limit = Some(12);
    let t = record(&cfg, scripted_solution("PushCube").unwrap().as_mut()).unwrap();
    let env = make_task_with("PushCube", 1, 0, &cfg.overrides).unwrap();
    assert_eq!(t.episodes[0].len(), env.time_limit());
    assert_eq!(t.episodes[0].obs_state.len(), 13 * env.state_dim());
}
