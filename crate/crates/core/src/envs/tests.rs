use super::*;
use crate::assets::{revolute_chain, Shape};
use crate::controllers::ControlMode;
use crate::pose::{Pose, Vec3};
use crate::scene::{ActorDesc, ArticulationDesc};
use proptest::prelude::*;
use rand::Rng;

/// Replays fixed success/fail flags; env `i` uses `flags[i]`.
struct FlagTask {
    flags: Vec<Vec<(bool, bool)>>,
    limit: usize,
    t: Vec<usize>,
}

impl Task for FlagTask {
    fn name(&self) -> &str {
        "Flags"
    }
    fn time_limit(&self) -> usize {
        self.limit
    }
    fn obs_names(&self) -> Vec<String> {
        vec!["q".into(), "qd".into(), "ball_x".into()]
    }
    fn reset_env(&mut self, scene: &mut SceneBatch, env: usize) {
        self.t[env] = 0;
        let x = scene.rng(env).gen_range(-0.5..0.5);
        scene.set_env_qpos(env, &[x]).unwrap();
    }
    fn observe(&self, scene: &SceneBatch, env: usize, out: &mut [f64]) {
        out[0] = scene.env_qpos(env)[0];
        out[1] = scene.env_qvel(env)[0];
        out[2] = scene.env_actor_poses(env)[0].translation.x;
    }
    fn post_step(&mut self, scene: &mut SceneBatch, env: usize) -> Evaluation {
        let f = &self.flags[env % self.flags.len()];
        let (success, fail) = f[self.t[env].min(f.len() - 1)];
        self.t[env] += 1;
        Evaluation { success, fail, reward: scene.env_qpos(env)[0] + self.t[env] as f64 }
    }
    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}

fn build(n: usize) -> TaskBuild {
    let env = EnvDescriptor {
        articulations: vec![ArticulationDesc::new("arm", "arm").at(Pose::from_translation(Vec3::new(0.0, 0.0, 0.5)))],
        actors: vec![ActorDesc::dynamic("ball", Shape::Sphere { radius: 0.05 }, 1.0, Pose::from_translation(Vec3::new(0.3, 0.0, 0.3)))],
        ground: true,
    };
    TaskBuild {
        library: TemplateLibrary::from([("arm".to_string(), revolute_chain("arm", 1, 0.3, 1.0).unwrap())]),
        descriptors: vec![env; n],
        agents: BTreeMap::from([("robot".to_string(), ControllerConfig::new(ControlMode::PdJointPos, "arm"))]),
        sim: SimConfig::default(),
        cameras: vec![CameraConfig::looking_at("cam", 32, 24, 1.0, Vec3::new(1.0, 1.0, 1.0), Vec3::zeros())],
    }
}

fn flag_env(flags: Vec<Vec<(bool, bool)>>, limit: usize, n: usize, mode: ObsMode) -> VecEnv {
    VecEnv::new(Box::new(FlagTask { flags, limit, t: vec![0; n] }), build(n), 3, mode).unwrap()
}

fn seq(bits: &[u8]) -> Vec<(bool, bool)> {
    bits.iter().map(|b| (*b & 1 != 0, *b & 2 != 0)).collect()
}

#[test]
fn truncation_exactly_at_limit() {
    let mut e = flag_env(vec![seq(&[0; 10])], 5, 1, ObsMode::State);
    for t in 1..=5 {
        let r = e.step(&[0.0]).unwrap();
        assert_eq!(r.truncated[0], t == 5, "step {t}");
        assert!(!r.terminated[0]);
        if t == 5 {
            assert_eq!(r.info[0].episode.unwrap().length, 5);
            assert!(r.info[0].final_obs.is_some());
        }
    }
    assert_eq!(e.elapsed(0), 0);
}

#[test]
fn early_termination_on_success() {
    let mut e = flag_env(vec![seq(&[0, 0, 1, 0])], 10, 1, ObsMode::State);
    let t: Vec<bool> = (0..3).map(|_| e.step(&[0.0]).unwrap().terminated[0]).collect();
    assert_eq!(t, vec![false, false, true]);
}

#[test]
fn fail_wins_but_both_latch() {
    let mut e = flag_env(vec![seq(&[3, 0])], 10, 1, ObsMode::State);
    let r = e.step(&[0.0]).unwrap();
    assert!(r.terminated[0]);
    let m = r.info[0].episode.unwrap();
    assert!(m.success_once && m.fail_once);
}

#[test]
fn eval_wrapper_never_terminates_early() {
    let mut w = EvalWrapper::new(flag_env(vec![seq(&[0, 0, 1, 0, 0])], 5, 1, ObsMode::State));
    w.reset(Some(0), None).unwrap();
    let mut steps = 0;
    loop {
        let r = w.step(&[0.0]).unwrap();
        steps += 1;
        assert!(!r.terminated[0]);
        if r.truncated[0] {
            let m = r.info[0].episode.unwrap();
            assert!(m.success_once && !m.success_at_end);
            break;
        }
    }
    assert_eq!(steps, 5);
    let mut w = EvalWrapper::new(flag_env(vec![seq(&[0, 0, 0, 0, 1])], 5, 1, ObsMode::State));
    let m = w.run_episode(0, |_, _| vec![0.0]).unwrap()[0];
    assert!(m.success_once && m.success_at_end);
}

#[test]
fn metrics_truth_table_is_exhaustive() {
    for t in 1..=8usize {
        for s in 0..1u32 << t {
            for f in 0..1u32 << t {
                let sb: Vec<bool> = (0..t).map(|i| s >> i & 1 == 1).collect();
                let fb: Vec<bool> = (0..t).map(|i| f >> i & 1 == 1).collect();
                let r: Vec<f64> = (0..t).map(|i| i as f64 * 0.5 - 1.0).collect();
                let m = metrics_from_steps(&r, &sb, &fb);
                assert_eq!(m.success_once, s != 0);
                assert_eq!(m.success_at_end, sb[t - 1]);
                assert_eq!(m.fail_once, f != 0);
                assert_eq!(m.fail_at_end, fb[t - 1]);
                assert_eq!(m.length, t);
                assert_eq!(m.episode_return, r.iter().sum::<f64>());
            }
        }
    }
}

#[test]
fn wrapper_matches_truth_table_in_batch() {
    for t in 1..=8usize {
        let n = 1usize << t;
        let flags: Vec<Vec<(bool, bool)>> = (0..n)
            .map(|i| (0..t).map(|k| (i >> k & 1 == 1, (i.reverse_bits() >> (usize::BITS as usize - t)) >> k & 1 == 1)).collect())
            .collect();
        let mut w = EvalWrapper::new(flag_env(flags.clone(), t, n, ObsMode::State));
        let metrics = w.run_episode(1, |e, _| vec![0.0; e.num_envs()]).unwrap();
        for (i, m) in metrics.iter().enumerate() {
            let s: Vec<bool> = flags[i].iter().map(|f| f.0).collect();
            let f: Vec<bool> = flags[i].iter().map(|f| f.1).collect();
            assert_eq!(m.length, t);
            assert_eq!((m.success_once, m.success_at_end), (s.iter().any(|x| *x), s[t - 1]));
            assert_eq!((m.fail_once, m.fail_at_end), (f.iter().any(|x| *x), f[t - 1]));
        }
    }
}

#[test]
fn jsonl_sink_has_exact_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let mut w = EvalWrapper::new(flag_env(vec![seq(&[0, 1])], 2, 2, ObsMode::State)).with_sink(&path).unwrap();
    w.run_episode(9, |_, _| vec![0.0, 0.0]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    assert_eq!(keys, ["env_id", "fail_at_end", "fail_once", "length", "return", "seed", "success_at_end", "success_once"]);
    assert_eq!(v["seed"], 9);
}

#[test]
fn reset_is_seeded_and_masked() {
    let mut e = flag_env(vec![seq(&[0])], 10, 2, ObsMode::State);
    let a = e.reset(Some(5), None).unwrap();
    let b = e.reset(Some(5), None).unwrap();
    assert_eq!(a, b);
    e.step(&[0.3, -0.2]).unwrap();
    let before = e.scene.get_state().env_slice(1);
    e.reset(Some(6), Some(&[true, false])).unwrap();
    assert_eq!(e.scene.get_state().env_slice(1), before);
    assert!(matches!(e.step(&[f64::NAN, 0.0]), Err(EnvError::NonFiniteAction)));
    assert!(matches!(e.step(&[0.0]), Err(EnvError::ActionShape { .. })));
}

#[test]
fn obs_mode_does_not_change_dynamics() {
    let mut s = flag_env(vec![seq(&[0])], 50, 2, ObsMode::State);
    let mut r = flag_env(vec![seq(&[0])], 50, 2, ObsMode::Rgbd);
    for k in 0..20 {
        let a = [(k as f64 * 0.3).sin(), (k as f64 * 0.2).cos()];
        let rs = s.step(&a).unwrap();
        let rr = r.step(&a).unwrap();
        assert_eq!(rs.obs.state, rr.obs.state);
        assert_eq!(rr.obs.frames.len(), 1);
        assert_eq!(rr.obs.frames[0].rgb.len(), 2 * 32 * 24 * 3);
    }
    assert_eq!(s.scene.get_state(), r.scene.get_state());
    assert_eq!(s.obs_layout_hash(), r.obs_layout_hash());
    r.set_obs_mode(ObsMode::Pointcloud);
    assert_eq!(r.observe().unwrap().clouds.len(), 1);
}

#[test]
fn two_agents_flatten() {
    let agents: AgentSpec = vec![("a".into(), 7), ("b".into(), 2)];
    let map = BTreeMap::from([("a".to_string(), (0..7).map(f64::from).collect()), ("b".to_string(), vec![7.0, 8.0])]);
    let flat = flatten_action_map(&map, &agents, 1).unwrap();
    assert_eq!(flat, (0..9).map(f64::from).collect::<Vec<_>>());
    assert_eq!(unflatten_actions(&flat, &agents, 1).unwrap(), map);
    let single: AgentSpec = vec![("a".into(), 3)];
    let m = BTreeMap::from([("a".to_string(), vec![1.0, 2.0, 3.0])]);
    assert_eq!(flatten_action_map(&m, &single, 1).unwrap(), vec![1.0, 2.0, 3.0]);
    assert!(matches!(flatten_action_map(&BTreeMap::new(), &single, 1), Err(EnvError::MissingAgent(_))));
    let extra = BTreeMap::from([("a".to_string(), vec![0.0; 3]), ("z".to_string(), vec![])]);
    assert!(matches!(flatten_action_map(&extra, &single, 1), Err(EnvError::UnknownAgent(_))));
}

proptest! {
    #[test]
    fn action_map_round_trip(dims in prop::collection::vec(1usize..5, 1..4), n in 1usize..4, seed in any::<u64>()) {
        let agents: AgentSpec = dims.iter().enumerate().map(|(i, d)| (format!("agent{i}"), *d)).collect();
        let mut v = seed;
        let mut next = || { v = v.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (v >> 11) as f64 / (1u64 << 53) as f64 };
        let map: BTreeMap<String, Vec<f64>> = agents.iter().map(|(a, d)| (a.clone(), (0..n * d).map(|_| next()).collect())).collect();
        let flat = flatten_action_map(&map, &agents, n).unwrap();
        prop_assert_eq!(unflatten_actions(&flat, &agents, n).unwrap(), map);
    }
}
