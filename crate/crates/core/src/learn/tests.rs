use super::*;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn gae_limits_and_fixture() {
    let r = [1.0, 1.0, 1.0];
    let v = [0.0, 0.0, 0.0];
    let none = [false; 3];
    let (_, ret) = compute_gae(&r, &v, &none, &[0.0], 0.5, 1.0).unwrap();
    assert_eq!(ret, vec![1.75, 1.5, 1.0]);

    let r = [0.3, -1.0, 2.0, 0.5];
    let v = [0.1, 0.7, -0.2, 0.4];
    for lambda in [0.0, 0.5, 1.0] {
        let (adv, _) = compute_gae(&r, &v, &[false, true, false, false], &[9.0, 9.0], 0.0, lambda).unwrap();
        let expected: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - v).collect();
        assert_eq!(adv, expected);
    }
}

#[test]
fn done_cuts_bootstrapping() {
    // two envs, three steps, time-major; env 0 ends at t = 1
    let r = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let v = [0.5, 0.0, 0.5, 0.0, 123.0, 0.0];
    let dones = [false, false, true, false, false, false];
    let (adv, _) = compute_gae(&r, &v, &dones, &[0.0, 0.0], 0.9, 0.8).unwrap();
    // with the cut, the value 123 after the done never reaches t = 1
    assert_eq!(adv[2], 1.0 - 0.5);
    assert_eq!(adv[0], (1.0 + 0.9 * 0.5 - 0.5) + 0.9 * 0.8 * 0.5);
    let mut spoiled = v;
    spoiled[4] = -7.0;
    let (adv2, _) = compute_gae(&r, &spoiled, &dones, &[0.0, 0.0], 0.9, 0.8).unwrap();
    assert_eq!(adv[..4], adv2[..4]);
    assert!(matches!(compute_gae(&r, &v[..5], &dones, &[0.0, 0.0], 0.9, 0.8), Err(LearnError::Shape(_))));
}

proptest! {
    #[test]
    fn normalized_advantages_have_unit_moments(mut a in prop::collection::vec(-1e3f64..1e3, 2..400)) {
        prop_assume!(a.iter().any(|x| (x - a[0]).abs() > 1e-3));
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-10);
        prop_assert!((std - 1.0).abs() < 1e-10);
    }

    #[test]
    fn welford_matches_two_pass(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..60)) {
        let mut w = ObsNormalizer::new(3);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        w.update(&flat[..3]);
        w.update(&flat[3..]);
        let n = rows.len() as f64;
        for j in 0..3 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((w.mean[j] - mean).abs() < 1e-9);
            prop_assert!((w.variance()[j] - var).abs() < 1e-7 * (1.0 + var));
        }
    }
}

fn random_batch(net: &PolicyNet, b: usize, rng: &mut ChaCha8Rng) -> Minibatch {
    let obs: Vec<f64> = (0..b * net.obs_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let f = net.forward(&obs);
    let actions = net.sample(&f, rng);
    let logp = net.log_prob(&f, &actions);
    Minibatch {
        old_log_prob: logp.iter().map(|l| l + rng.gen_range(-0.6..0.6)).collect(),
        advantages: (0..b).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        returns: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        old_values: f.value.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect(),
        obs,
        actions,
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = LossConfig { clip: 0.2, value_clip: 0.3, value_coef: 0.5, entropy_coef: 0.01 };
    for shared in [false, true] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = PolicyNet::new(5, 2, shared, -0.3, &mut rng);
        // move the heads off their near-zero init so every path matters
        for p in net.params.iter_mut() {
            *p += rng.gen_range(-0.2..0.2);
        }
        let mb = random_batch(&net, 300, &mut rng);
        let (_, grad) = ppo_loss(&net, &mb, &cfg);
        let h = 1e-6;
        // every 23rd parameter touches each layer; the last ones are log-std
        let picked: Vec<usize> = (0..grad.len()).step_by(23).chain(grad.len() - 2..grad.len()).collect();
        let fd: Vec<f64> = picked
            .iter()
            .map(|&i| {
                let mut plus = net.clone();
                plus.params[i] += h;
                let mut minus = net.clone();
                minus.params[i] -= h;
                (ppo_loss(&plus, &mb, &cfg).0.loss - ppo_loss(&minus, &mb, &cfg).0.loss) / (2.0 * h)
            })
            .collect();
        let grad: Vec<f64> = picked.iter().map(|&i| grad[i]).collect();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        println!("shared {shared}: relative gradient error {:.3e}", diff / scale);
        assert!(diff / scale < 1e-5, "relative error {}", diff / scale);
    }
}

#[test]
fn clipped_samples_carry_no_policy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = PolicyNet::new(3, 1, false, 0.0, &mut rng);
    let cfg = LossConfig { clip: 0.2, value_clip: 0.2, value_coef: 0.0, entropy_coef: 0.0 };
    let obs = vec![0.1, -0.2, 0.3];
    let f = net.forward(&obs);
    let action = vec![0.4];
    let logp = net.log_prob(&f, &action)[0];
    let case = |log_ratio: f64, adv: f64| {
        let mb = Minibatch {
            obs: obs.clone(),
            actions: action.clone(),
            old_log_prob: vec![logp - log_ratio],
            advantages: vec![adv],
            returns: vec![f.value[0]],
            old_values: vec![f.value[0]],
        };
        ppo_loss(&net, &mb, &cfg).1.iter().map(|g| g.abs()).sum::<f64>()
    };
    // ratio beyond 1 + clip with positive advantage, or below 1 - clip with
    // negative advantage: the objective is flat
    assert_eq!(case(0.5, 1.0), 0.0);
    assert_eq!(case(-0.5, -1.0), 0.0);
    // the pessimistic side keeps its gradient
    assert!(case(0.5, -1.0) > 0.0);
    assert!(case(-0.5, 1.0) > 0.0);
    assert!(case(0.05, 1.0) > 0.0);
}

#[test]
fn adam_first_step_is_signed_learning_rate() {
    let mut p = vec![1.0, -2.0, 0.5];
    let mut adam = Adam::new(3, 0.01);
    adam.step(&mut p, &[3.0, -0.5, 1e-3]);
    for (x, (start, sign)) in p.iter().zip([(1.0, 1.0), (-2.0, -1.0), (0.5, 1.0)]) {
        assert!((x - (start - 0.01 * sign)).abs() < 1e-7, "{x}");
    }
    let mut g = vec![3.0, 4.0];
    assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
}

fn tiny() -> PpoConfig {
    PpoConfig { num_envs: 8, rollout_len: 16, total_steps: 8 * 16 * 3 + 5, eval_interval: 2, eval_envs: 4, ..PpoConfig::default() }
}

#[test]
fn training_is_deterministic_and_counts_steps() {
    let o = Overrides::default();
    let a = ppo_train("CartpoleBalance", &o, &tiny(), 5, None).unwrap();
    let b = ppo_train("CartpoleBalance", &o, &tiny(), 5, None).unwrap();
    assert_eq!(a.net.params, b.net.params);
    let strip = |t: &Trained| t.log.iter().map(LogRecord::timeless).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.log.len(), 3);
    assert_eq!(a.log.last().unwrap().env_steps, 8 * 16 * 3);
    assert!(a.log[1].eval.is_some() && a.log[2].eval.is_some() && a.log[0].eval.is_none());
    assert_eq!(a.log[2].eval.unwrap().episodes, 4);
    let c = ppo_train("CartpoleBalance", &o, &tiny(), 6, None).unwrap();
    assert_ne!(a.net.params, c.net.params);
}

#[test]
fn run_directory_and_nan_abort() {
    let dir = tempfile::tempdir().unwrap();
    ppo_train("CartpoleBalance", &Overrides::default(), &tiny(), 0, Some(dir.path())).unwrap();
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let lines: Vec<LogRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("policy.json").exists() && dir.path().join("config.json").exists());

    let bad = PpoConfig { init_log_std: 1000.0, ..tiny() };
    let err = ppo_train("CartpoleBalance", &Overrides::default(), &bad, 0, Some(dir.path())).err().unwrap();
    assert!(matches!(err, LearnError::NonFinite { iteration: 1, .. }), "{err}");
    assert!(dir.path().join("nan_dump.json").exists());
    assert!(matches!(PpoConfig { clip: 1.0, ..tiny() }.validate(), Err(LearnError::Config(_))));
    assert!(matches!(PpoConfig { total_steps: 10, ..tiny() }.validate(), Err(LearnError::Config(_))));
}

#[test]
fn outputs_are_finite_and_seeded() {
    let mut r1 = ChaCha8Rng::seed_from_u64(1);
    let mut r2 = ChaCha8Rng::seed_from_u64(1);
    let a = PolicyNet::new(4, 1, false, -0.5, &mut r1);
    let b = PolicyNet::new(4, 1, false, -0.5, &mut r2);
    assert_eq!(a, b);
    assert_eq!(a.num_params(), (4 * 64 + 64) + (64 * 64 + 64) + (64 + 1) + (4 * 64 + 64) + (64 * 64 + 64) + (64 + 1) + 1);
    let f = a.forward(&[1e6, -1e6, 0.0, 3.0]);
    assert!(f.mu.iter().all(|x| x.is_finite()) && f.value[0].is_finite());
}
