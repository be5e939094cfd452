//! PPO on CartpoleBalance from state observations. An optional first
//! argument is a JSON object of config fields, e.g. `'{"total_steps": 500000}'`,
//! an optional second one the seed.

use batchsim::learn::{ppo_train, PpoConfig};
use batchsim::tasks::Overrides;

fn main() {
    let cfg: PpoConfig = match std::env::args().nth(1) {
        Some(s) => serde_json::from_str(&s).expect("config JSON"),
        None => PpoConfig::default(),
    };
    let seed = std::env::args().nth(2).map_or(0, |s| s.parse().expect("seed"));
    let trained = ppo_train("CartpoleBalance", &Overrides::default(), &cfg, seed, None).expect("training");
    for r in &trained.log {
        if let Some(e) = r.eval {
            println!(
                "iter {:>4}  steps {:>8}  {:>6.1} s  success_at_end {:.2}  return {:.1}",
                r.iteration, r.env_steps, r.wall_seconds, e.success_at_end, e.mean_return
            );
        }
    }
}
