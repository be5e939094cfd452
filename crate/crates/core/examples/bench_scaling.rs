//! Cartpole throughput at 4 and 256 envs, state observations only.

use batchsim::bench::{run_bench, BenchConfig};

fn main() {
    let results = run_bench(&BenchConfig::new("CartpoleBalance", &[4, 256]));
    for r in &results {
        println!("{:>5} envs  {:>12.0} fps  {:.3} s", r.num_envs, r.fps.unwrap_or(0.0), r.wall_seconds.unwrap_or(0.0));
    }
    if let [a, b] = &results[..] {
        println!("scaling 256/4: {:.2}x on {} threads", b.fps.unwrap_or(0.0) / a.fps.unwrap_or(f64::NAN), rayon::current_num_threads());
    }
}
