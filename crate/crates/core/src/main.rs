use anyhow::{bail, Context, Result};
use batchsim::bench::{emit_csv, emit_plotdata, run_bench, BenchConfig};
use batchsim::controllers::ControlMode;
use batchsim::envs::ObsMode;
use batchsim::learn::{ppo_train, PpoConfig};
use batchsim::record::{record, replay, RecordConfig, ReplayOptions, Trajectory};
use batchsim::tasks::{scripted_solution, Overrides, TASKS};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "batchsim", version, about = "Batched robot simulation, trajectories, benchmarks and PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Task registry.
    Tasks {
        #[command(subcommand)]
        action: TasksCmd,
    },
    /// Record and replay trajectories.
    Traj {
        #[command(subcommand)]
        action: TrajCmd,
    },
    /// Throughput benchmark.
    Bench {
        #[command(subcommand)]
        action: BenchCmd,
    },
    /// Reinforcement learning.
    Train {
        #[command(subcommand)]
        action: TrainCmd,
    },
}

#[derive(Subcommand)]
enum TasksCmd {
    List,
}

#[derive(Subcommand)]
enum TrajCmd {
    Record {
        #[arg(long)]
        task: String,
        /// Only `scripted` is available.
        #[arg(long, default_value = "scripted")]
        policy: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        control_mode: Option<String>,
        /// Task overrides as a JSON object.
        #[arg(long)]
        overrides: Option<String>,
        /// Store only the initial state of each episode.
        #[arg(long)]
        no_states: bool,
        #[arg(long)]
        out: PathBuf,
    },
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        obs_mode: Option<String>,
        /// Convert actions to this control mode.
        #[arg(long)]
        controller: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        residual_bound: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    Run {
        #[arg(long)]
        task: String,
        #[arg(long, value_delimiter = ',', default_value = "4,16,64,256,1024")]
        envs: Vec<usize>,
        #[arg(long, default_value_t = batchsim::bench::DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value = "none")]
        cameras: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write plot data as JSON.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TrainCmd {
    Ppo {
        #[arg(long)]
        task: String,
        #[arg(long)]
        num_envs: Option<usize>,
        /// Accepts scientific notation, e.g. 2e6.
        #[arg(long)]
        total_steps: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Further config fields as a JSON object.
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn control_mode(s: &str) -> Result<ControlMode> {
    ControlMode::parse(s).with_context(|| format!("unknown control mode {s}"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Tasks { action: TasksCmd::List } => {
            for (name, about) in TASKS {
                println!("{name:<18} {about}");
            }
        }
        Command::Traj { action: TrajCmd::Record { task, policy, episodes, seed, control_mode: mode, overrides, no_states, out } } => {
            if policy != "scripted" {
                bail!("unknown policy {policy}; only `scripted` is available");
            }
            let mut cfg = RecordConfig::new(&task, seed, episodes);
            if let Some(o) = overrides {
                cfg.overrides = serde_json::from_str(&o).context("parsing --overrides")?;
            }
            if let Some(m) = mode {
                cfg.overrides.control_mode = Some(control_mode(&m)?);
            }
            cfg.source = policy;
            cfg.keep_states = !no_states;
            let mut p = scripted_solution(&task)?;
            let t = record(&cfg, p.as_mut())?;
            t.save(&out)?;
            let wins = t.episodes.iter().filter(|e| e.success.iter().any(|s| *s)).count();
            println!("{} episodes, {wins} successful, written to {}", t.episodes.len(), out.display());
        }
        Command::Traj { action: TrajCmd::Replay { input, obs_mode, controller, residual_bound, out } } => {
            let t = Trajectory::load(&input)?;
            let opts = ReplayOptions {
                obs_mode: obs_mode.map(|m| ObsMode::parse(&m)).transpose()?,
                control_mode: controller.map(|c| control_mode(&c)).transpose()?,
                residual_bound,
                keep_states: None,
            };
            let r = replay(&t, &opts)?;
            r.save(&out)?;
            for (k, ep) in r.episodes.iter().enumerate() {
                if let Some(c) = &ep.conversion {
                    println!(
                        "episode {k}: final EE error {} m, success {} -> {}, max residual {:.3}{}",
                        c.final_pos_error.map_or("n/a".into(), |e| format!("{e:.5}")),
                        c.success_before,
                        c.success_after,
                        c.max_residual,
                        if c.flagged { " (flagged)" } else { "" }
                    );
                }
            }
            println!("{} episodes written to {}", r.episodes.len(), out.display());
        }
        Command::Bench { action: BenchCmd::Run { task, envs, steps, cameras, seed, out, plot } } => {
            let mut cfg = BenchConfig::new(&task, &envs);
            cfg.steps = steps;
            cfg.cameras = cameras.parse()?;
            cfg.seed = seed;
            let rows = run_bench(&cfg);
            for r in &rows {
                match (&r.error, r.fps) {
                    (Some(e), _) => println!("{:>6} envs  failed: {e}", r.num_envs),
                    (None, Some(fps)) => println!("{:>6} envs  {fps:>12.0} fps", r.num_envs),
                    (None, None) => println!("{:>6} envs  no measurement", r.num_envs),
                }
            }
            emit_csv(&rows, &out)?;
            if let Some(p) = plot {
                emit_plotdata(&rows, &p)?;
            }
        }
        Command::Train { action: TrainCmd::Ppo { task, num_envs, total_steps, seed, config, out } } => {
            let mut cfg: PpoConfig = match config {
                Some(c) => serde_json::from_str(&c).context("parsing --config")?,
                None => PpoConfig::default(),
            };
            if let Some(n) = num_envs {
                cfg.num_envs = n;
            }
            if let Some(t) = total_steps {
                if !(t >= 1.0 && t.fract() == 0.0) {
                    bail!("--total-steps must be a positive whole number, got {t}");
                }
                cfg.total_steps = t as u64;
            }
            let trained = ppo_train(&task, &Overrides::default(), &cfg, seed, Some(&out))?;
            for r in trained.log.iter().filter(|r| r.eval.is_some()) {
                let e = r.eval.expect("filtered");
                println!(
                    "iter {:>4}  steps {:>9}  {:>7.1} s  success_at_end {:.2}  eval return {:.1}",
                    r.iteration, r.env_steps, r.wall_seconds, e.success_at_end, e.mean_return
                );
            }
            println!("run written to {}", out.display());
        }
    }
    Ok(())
}
