use serde::{Deserialize, Serialize};

/// Outcome of one finished episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub length: usize,
    pub success_once: bool,
    pub success_at_end: bool,
    pub fail_once: bool,
    pub fail_at_end: bool,
}

/// Running per-env accumulator: success/fail latch once and are sampled at
/// the last step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpisodeAccumulator {
    pub metrics: EpisodeMetrics,
}

impl EpisodeAccumulator {
    pub fn push(&mut self, reward: f64, success: bool, fail: bool) {
        let m = &mut self.metrics;
        m.episode_return += reward;
        m.length += 1;
        m.success_once |= success;
        m.fail_once |= fail;
        m.success_at_end = success;
        m.fail_at_end = fail;
    }

    /// Returns the finished metrics and clears the accumulator.
    pub fn finish(&mut self) -> EpisodeMetrics {
        std::mem::take(&mut self.metrics)
    }
}

/// Metrics of an episode given its per-step rewards and flags.
pub fn metrics_from_steps(rewards: &[f64], success: &[bool], fail: &[bool]) -> EpisodeMetrics {
    let mut acc = EpisodeAccumulator::default();
    for ((r, s), f) in rewards.iter().zip(success).zip(fail) {
        acc.push(*r, *s, *f);
    }
    acc.finish()
}

/// One JSON-lines record of the metrics sink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(flatten)]
    pub metrics: EpisodeMetrics,
    pub env_id: usize,
    pub seed: u64,
}
