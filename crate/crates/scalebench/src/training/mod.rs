//! Training loops (PPO and DDQN) and the deterministic evaluation runner.

pub mod ddqn;
pub mod gae;
pub mod ppo;
pub mod rollout;

pub use ddqn::{ddqn_log_row, train_ddqn, DdqnUpdateStats, DDQN_LOG_HEADER};
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{
    adapt_kl_beta, lr_at, train_log_row, train_ppo, FirstMinibatchStats, PpoConfig, UpdateStats,
    TRAIN_LOG_HEADER,
};
pub use rollout::{RolloutBuffer, SequenceRef, StepRecord};

use crate::agents::Agent;
use crate::envloop::SimEnv;
use crate::error::Result;
use crate::telemetry::TelemetryRecord;

/// Replays every day of the environment's split once with deterministic
/// (greedy) acting and exploration disabled, collecting full telemetry.
pub fn evaluate(agent: &mut Agent, env: &mut SimEnv) -> Result<Vec<TelemetryRecord>> {
    let episodes = env.split_days();
    let steps = env.steps_per_day();
    let mut records = Vec::with_capacity(episodes * steps);
    for ep in 0..episodes {
        env.reset(ep)?;
        agent.reset_episode();
        for _ in 0..steps {
            let obs = *env.observation();
            let action = agent.act_eval(&obs)?;
            let decoded = agent.decode(&action)?;
            let step = env.step(&decoded)?;
            records.push(step.record);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentKind;
    use crate::envloop::EnvConfig;
    use crate::trace::{synthesize, SplitLabel, SynthConfig};

    #[test]
    fn evaluation_covers_test_split_exactly() {
        let trace = synthesize(&SynthConfig {
            seed: 4,
            burst_prob: 0.02,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut env = SimEnv::new(trace, SplitLabel::Test, EnvConfig::default()).unwrap();
        let mut agent = Agent::new(AgentKind::StaticHpa, 0).unwrap();
        let records = evaluate(&mut agent, &mut env).unwrap();
        assert_eq!(records.len(), 1000);
    }

    #[test]
    fn evaluation_is_deterministic_for_ppo() {
        let run = || {
            let trace = synthesize(&SynthConfig {
                seed: 5,
                days: 3,
                train_days: 2,
                steps_per_day: 60,
                burst_prob: 0.05,
                ..SynthConfig::default()
            })
            .unwrap();
            let mut cfg = EnvConfig::default();
            cfg.norms.steps_per_day = 60;
            let mut env = SimEnv::new(trace, SplitLabel::Test, cfg).unwrap();
            let mut agent = Agent::new(AgentKind::AttnDoubleLstmPpo, 21).unwrap();
            let records = evaluate(&mut agent, &mut env).unwrap();
            records
                .iter()
                .map(|r| (r.latency_ms.to_bits(), r.replicas))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
