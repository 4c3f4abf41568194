//! Off-policy training loop for the Double DQN baseline: epsilon-greedy
//! collection into a replay buffer, double-Q targets, periodic hard target
//! sync.

use serde::{Deserialize, Serialize};

use crate::agents::{ddqn_target, joint_index, DdqnAgent, Transition};
use crate::envloop::SimEnv;
use crate::error::{Error, Result};
use crate::nn::{Grads, Tape};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DdqnUpdateStats {
    pub update_idx: usize,
    pub env_steps: u64,
    pub epsilon: f64,
    pub loss: f64,
    pub mean_q: f64,
    pub mean_reward: f64,
}

pub const DDQN_LOG_HEADER: &str = "update_idx,env_steps,epsilon,loss,mean_q,mean_reward";

pub fn ddqn_log_row(s: &DdqnUpdateStats) -> String {
    format!(
        "{},{},{},{},{},{}",
        s.update_idx, s.env_steps, s.epsilon, s.loss, s.mean_q, s.mean_reward
    )
}

pub fn train_ddqn(
    agent: &mut DdqnAgent,
    env: &mut SimEnv,
    episodes: usize,
    mut on_update: impl FnMut(&DdqnUpdateStats, &DdqnAgent) -> Result<()>,
) -> Result<Vec<DdqnUpdateStats>> {
    if episodes == 0 {
        return Err(Error::config("training needs at least one episode"));
    }
    let steps_per_ep = env.steps_per_day();
    let total_steps = (episodes * steps_per_ep) as u64;
    let mut stats_log = Vec::new();
    let mut update_idx = 0usize;
    let mut recent_rewards = std::collections::VecDeque::with_capacity(256);

    for ep in 0..episodes {
        env.reset(ep)?;
        for _ in 0..steps_per_ep {
            let obs = *env.observation();
            let eps = agent.epsilon_at(agent.steps_done, total_steps);
            let action = agent.act(&obs, eps)?;
            let decoded = crate::control::decode_action(&action)?;
            let step = env.step(&decoded)?;
            if recent_rewards.len() == 256 {
                recent_rewards.pop_front();
            }
            recent_rewards.push_back(step.reward.total);
            agent.replay.push(Transition {
                obs: obs.as_slice().to_vec(),
                action: joint_index(&action)?,
                reward: step.reward.total,
                next_obs: step.obs.as_slice().to_vec(),
                done: step.done,
            });
            agent.steps_done += 1;

            if agent.steps_done % agent.config.target_sync_steps == 0 {
                agent.sync_target();
            }
            if agent.replay.len() >= agent.config.batch_size
                && agent.steps_done % agent.config.update_every == 0
            {
                let stats = ddqn_update(agent, update_idx, eps, &recent_rewards)?;
                update_idx += 1;
                on_update(&stats, agent)?;
                stats_log.push(stats);
            }
        }
    }
    Ok(stats_log)
}

fn ddqn_update(
    agent: &mut DdqnAgent,
    update_idx: usize,
    epsilon: f64,
    recent_rewards: &std::collections::VecDeque<f64>,
) -> Result<DdqnUpdateStats> {
    let batch = agent.config.batch_size;
    let idxs = agent.replay.sample_indices(batch, &mut agent.rng);

    let mut targets = Vec::with_capacity(batch);
    for &i in &idxs {
        let t = agent.replay.get(i);
        targets.push(ddqn_target(
            t.reward,
            t.done,
            &t.next_obs,
            &agent.online,
            &agent.target,
            agent.config.gamma,
        )?);
    }

    let mut tape = Tape::new(&agent.online.params);
    let mut sq_nodes = Vec::with_capacity(batch);
    let mut q_sum = 0.0;
    for (&i, &y) in idxs.iter().zip(&targets) {
        let t = agent.replay.get(i);
        let q = agent.online.forward(&mut tape, &t.obs)?;
        let qa = tape.pick(q, t.action);
        q_sum += tape.scalar(qa);
        let target = tape.constant(vec![y]);
        let err = tape.sub(qa, target);
        sq_nodes.push(tape.square(err));
    }
    let loss = tape.mean_scalars(&sq_nodes);
    tape.check()?;
    let loss_v = tape.scalar(loss);
    if !loss_v.is_finite() {
        return Err(Error::numeric(format!(
            "non-finite DDQN loss in update {update_idx}"
        )));
    }
    let mut grads = Grads::zeros_like(&agent.online.params);
    tape.backward(loss, &mut grads)?;
    grads.clip_global_norm(10.0);
    agent
        .adam
        .step(&mut agent.online.params, &grads, agent.config.learning_rate);

    Ok(DdqnUpdateStats {
        update_idx,
        env_steps: agent.steps_done,
        epsilon,
        loss: loss_v,
        mean_q: q_sum / batch as f64,
        mean_reward: recent_rewards.iter().sum::<f64>() / recent_rewards.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::DdqnConfig;
    use crate::envloop::EnvConfig;
    use crate::trace::{synthesize, SplitLabel, SynthConfig};

    fn tiny_env(seed: u64) -> SimEnv {
        let trace = synthesize(&SynthConfig {
            seed,
            days: 3,
            train_days: 2,
            steps_per_day: 50,
            burst_prob: 0.05,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut cfg = EnvConfig::default();
        cfg.norms.steps_per_day = 50;
        cfg.seed = seed;
        SimEnv::new(trace, SplitLabel::Train, cfg).unwrap()
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        let agent = DdqnAgent::new(DdqnConfig::default(), 1).unwrap();
        assert_eq!(agent.epsilon_at(0, 1000), 1.0);
        // fully decayed at 40% of training
        let eps = agent.epsilon_at(400, 1000);
        assert!((eps - 0.05).abs() < 1e-12);
        assert!((agent.epsilon_at(900, 1000) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn short_training_runs_and_updates() {
        let config = DdqnConfig {
            batch_size: 16,
            update_every: 8,
            target_sync_steps: 25,
            ..DdqnConfig::default()
        };
        let mut agent = DdqnAgent::new(config, 3).unwrap();
        let mut env = tiny_env(3);
        let before = agent.online.params.flatten();
        let stats = train_ddqn(&mut agent, &mut env, 2, |_, _| Ok(())).unwrap();
        assert!(!stats.is_empty());
        assert_ne!(agent.online.params.flatten(), before);
        assert!(stats.iter().all(|s| s.loss.is_finite()));
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let config = DdqnConfig {
                batch_size: 16,
                update_every: 8,
                ..DdqnConfig::default()
            };
            let mut agent = DdqnAgent::new(config, 9).unwrap();
            let mut env = tiny_env(9);
            train_ddqn(&mut agent, &mut env, 1, |_, _| Ok(())).unwrap();
            agent.online.params.flatten()
        };
        assert_eq!(run(), run());
    }
}
