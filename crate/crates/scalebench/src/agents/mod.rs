//! The four controllers behind one interface: the attention-enhanced
//! double-LSTM PPO agent, the single-LSTM PPO ablation, a Double DQN over
//! the enumerated joint action space, and the static reactive HPA.
//!
//! All agents share the same action-decoding pipeline; only the policy that
//! produces the indices differs.

pub mod checkpoint;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    decode_action, encode_action, ActionVector, DecodedAction, Observation, ACTION_ARITIES,
    JOINT_ACTIONS,
};
use crate::error::{Error, Result};
use crate::nn::{
    greedy_heads, sample_heads, Adam, DropoutMasks, PolicyArch, PolicyNet, QNet, QNetArch,
    RecurrentValues, Tape,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    AttnDoubleLstmPpo,
    SingleLstmPpo,
    Ddqn,
    StaticHpa,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::AttnDoubleLstmPpo => "attn_double_lstm_ppo",
            AgentKind::SingleLstmPpo => "single_lstm_ppo",
            AgentKind::Ddqn => "ddqn",
            AgentKind::StaticHpa => "static_hpa",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attn_double_lstm_ppo" => Ok(AgentKind::AttnDoubleLstmPpo),
            "single_lstm_ppo" => Ok(AgentKind::SingleLstmPpo),
            "ddqn" => Ok(AgentKind::Ddqn),
            "static_hpa" => Ok(AgentKind::StaticHpa),
            other => Err(Error::config(format!(
                "unknown agent kind `{other}` (expected attn_double_lstm_ppo, single_lstm_ppo, ddqn or static_hpa)"
            ))),
        }
    }

    pub fn is_ppo(&self) -> bool {
        matches!(self, AgentKind::AttnDoubleLstmPpo | AgentKind::SingleLstmPpo)
    }

    pub fn policy_arch(&self) -> Option<PolicyArch> {
        match self {
            AgentKind::AttnDoubleLstmPpo => Some(PolicyArch::attn_double_lstm()),
            AgentKind::SingleLstmPpo => Some(PolicyArch::single_lstm()),
            _ => None,
        }
    }
}

/// Mixed-radix encoding of the action vector, radices (4, 3, 3, 3).
pub fn joint_index(a: &ActionVector) -> Result<usize> {
    let idx = a.indices();
    for (i, (&v, &arity)) in idx.iter().zip(ACTION_ARITIES.iter()).enumerate() {
        if v >= arity {
            return Err(Error::Usage(format!(
                "action head {i} index {v} out of range (arity {arity})"
            )));
        }
    }
    Ok(((idx[0] * 3 + idx[1]) * 3 + idx[2]) * 3 + idx[3])
}

pub fn joint_unindex(mut index: usize) -> Result<ActionVector> {
    if index >= JOINT_ACTIONS {
        return Err(Error::Usage(format!(
            "joint action index {index} out of range"
        )));
    }
    let enh = (index % 3) as u8;
    index /= 3;
    let mult = (index % 3) as u8;
    index /= 3;
    let lr = (index % 3) as u8;
    index /= 3;
    Ok(ActionVector::new(index as u8, lr, mult, enh))
}

/// What a PPO agent hands the trainer for one collected step.
pub struct CollectStep {
    pub action: ActionVector,
    pub log_prob: f64,
    pub value: f64,
    pub entropy: f64,
    pub head_logits: Vec<Vec<f64>>,
    pub masks: DropoutMasks,
    pub attention: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct PpoAgent {
    pub kind: AgentKind,
    pub net: PolicyNet,
    pub adam: Adam,
    pub rec: RecurrentValues,
    /// Exploration stream (action sampling and dropout masks).
    pub rng: ChaCha12Rng,
}

impl PpoAgent {
    pub fn new(kind: AgentKind, seed: u64) -> Result<Self> {
        let arch = kind
            .policy_arch()
            .ok_or_else(|| Error::Usage(format!("{} is not a PPO agent", kind.as_str())))?;
        let net = PolicyNet::new(arch, seed)?;
        let adam = Adam::new(&net.params);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(0x70_70_6f); // exploration substream
        let rec = RecurrentValues::zeros(&net.arch);
        Ok(PpoAgent {
            kind,
            net,
            adam,
            rec,
            rng,
        })
    }

    pub fn reset_episode(&mut self) {
        self.rec = RecurrentValues::zeros(&self.net.arch);
    }

    /// Sampled action for collection; advances the recurrent state and
    /// returns everything the rollout buffer stores.
    pub fn act_collect(&mut self, obs: &Observation) -> Result<CollectStep> {
        let masks = DropoutMasks::sample(&self.net.arch, &mut self.rng);
        let mut tape = Tape::new(&self.net.params);
        let state = self.net.lift(&mut tape, &self.rec);
        let out = self.net.forward(&mut tape, obs.as_slice(), &state, Some(&masks))?;
        let (action, log_prob, entropy) = sample_heads(&tape, &out.head_logits, &mut self.rng);
        let value = tape.scalar(out.value);
        let head_logits = out
            .head_logits
            .iter()
            .map(|&id| tape.value(id).to_vec())
            .collect();
        self.rec = self.net.extract(&tape, &out.state);
        Ok(CollectStep {
            action,
            log_prob,
            value,
            entropy,
            head_logits,
            masks,
            attention: out.attention,
        })
    }

    /// Greedy per-head argmax with dropout off (evaluation mode); advances
    /// the recurrent state.
    pub fn act_greedy(&mut self, obs: &Observation) -> Result<(ActionVector, Option<Vec<f64>>)> {
        let mut tape = Tape::new(&self.net.params);
        let state = self.net.lift(&mut tape, &self.rec);
        let out = self.net.forward(&mut tape, obs.as_slice(), &state, None)?;
        let action = greedy_heads(&tape, &out.head_logits);
        self.rec = self.net.extract(&tape, &out.state);
        Ok((action, out.attention))
    }

    /// Value estimate of `obs` from the current recurrent state without
    /// advancing it (GAE bootstrap).
    pub fn value_of(&self, obs: &Observation) -> Result<f64> {
        let mut tape = Tape::new(&self.net.params);
        let state = self.net.lift(&mut tape, &self.rec);
        let out = self.net.forward(&mut tape, obs.as_slice(), &state, None)?;
        Ok(tape.scalar(out.value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdqnConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of total training steps over which epsilon decays linearly.
    pub epsilon_decay_frac: f64,
    /// Hard target-network sync period (environment steps).
    pub target_sync_steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    /// Gradient update every this many environment steps.
    pub update_every: u64,
}

impl Default for DdqnConfig {
    fn default() -> Self {
        DdqnConfig {
            gamma: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_frac: 0.4,
            target_sync_steps: 500,
            batch_size: 128,
            learning_rate: 1e-4,
            buffer_capacity: 50_000,
            update_every: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// FIFO replay buffer with uniform sampling.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    data: std::collections::VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            data: std::collections::VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() == self.capacity {
            self.data.pop_front();
        }
        self.data.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.data.len())).collect()
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }
}

/// Double-Q target: r when terminal, otherwise r + gamma * Q_target(s',
/// argmax_a Q_online(s', a)).
pub fn ddqn_target(
    reward: f64,
    done: bool,
    next_obs: &[f64],
    online: &QNet,
    target: &QNet,
    gamma: f64,
) -> Result<f64> {
    if done {
        return Ok(reward);
    }
    let online_q = online.q_values(next_obs)?;
    let best = crate::nn::argmax(&online_q);
    let target_q = target.q_values(next_obs)?;
    Ok(reward + gamma * target_q[best])
}

#[derive(Debug)]
pub struct DdqnAgent {
    pub config: DdqnConfig,
    pub online: QNet,
    pub target: QNet,
    pub adam: Adam,
    pub replay: ReplayBuffer,
    pub rng: ChaCha12Rng,
    pub steps_done: u64,
}

impl DdqnAgent {
    pub fn new(config: DdqnConfig, seed: u64) -> Result<Self> {
        let online = QNet::new(QNetArch::default(), seed)?;
        let target = online.clone();
        let adam = Adam::new(&online.params);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(0x64_64_71); // exploration substream
        let replay = ReplayBuffer::new(config.buffer_capacity);
        Ok(DdqnAgent {
            config,
            online,
            target,
            adam,
            replay,
            rng,
            steps_done: 0,
        })
    }

    /// Linear epsilon schedule over the first `epsilon_decay_frac` of
    /// training.
    pub fn epsilon_at(&self, step: u64, total_steps: u64) -> f64 {
        let horizon = (total_steps as f64 * self.config.epsilon_decay_frac).max(1.0);
        let frac = (step as f64 / horizon).min(1.0);
        self.config.epsilon_start + frac * (self.config.epsilon_end - self.config.epsilon_start)
    }

    pub fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<ActionVector> {
        if epsilon > 0.0 && self.rng.gen::<f64>() < epsilon {
            let joint = self.rng.gen_range(0..JOINT_ACTIONS);
            return joint_unindex(joint);
        }
        let q = self.online.q_values(obs.as_slice())?;
        joint_unindex(crate::nn::argmax(&q))
    }

    pub fn sync_target(&mut self) {
        self.target.params = self.online.params.clone();
    }
}

/// One controller of any kind, behind the uniform evaluation interface.
#[derive(Debug)]
pub enum Agent {
    Ppo(PpoAgent),
    Ddqn(DdqnAgent),
    StaticHpa,
}

impl Agent {
    pub fn new(kind: AgentKind, seed: u64) -> Result<Self> {
        match kind {
            AgentKind::AttnDoubleLstmPpo | AgentKind::SingleLstmPpo => {
                Ok(Agent::Ppo(PpoAgent::new(kind, seed)?))
            }
            AgentKind::Ddqn => Ok(Agent::Ddqn(DdqnAgent::new(DdqnConfig::default(), seed)?)),
            AgentKind::StaticHpa => Ok(Agent::StaticHpa),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Ppo(a) => a.kind,
            Agent::Ddqn(_) => AgentKind::Ddqn,
            Agent::StaticHpa => AgentKind::StaticHpa,
        }
    }

    pub fn reset_episode(&mut self) {
        if let Agent::Ppo(a) = self {
            a.reset_episode();
        }
    }

    /// Deterministic action for evaluation: per-head argmax for PPO, greedy
    /// joint argmax for DDQN, the fixed configuration for static HPA.
    pub fn act_eval(&mut self, obs: &Observation) -> Result<ActionVector> {
        match self {
            Agent::Ppo(a) => Ok(a.act_greedy(obs)?.0),
            Agent::Ddqn(a) => a.act(obs, 0.0),
            Agent::StaticHpa => encode_action(&DecodedAction::static_hpa()),
        }
    }

    /// The shared action-decoding pipeline; identical across agent kinds.
    pub fn decode(&self, a: &ActionVector) -> Result<DecodedAction> {
        decode_action(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn joint_index_goldens() {
        assert_eq!(joint_index(&ActionVector::new(0, 0, 0, 0)).unwrap(), 0);
        assert_eq!(joint_index(&ActionVector::new(3, 2, 2, 2)).unwrap(), 107);
        assert_eq!(joint_index(&ActionVector::new(1, 0, 2, 1)).unwrap(), 34);
        assert!(joint_index(&ActionVector::new(4, 0, 0, 0)).is_err());
        assert!(joint_unindex(108).is_err());
    }

    #[test]
    fn joint_index_bijection_exhaustive() {
        let mut seen = vec![false; JOINT_ACTIONS];
        for targ in 0..4u8 {
            for lr in 0..3u8 {
                for mult in 0..3u8 {
                    for enh in 0..3u8 {
                        let a = ActionVector::new(targ, lr, mult, enh);
                        let idx = joint_index(&a).unwrap();
                        assert!(!seen[idx], "collision at {idx}");
                        seen[idx] = true;
                        assert_eq!(joint_unindex(idx).unwrap(), a);
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn ddqn_target_goldens() {
        let online = QNet::new(QNetArch::default(), 3).unwrap();
        let target = QNet::new(QNetArch::default(), 4).unwrap();
        let obs = vec![0.1; 14];
        // terminal
        assert_eq!(ddqn_target(1.0, true, &obs, &online, &target, 0.99).unwrap(), 1.0);
        // hand arithmetic: y = 1 + 0.99 * Q_target(s', a*) with a forced value
        let a_star = crate::nn::argmax(&online.q_values(&obs).unwrap());
        let mut forced = target.clone();
        // overwrite the output bias so Q_target(s', a*) = 2 exactly
        let nblocks = forced.params.blocks().len();
        let bias_id = crate::nn::BlockId(nblocks - 1);
        let qt = forced.q_values(&obs).unwrap()[a_star];
        forced.params.block_mut(bias_id).data[a_star] += 2.0 - qt;
        let y = ddqn_target(1.0, false, &obs, &online, &forced, 0.99).unwrap();
        assert_relative_eq!(y, 2.98, max_relative = 1e-12);
    }

    #[test]
    fn ddqn_target_degenerates_to_dqn_when_nets_equal() {
        let online = QNet::new(QNetArch::default(), 5).unwrap();
        let obs = vec![0.3; 14];
        let y = ddqn_target(0.5, false, &obs, &online, &online, 0.9).unwrap();
        let q = online.q_values(&obs).unwrap();
        let dqn = 0.5 + 0.9 * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(y, dqn);
    }

    #[test]
    fn epsilon_one_is_uniform_over_joints() {
        // chi-square uniformity over 1e5 draws; 99th percentile of
        // chi2(107 dof) is 143.94, so exceeding it has p < 0.01
        let mut agent = DdqnAgent::new(DdqnConfig::default(), 9).unwrap();
        let obs = Observation([0.0; 14]);
        let mut counts = vec![0u64; JOINT_ACTIONS];
        let n = 100_000;
        for _ in 0..n {
            let a = agent.act(&obs, 1.0).unwrap();
            counts[joint_index(&a).unwrap()] += 1;
        }
        let expected = n as f64 / JOINT_ACTIONS as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 143.94, "chi2 = {chi2}");
    }

    #[test]
    fn ddqn_greedy_is_deterministic() {
        let mut agent = DdqnAgent::new(DdqnConfig::default(), 10).unwrap();
        let obs = Observation([0.25; 14]);
        let a = agent.act(&obs, 0.0).unwrap();
        for _ in 0..10 {
            assert_eq!(agent.act(&obs, 0.0).unwrap(), a);
        }
    }

    #[test]
    fn static_agent_fixed_configuration() {
        let mut agent = Agent::new(AgentKind::StaticHpa, 0).unwrap();
        let obs = Observation([0.7; 14]);
        let a = agent.act_eval(&obs).unwrap();
        assert_eq!(a, ActionVector::new(1, 1, 0, 0));
        let d = agent.decode(&a).unwrap();
        assert_eq!(d.hpa_target, 50);
        assert_eq!(d.multiplier, 1.0);
        assert_eq!(d.mode, crate::sim::EnhancementMode::Off);
    }

    #[test]
    fn all_agents_share_decode_pipeline() {
        let mut agents = vec![
            Agent::new(AgentKind::AttnDoubleLstmPpo, 1).unwrap(),
            Agent::new(AgentKind::SingleLstmPpo, 1).unwrap(),
            Agent::new(AgentKind::Ddqn, 1).unwrap(),
            Agent::new(AgentKind::StaticHpa, 1).unwrap(),
        ];
        for targ in 0..4u8 {
            for enh in 0..3u8 {
                let a = ActionVector::new(targ, 1, 1, enh);
                let decoded: Vec<DecodedAction> =
                    agents.iter_mut().map(|ag| ag.decode(&a).unwrap()).collect();
                for d in &decoded[1..] {
                    assert_eq!(*d, decoded[0]);
                }
            }
        }
    }

    #[test]
    fn replay_buffer_fifo_eviction() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(Transition {
                obs: vec![i as f64],
                action: i,
                reward: 0.0,
                next_obs: vec![0.0],
                done: false,
            });
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).action, 2);
        assert_eq!(buf.get(2).action, 4);
    }

    #[test]
    fn ppo_collect_and_greedy_paths() {
        let mut agent = PpoAgent::new(AgentKind::AttnDoubleLstmPpo, 3).unwrap();
        let obs = Observation([0.1; 14]);
        let step = agent.act_collect(&obs).unwrap();
        assert!(step.log_prob <= 0.0);
        assert!(step.entropy > 0.0);
        assert_eq!(step.head_logits.len(), 4);
        assert_eq!(step.head_logits[0].len(), 4);
        assert_eq!(step.head_logits[1].len(), 3);
        // greedy path advances state without sampling noise
        let (a1, attn) = agent.act_greedy(&obs).unwrap();
        assert!(attn.is_some());
        let _ = a1;
        // ablation has no attention output
        let mut single = PpoAgent::new(AgentKind::SingleLstmPpo, 3).unwrap();
        let (_, attn) = single.act_greedy(&obs).unwrap();
        assert!(attn.is_none());
    }
}
