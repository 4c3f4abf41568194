//! Versioned JSON checkpoints: every named parameter block with its shape,
//! the architecture constants, optimizer state and the agent's RNG state.
//! Loading rejects shape mismatches and cross-kind restores.

use std::path::Path;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, ParamBlock, PolicyArch, PolicyNet, QNet, QNetArch, RecurrentValues};

use super::{Agent, AgentKind, DdqnAgent, DdqnConfig, PpoAgent, ReplayBuffer};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub arch: PolicyArch,
    pub blocks: Vec<ParamBlock>,
    pub adam: Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QnetSnapshot {
    pub arch: QNetArch,
    pub config: DdqnConfig,
    pub online: Vec<ParamBlock>,
    pub target: Vec<ParamBlock>,
    pub adam: Adam,
    pub steps_done: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub agent: String,
    pub policy: Option<PolicySnapshot>,
    pub qnet: Option<QnetSnapshot>,
    pub rng: Option<ChaCha12Rng>,
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent) -> Self {
        match agent {
            Agent::Ppo(a) => Checkpoint {
                version: CHECKPOINT_VERSION,
                agent: a.kind.as_str().to_string(),
                policy: Some(PolicySnapshot {
                    arch: a.net.arch.clone(),
                    blocks: a.net.params.blocks().to_vec(),
                    adam: a.adam.clone(),
                }),
                qnet: None,
                rng: Some(a.rng.clone()),
            },
            Agent::Ddqn(a) => Checkpoint {
                version: CHECKPOINT_VERSION,
                agent: AgentKind::Ddqn.as_str().to_string(),
                policy: None,
                qnet: Some(QnetSnapshot {
                    arch: a.online.arch.clone(),
                    config: a.config.clone(),
                    online: a.online.params.blocks().to_vec(),
                    target: a.target.params.blocks().to_vec(),
                    adam: a.adam.clone(),
                    steps_done: a.steps_done,
                }),
                rng: Some(a.rng.clone()),
            },
            Agent::StaticHpa => Checkpoint {
                version: CHECKPOINT_VERSION,
                agent: AgentKind::StaticHpa.as_str().to_string(),
                policy: None,
                qnet: None,
                rng: None,
            },
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn kind(&self) -> Result<AgentKind> {
        AgentKind::parse(&self.agent)
    }

    /// Rebuilds the agent, verifying every block's name and shape against a
    /// freshly constructed network of the recorded architecture.
    pub fn restore(&self) -> Result<Agent> {
        let kind = self.kind()?;
        match kind {
            AgentKind::AttnDoubleLstmPpo | AgentKind::SingleLstmPpo => {
                let snap = self
                    .policy
                    .as_ref()
                    .ok_or_else(|| Error::data("checkpoint lacks policy parameters"))?;
                let expected = kind.policy_arch().expect("ppo kind");
                if snap.arch != expected {
                    return Err(Error::Shape(format!(
                        "checkpoint architecture {:?} does not match {}",
                        snap.arch,
                        kind.as_str()
                    )));
                }
                let mut net = PolicyNet::new(snap.arch.clone(), 0)?;
                install_blocks(&mut net.params, &snap.blocks)?;
                let rec = RecurrentValues::zeros(&net.arch);
                Ok(Agent::Ppo(PpoAgent {
                    kind,
                    net,
                    adam: snap.adam.clone(),
                    rec,
                    rng: self
                        .rng
                        .clone()
                        .ok_or_else(|| Error::data("checkpoint lacks RNG state"))?,
                }))
            }
            AgentKind::Ddqn => {
                let snap = self
                    .qnet
                    .as_ref()
                    .ok_or_else(|| Error::data("checkpoint lacks Q-network parameters"))?;
                let mut online = QNet::new(snap.arch.clone(), 0)?;
                install_blocks(&mut online.params, &snap.online)?;
                let mut target = QNet::new(snap.arch.clone(), 0)?;
                install_blocks(&mut target.params, &snap.target)?;
                Ok(Agent::Ddqn(DdqnAgent {
                    config: snap.config.clone(),
                    online,
                    target,
                    adam: snap.adam.clone(),
                    replay: ReplayBuffer::new(snap.config.buffer_capacity),
                    rng: self
                        .rng
                        .clone()
                        .ok_or_else(|| Error::data("checkpoint lacks RNG state"))?,
                    steps_done: snap.steps_done,
                }))
            }
            AgentKind::StaticHpa => Ok(Agent::StaticHpa),
        }
    }

    /// Restore, refusing when the checkpoint kind differs from `expected`.
    pub fn restore_as(&self, expected: AgentKind) -> Result<Agent> {
        let kind = self.kind()?;
        if kind != expected {
            return Err(Error::Usage(format!(
                "checkpoint holds a {} agent, run config wants {}",
                kind.as_str(),
                expected.as_str()
            )));
        }
        self.restore()
    }
}

fn install_blocks(store: &mut crate::nn::ParamStore, blocks: &[ParamBlock]) -> Result<()> {
    if store.blocks().len() != blocks.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} blocks, architecture expects {}",
            blocks.len(),
            store.blocks().len()
        )));
    }
    for (i, incoming) in blocks.iter().enumerate() {
        let expected = &store.blocks()[i];
        if expected.name != incoming.name
            || expected.rows != incoming.rows
            || expected.cols != incoming.cols
            || incoming.data.len() != incoming.rows * incoming.cols
        {
            return Err(Error::Shape(format!(
                "block {} ({}x{}) does not match expected {} ({}x{})",
                incoming.name,
                incoming.rows,
                incoming.cols,
                expected.name,
                expected.rows,
                expected.cols
            )));
        }
    }
    for (i, incoming) in blocks.iter().enumerate() {
        store.blocks_mut()[i].data = incoming.data.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn ppo_round_trip() {
        let agent = Agent::new(AgentKind::AttnDoubleLstmPpo, 77).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::from_agent(&agent).save(&path).unwrap();
        let restored = Checkpoint::load(&path).unwrap().restore().unwrap();
        match (&agent, &restored) {
            (Agent::Ppo(a), Agent::Ppo(b)) => {
                assert_eq!(a.net.params.flatten(), b.net.params.flatten());
                assert_eq!(a.kind, b.kind);
            }
            _ => panic!("kind changed across round trip"),
        }
    }

    #[test]
    fn refuses_cross_kind_load() {
        let agent = Agent::new(AgentKind::SingleLstmPpo, 1).unwrap();
        let ckpt = Checkpoint::from_agent(&agent);
        let err = ckpt.restore_as(AgentKind::AttnDoubleLstmPpo).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let agent = Agent::new(AgentKind::AttnDoubleLstmPpo, 1).unwrap();
        let mut ckpt = Checkpoint::from_agent(&agent);
        if let Some(p) = ckpt.policy.as_mut() {
            p.blocks[0].data.pop();
            p.blocks[0].cols -= 1;
        }
        assert!(matches!(ckpt.restore(), Err(Error::Shape(_))));
    }

    #[test]
    fn ddqn_round_trip_preserves_both_nets() {
        let agent = Agent::new(AgentKind::Ddqn, 5).unwrap();
        let ckpt = Checkpoint::from_agent(&agent);
        let restored = ckpt.restore().unwrap();
        match (&agent, &restored) {
            (Agent::Ddqn(a), Agent::Ddqn(b)) => {
                assert_eq!(a.online.params.flatten(), b.online.params.flatten());
                assert_eq!(a.target.params.flatten(), b.target.params.flatten());
                assert_eq!(a.steps_done, b.steps_done);
            }
            _ => panic!("kind changed"),
        }
    }

    #[test]
    fn identical_agents_serialize_identically() {
        let a = Agent::new(AgentKind::AttnDoubleLstmPpo, 42).unwrap();
        let b = Agent::new(AgentKind::AttnDoubleLstmPpo, 42).unwrap();
        let ja = serde_json::to_string(&Checkpoint::from_agent(&a)).unwrap();
        let jb = serde_json::to_string(&Checkpoint::from_agent(&b)).unwrap();
        assert_eq!(ja, jb);
    }
}
