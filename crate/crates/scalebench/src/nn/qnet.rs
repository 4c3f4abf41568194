//! Q-network for the value-based baseline: an MLP from the observation to
//! one Q-value per joint action (all 108 combinations enumerated).

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::control::{JOINT_ACTIONS, OBS_DIM};
use crate::error::{Error, Result};

use super::init;
use super::tape::{BlockId, NodeId, ParamStore, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetArch {
    pub obs_dim: usize,
    pub hidden: usize,
    pub actions: usize,
}

impl Default for QNetArch {
    fn default() -> Self {
        QNetArch {
            obs_dim: OBS_DIM,
            hidden: 128,
            actions: JOINT_ACTIONS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QNet {
    pub arch: QNetArch,
    pub params: ParamStore,
    l1_w: BlockId,
    l1_b: BlockId,
    l2_w: BlockId,
    l2_b: BlockId,
    out_w: BlockId,
    out_b: BlockId,
}

impl QNet {
    pub fn new(arch: QNetArch, seed: u64) -> Result<Self> {
        if arch.obs_dim == 0 || arch.hidden == 0 || arch.actions == 0 {
            return Err(Error::config("QNet dimensions must be > 0"));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let l1_w = params.add(
            "q.l1.w",
            arch.hidden,
            arch.obs_dim,
            init::xavier_uniform(arch.hidden, arch.obs_dim, &mut rng),
        );
        let l1_b = params.add("q.l1.b", arch.hidden, 1, vec![0.0; arch.hidden]);
        let l2_w = params.add(
            "q.l2.w",
            arch.hidden,
            arch.hidden,
            init::xavier_uniform(arch.hidden, arch.hidden, &mut rng),
        );
        let l2_b = params.add("q.l2.b", arch.hidden, 1, vec![0.0; arch.hidden]);
        let out_w = params.add(
            "q.out.w",
            arch.actions,
            arch.hidden,
            init::xavier_uniform(arch.actions, arch.hidden, &mut rng),
        );
        let out_b = params.add("q.out.b", arch.actions, 1, vec![0.0; arch.actions]);
        Ok(QNet {
            arch,
            params,
            l1_w,
            l1_b,
            l2_w,
            l2_b,
            out_w,
            out_b,
        })
    }

    pub fn forward<'p>(&self, tape: &mut Tape<'p>, obs: &[f64]) -> Result<NodeId> {
        if obs.len() != self.arch.obs_dim {
            return Err(Error::Shape(format!(
                "observation length {} != {}",
                obs.len(),
                self.arch.obs_dim
            )));
        }
        let x = tape.constant(obs.to_vec());
        let h = tape.matvec(self.l1_w, x);
        let h = tape.add_param(self.l1_b, h);
        let h = tape.relu(h);
        let h = tape.matvec(self.l2_w, h);
        let h = tape.add_param(self.l2_b, h);
        let h = tape.relu(h);
        let q = tape.matvec(self.out_w, h);
        let q = tape.add_param(self.out_b, q);
        tape.check()?;
        Ok(q)
    }

    /// Q-values without keeping the tape around.
    pub fn q_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let q = self.forward(&mut tape, obs)?;
        Ok(tape.value(q).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_arity_is_joint_action_count() {
        let net = QNet::new(QNetArch::default(), 1).unwrap();
        let obs = vec![0.1; OBS_DIM];
        let q = net.q_values(&obs).unwrap();
        assert_eq!(q.len(), 108);
    }

    #[test]
    fn rejects_bad_observation_length() {
        let net = QNet::new(QNetArch::default(), 1).unwrap();
        assert!(net.q_values(&[0.0; 5]).is_err());
    }
}
