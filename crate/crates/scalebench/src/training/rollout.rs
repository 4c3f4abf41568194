//! On-policy rollout storage with the recurrent-state snapshots needed to
//! replay fixed-length sequences during minibatch updates.

use crate::control::{ActionVector, Observation};
use crate::nn::{DropoutMasks, RecurrentValues};

pub struct StepRecord {
    pub obs: Observation,
    pub action: ActionVector,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    /// True when this step began a new episode (recurrent state was zeroed).
    pub episode_start: bool,
    /// Per-head logits at collection time, for the exact KL penalty.
    pub head_logits: Vec<Vec<f64>>,
    /// Dropout masks sampled at collection, replayed verbatim in updates.
    pub masks: DropoutMasks,
}

/// One replay sequence: `len` contiguous steps starting at `start`, with the
/// recurrent state snapshot taken just before `start` was collected.
#[derive(Debug, Clone, Copy)]
pub struct SequenceRef {
    pub snapshot: usize,
    pub start: usize,
    pub len: usize,
}

pub struct RolloutBuffer {
    pub capacity: usize,
    pub seq_len: usize,
    pub steps: Vec<StepRecord>,
    snapshots: Vec<RecurrentValues>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize, seq_len: usize) -> Self {
        RolloutBuffer {
            capacity,
            seq_len,
            steps: Vec::with_capacity(capacity),
            snapshots: Vec::with_capacity(capacity / seq_len + 1),
        }
    }

    /// Stores one step; `state_before` is the recurrent state the policy was
    /// in when it produced this step (snapshotted at sequence boundaries).
    pub fn push(&mut self, record: StepRecord, state_before: &RecurrentValues) {
        if self.steps.len() % self.seq_len == 0 {
            self.snapshots.push(state_before.clone());
        }
        self.steps.push(record);
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn clear(&mut self) {
        self.steps.clear();
        self.snapshots.clear();
    }

    pub fn snapshot(&self, idx: usize) -> &RecurrentValues {
        &self.snapshots[idx]
    }

    /// Contiguous sequences of up to `seq_len` steps covering the buffer.
    pub fn sequences(&self) -> Vec<SequenceRef> {
        let mut seqs = Vec::new();
        let mut start = 0;
        let mut snap = 0;
        while start < self.steps.len() {
            let len = self.seq_len.min(self.steps.len() - start);
            seqs.push(SequenceRef {
                snapshot: snap,
                start,
                len,
            });
            start += len;
            snap += 1;
        }
        seqs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::OBS_DIM;
    use crate::nn::PolicyArch;

    fn record(done: bool) -> StepRecord {
        StepRecord {
            obs: Observation([0.0; OBS_DIM]),
            action: ActionVector::new(0, 0, 0, 0),
            log_prob: -1.0,
            value: 0.0,
            reward: 0.0,
            done,
            episode_start: false,
            head_logits: vec![vec![0.0; 4]],
            masks: DropoutMasks::identity(&PolicyArch::single_lstm()),
        }
    }

    #[test]
    fn snapshots_at_sequence_boundaries() {
        let arch = PolicyArch::single_lstm();
        let mut buf = RolloutBuffer::new(32, 8);
        for _ in 0..20 {
            buf.push(record(false), &RecurrentValues::zeros(&arch));
        }
        let seqs = buf.sequences();
        assert_eq!(seqs.len(), 3);
        assert_eq!(seqs[0].len, 8);
        assert_eq!(seqs[1].start, 8);
        assert_eq!(seqs[2].len, 4);
        assert_eq!(buf.snapshots.len(), 3);
    }

    #[test]
    fn clear_resets_everything() {
        let arch = PolicyArch::single_lstm();
        let mut buf = RolloutBuffer::new(16, 4);
        for _ in 0..16 {
            buf.push(record(false), &RecurrentValues::zeros(&arch));
        }
        assert!(buf.is_full());
        buf.clear();
        assert!(buf.is_empty());
        assert!(buf.sequences().is_empty());
    }
}
