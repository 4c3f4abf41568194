//! The control-loop environment: replays a trace split day by day, applies
//! decoded actions to the cluster, advances the simulator, updates the demand
//! forecast and emits rewards and telemetry records.
//!
//! One episode is one simulated day. Resetting an episode restores the
//! cluster and forecast to their initial states and re-derives the simulator
//! jitter stream from (seed, episode), so runs are reproducible step for
//! step.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    build_observation, update_forecast, DecodedAction, ForecastState, NormConfig, Observation,
};
use crate::error::{Error, Result};
use crate::reward::{self, RewardBreakdown, RewardWeights, SloThresholds};
use crate::sim::{self, ClusterConfig, ClusterState, StepOutcome};
use crate::telemetry::TelemetryRecord;
use crate::trace::{SplitLabel, WorkloadTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub cluster: ClusterConfig,
    pub norms: NormConfig,
    pub weights: RewardWeights,
    pub slo: SloThresholds,
    pub forecast_window: usize,
    pub forecast_alpha: f64,
    /// Seed of the simulator jitter stream; episodes use distinct substreams.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            cluster: ClusterConfig::default(),
            norms: NormConfig::default(),
            weights: RewardWeights::default(),
            slo: SloThresholds::default(),
            forecast_window: 3,
            forecast_alpha: 0.5,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.cluster.validate()?;
        self.norms.validate()?;
        self.weights.validate()?;
        self.slo.validate()?;
        if self.forecast_window == 0 || !(0.0..1.0).contains(&self.forecast_alpha) {
            return Err(Error::config("forecast window/alpha out of range"));
        }
        Ok(())
    }
}

pub struct EnvStep {
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub outcome: StepOutcome,
    pub done: bool,
    /// Forecast that was current when the step ran.
    pub n_hat: f64,
    pub record: TelemetryRecord,
}

pub struct SimEnv {
    pub trace: WorkloadTrace,
    pub split: SplitLabel,
    pub cfg: EnvConfig,
    state: ClusterState,
    forecast: ForecastState,
    rng: ChaCha12Rng,
    episode: usize,
    t: usize,
    obs: Observation,
    steps_per_day: usize,
    split_days: usize,
}

impl SimEnv {
    pub fn new(trace: WorkloadTrace, split: SplitLabel, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        trace.validate()?;
        let split_days = trace.day_indices(split).len();
        if split_days == 0 {
            return Err(Error::data(format!("trace has no days in split {split:?}")));
        }
        let steps_per_day = trace.steps_per_day as usize;
        let mut env = SimEnv {
            trace,
            split,
            cfg,
            state: ClusterState::initial(&ClusterConfig::default()),
            forecast: ForecastState::new(3, 0.5)?,
            rng: ChaCha12Rng::seed_from_u64(0),
            episode: 0,
            t: 0,
            obs: Observation([0.0; crate::control::OBS_DIM]),
            steps_per_day,
            split_days,
        };
        env.reset(0)?;
        Ok(env)
    }

    pub fn steps_per_day(&self) -> usize {
        self.steps_per_day
    }

    pub fn split_days(&self) -> usize {
        self.split_days
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn state(&self) -> &ClusterState {
        &self.state
    }

    /// Starts episode `episode` (day index `episode % split_days`).
    pub fn reset(&mut self, episode: usize) -> Result<&Observation> {
        self.state = ClusterState::initial(&self.cfg.cluster);
        self.forecast = ForecastState::new(self.cfg.forecast_window, self.cfg.forecast_alpha)?;
        self.rng = ChaCha12Rng::seed_from_u64(self.cfg.seed);
        self.rng.set_stream(episode as u64 + 1);
        self.episode = episode;
        self.t = 0;
        let idle = StepOutcome {
            offered: 0,
            admitted: 0,
            served: 0,
            shed: 0,
            dropped: 0,
            avg_latency_ms: self.state.last_latency_ms,
            p90_latency_ms: self.state.last_p90_ms,
            success_ratio: 1.0,
            replica_delta: 0,
            replicas: self.state.replicas_ready,
            u_cpu: 0.0,
        };
        self.obs = build_observation(&self.state, &idle, &self.forecast, 0, &self.cfg.norms)?;
        Ok(&self.obs)
    }

    /// Applies the decoded action, advances one control interval.
    pub fn step(&mut self, action: &DecodedAction) -> Result<EnvStep> {
        if self.t >= self.steps_per_day {
            return Err(Error::Usage(
                "episode is done; call reset before stepping".into(),
            ));
        }
        action.apply_to(&mut self.state);

        let day_pos = self.episode % self.split_days;
        let split_t = day_pos * self.steps_per_day + self.t;
        let offered = self.trace.demand_at(self.split, split_t)?;
        let n_hat = self.forecast.n_hat();

        let (next_state, outcome) = sim::step(&self.state, &self.cfg.cluster, offered, &mut self.rng)?;
        let forecast = update_forecast(&self.forecast, outcome.admitted as f64)?;
        let breakdown = reward::compute(
            outcome.avg_latency_ms,
            outcome.u_cpu,
            action.hpa_target as f64,
            outcome.replica_delta,
            outcome.replicas,
            self.cfg.cluster.nominal_capacity_per_replica,
            n_hat,
            outcome.success_ratio,
            &self.cfg.slo,
            &self.cfg.weights,
        )?;

        let record = TelemetryRecord::from_step(
            self.episode * self.steps_per_day + self.t,
            &outcome,
            next_state.pending_count(),
            next_state.hpa_target,
            next_state.multiplier,
            next_state.mode.index(),
            breakdown,
            n_hat,
        );

        self.state = next_state;
        self.forecast = forecast;
        self.t += 1;
        let done = self.t == self.steps_per_day;
        self.obs = build_observation(&self.state, &outcome, &self.forecast, self.t, &self.cfg.norms)?;

        Ok(EnvStep {
            obs: self.obs,
            reward: breakdown,
            outcome,
            done,
            n_hat,
            record,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{synthesize, SynthConfig};

    fn env() -> SimEnv {
        let trace = synthesize(&SynthConfig {
            seed: 11,
            burst_prob: 0.02,
            noise: 0.05,
            ..SynthConfig::default()
        })
        .unwrap();
        SimEnv::new(trace, SplitLabel::Train, EnvConfig::default()).unwrap()
    }

    #[test]
    fn episode_runs_one_day() {
        let mut e = env();
        let action = DecodedAction::static_hpa();
        let mut dones = 0;
        for t in 0..500 {
            let step = e.step(&action).unwrap();
            if step.done {
                dones += 1;
                assert_eq!(t, 499);
            }
        }
        assert_eq!(dones, 1);
        assert!(e.step(&action).is_err());
        e.reset(1).unwrap();
        assert!(e.step(&action).is_ok());
    }

    #[test]
    fn deterministic_given_seed() {
        let roll = || {
            let mut e = env();
            let action = DecodedAction::static_hpa();
            let mut acc = Vec::new();
            for _ in 0..300 {
                let s = e.step(&action).unwrap();
                acc.push((s.outcome.p90_latency_ms.to_bits(), s.reward.total.to_bits()));
            }
            acc
        };
        assert_eq!(roll(), roll());
    }

    #[test]
    fn records_cover_eval_range() {
        let mut e = env();
        let action = DecodedAction::static_hpa();
        let mut records = Vec::new();
        for ep in 0..2 {
            e.reset(ep).unwrap();
            for _ in 0..500 {
                records.push(e.step(&action).unwrap().record);
            }
        }
        assert_eq!(records.len(), 1000);
        assert_eq!(records[0].t, 0);
        assert_eq!(records[999].t, 999);
    }

    #[test]
    fn forecast_feeds_reward_after_warmup() {
        let mut e = env();
        let action = DecodedAction::static_hpa();
        // first step has no forecast: the alignment term is zero by convention
        let first = e.step(&action).unwrap();
        assert_eq!(first.reward.r_fcst, 0.0);
        let later = e.step(&action).unwrap();
        assert!(later.n_hat > 0.0);
        assert!(later.reward.r_fcst <= 0.0);
    }
}
