//! The bridge between simulator and agents: the 14-entry normalized
//! observation vector, the smoothed short-horizon demand forecast, and the
//! decoding of multi-discrete action indices into cluster configuration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ClusterState, EnhancementMode, StepOutcome};

pub const OBS_DIM: usize = 14;
/// Per-head arity of the multi-discrete action space.
pub const ACTION_ARITIES: [usize; 4] = [4, 3, 3, 3];
pub const JOINT_ACTIONS: usize = 108;

pub const HPA_TARGETS: [u32; 4] = [30, 50, 70, 90];
pub const MULTIPLIERS: [f64; 3] = [1.0, 2.0, 3.0];

/// Fixed-order observation: performance (3), resources (5), active config
/// (3), cyclic time (2), forecast (1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalization constants. The paper-facing metrics are unbounded, so every
/// entry is divided by an explicit, logged constant; `rate_scale` is twice
/// the trace's peak per-step demand and is resolved at run setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    pub latency_scale_ms: f64,
    pub rate_scale: f64,
    pub replica_scale: f64,
    pub percent_scale: f64,
    pub target_scale: f64,
    pub multiplier_scale: f64,
    pub mode_scale: f64,
    pub steps_per_day: u32,
    pub minutes_per_day: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            latency_scale_ms: 100.0,
            rate_scale: 300.0,
            replica_scale: 200.0,
            percent_scale: 200.0,
            target_scale: 90.0,
            multiplier_scale: 3.0,
            mode_scale: 2.0,
            steps_per_day: 500,
            minutes_per_day: 1440.0,
        }
    }
}

impl NormConfig {
    pub fn validate(&self) -> Result<()> {
        let scales = [
            self.latency_scale_ms,
            self.rate_scale,
            self.replica_scale,
            self.percent_scale,
            self.target_scale,
            self.multiplier_scale,
            self.mode_scale,
            self.minutes_per_day,
        ];
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) || self.steps_per_day == 0 {
            return Err(Error::config("normalization scales must be finite and > 0"));
        }
        Ok(())
    }

    /// Minute-of-day for step `t`: one simulated day of `steps_per_day` steps
    /// spans one full `minutes_per_day` cycle.
    pub fn minute_of_day(&self, t: usize) -> f64 {
        (t % self.steps_per_day as usize) as f64 * self.minutes_per_day
            / self.steps_per_day as f64
    }
}

/// Sliding window of recent admitted rates with exponentially decaying
/// weights; `n_hat` is the smoothed short-horizon demand estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastState {
    /// Most recent first.
    window: VecDeque<f64>,
    window_len: usize,
    alpha: f64,
    n_hat: f64,
}

impl ForecastState {
    pub fn new(window_len: usize, alpha: f64) -> Result<Self> {
        if window_len == 0 || !(0.0..1.0).contains(&alpha) {
            return Err(Error::config(format!(
                "forecast needs window_len >= 1 and alpha in [0,1), got {window_len}/{alpha}"
            )));
        }
        Ok(ForecastState {
            window: VecDeque::with_capacity(window_len),
            window_len,
            alpha,
            n_hat: 0.0,
        })
    }

    pub fn n_hat(&self) -> f64 {
        self.n_hat
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }
}

/// Pushes an admitted-rate sample and recomputes the weighted mean over the
/// window, weights proportional to (1 - alpha)^i with the newest first.
pub fn update_forecast(forecast: &ForecastState, admitted: f64) -> Result<ForecastState> {
    if !admitted.is_finite() || admitted < 0.0 {
        return Err(Error::numeric(format!(
            "admitted rate must be finite and >= 0, got {admitted}"
        )));
    }
    let mut next = forecast.clone();
    next.window.push_front(admitted);
    next.window.truncate(next.window_len);
    let decay = 1.0 - next.alpha;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut w = 1.0;
    for &x in &next.window {
        num += w * x;
        den += w;
        w *= decay;
    }
    next.n_hat = num / den;
    Ok(next)
}

/// Raw multi-discrete action: one index per head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVector {
    pub targ: u8,
    pub lr: u8,
    pub mult: u8,
    pub enh: u8,
}

impl ActionVector {
    pub fn new(targ: u8, lr: u8, mult: u8, enh: u8) -> Self {
        ActionVector { targ, lr, mult, enh }
    }

    pub fn indices(&self) -> [usize; 4] {
        [
            self.targ as usize,
            self.lr as usize,
            self.mult as usize,
            self.enh as usize,
        ]
    }
}

/// Training-mode indicator selected by the `lr` head. Logged only; the
/// optimizer schedule is not affected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrFlag {
    Decrease,
    Base,
    Increase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodedAction {
    pub hpa_target: u32,
    pub lr_flag: LrFlag,
    pub multiplier: f64,
    pub mode: EnhancementMode,
}

impl DecodedAction {
    /// The static-HPA configuration: 50% target, multiplier 1.0, mode OFF.
    pub fn static_hpa() -> Self {
        DecodedAction {
            hpa_target: 50,
            lr_flag: LrFlag::Base,
            multiplier: 1.0,
            mode: EnhancementMode::Off,
        }
    }

    /// Writes the decoded configuration into the cluster state.
    pub fn apply_to(&self, state: &mut ClusterState) {
        state.hpa_target = self.hpa_target;
        state.multiplier = self.multiplier;
        state.mode = self.mode;
    }
}

/// Deterministic table lookup from action indices to configuration values.
/// Out-of-range indices are an error, never clamped.
pub fn decode_action(a: &ActionVector) -> Result<DecodedAction> {
    let target = HPA_TARGETS
        .get(a.targ as usize)
        .ok_or_else(|| Error::Usage(format!("a_targ index {} out of range", a.targ)))?;
    let lr_flag = match a.lr {
        0 => LrFlag::Decrease,
        1 => LrFlag::Base,
        2 => LrFlag::Increase,
        i => return Err(Error::Usage(format!("a_lr index {i} out of range"))),
    };
    let multiplier = MULTIPLIERS
        .get(a.mult as usize)
        .ok_or_else(|| Error::Usage(format!("a_mult index {} out of range", a.mult)))?;
    let mode = match a.enh {
        0 => EnhancementMode::Off,
        1 => EnhancementMode::Mod,
        2 => EnhancementMode::Aggr,
        i => return Err(Error::Usage(format!("a_enh index {i} out of range"))),
    };
    Ok(DecodedAction {
        hpa_target: *target,
        lr_flag,
        multiplier: *multiplier,
        mode,
    })
}

/// Inverse of `decode_action`; together they are a bijection over the 108
/// valid configurations.
pub fn encode_action(d: &DecodedAction) -> Result<ActionVector> {
    let targ = HPA_TARGETS
        .iter()
        .position(|&t| t == d.hpa_target)
        .ok_or_else(|| Error::Usage(format!("target {} not in mapping set", d.hpa_target)))?;
    let lr = match d.lr_flag {
        LrFlag::Decrease => 0,
        LrFlag::Base => 1,
        LrFlag::Increase => 2,
    };
    let mult = MULTIPLIERS
        .iter()
        .position(|&m| m == d.multiplier)
        .ok_or_else(|| Error::Usage(format!("multiplier {} not in mapping set", d.multiplier)))?;
    Ok(ActionVector::new(targ as u8, lr, mult as u8, d.mode.index()))
}

/// Builds the observation for step `t` from same-step inputs.
pub fn build_observation(
    state: &ClusterState,
    outcome: &StepOutcome,
    forecast: &ForecastState,
    t: usize,
    norms: &NormConfig,
) -> Result<Observation> {
    let minute = norms.minute_of_day(t);
    let angle = 2.0 * std::f64::consts::PI * minute / norms.minutes_per_day;
    let values = [
        // performance group
        outcome.avg_latency_ms / norms.latency_scale_ms,
        outcome.success_ratio,
        outcome.admitted as f64 / norms.rate_scale,
        // resource group
        state.replicas_ready as f64 / norms.replica_scale,
        state.last_utilization / norms.percent_scale,
        state.pod_ram / norms.percent_scale,
        state.cluster_cpu_total / norms.percent_scale,
        state.cluster_ram_total / norms.percent_scale,
        // active configuration group
        state.hpa_target as f64 / norms.target_scale,
        state.multiplier / norms.multiplier_scale,
        state.mode.index() as f64 / norms.mode_scale,
        // cyclic time
        angle.cos(),
        angle.sin(),
        // forecast
        forecast.n_hat() / norms.rate_scale,
    ];
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite observation entry at index {bad}"
        )));
    }
    Ok(Observation(values))
}
