//! Run configuration: a flat, line-oriented `key = value` format with
//! `[sections]`, diff-friendly and parsed without dependencies. Unknown keys
//! are rejected; omitted keys take the documented defaults; the fully
//! resolved configuration is echoed into every output directory.
//!
//! One master seed drives every component through fixed ChaCha substreams
//! (see `streams`), so trace sampling, initialization, exploration and
//! simulator jitter can be varied independently by seed arithmetic.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentKind, DdqnConfig};
use crate::control::{ACTION_ARITIES, OBS_DIM};
use crate::envloop::EnvConfig;
use crate::error::{Error, Result};
use crate::reward::{RewardWeights, SloThresholds};
use crate::sim::ClusterConfig;
use crate::trace::{SynthConfig, WorkloadTrace};
use crate::training::PpoConfig;

/// Substream ids of the master seed. Components draw from
/// `ChaCha12Rng::seed_from_u64(master)` with `set_stream(id)`.
pub mod streams {
    /// Trace day sampling and synthetic demand generation.
    pub const TRACE: u64 = 1;
    /// Network weight initialization.
    pub const INIT: u64 = 2;
    /// Action sampling, dropout masks and epsilon-greedy exploration.
    pub const EXPLORE: u64 = 3;
    /// Minibatch shuffling.
    pub const SHUFFLE: u64 = 4;
    /// Simulator jitter; episode `k` uses stream `SIM_BASE + k`.
    pub const SIM_BASE: u64 = 1 << 32;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceProtocol {
    pub days: usize,
    pub train_days: usize,
    pub steps_per_day: u32,
    pub step_seconds: u32,
}

impl Default for TraceProtocol {
    fn default() -> Self {
        TraceProtocol {
            days: 7,
            train_days: 5,
            steps_per_day: 500,
            step_seconds: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub base_rate: f64,
    pub amplitude: f64,
    pub burst_prob: f64,
    pub burst_mult_min: f64,
    pub burst_mult_max: f64,
    pub burst_len_min: u32,
    pub burst_len_max: u32,
    pub burst_ramp_steps: u32,
    pub burst_season: f64,
    pub noise: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            base_rate: 120.0,
            amplitude: 60.0,
            burst_prob: 0.08,
            burst_mult_min: 3.0,
            burst_mult_max: 6.0,
            burst_len_min: 3,
            burst_len_max: 8,
            burst_ramp_steps: 3,
            burst_season: 1.0,
            noise: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSection {
    pub latency_scale_ms: f64,
    /// None = resolve to 2 x the trace's peak per-step demand.
    pub rate_scale: Option<f64>,
    /// None = resolve to the simulator's max_replicas.
    pub replica_scale: Option<f64>,
    pub percent_scale: f64,
    pub target_scale: f64,
    pub multiplier_scale: f64,
    pub mode_scale: f64,
}

impl Default for NormSection {
    fn default() -> Self {
        NormSection {
            latency_scale_ms: 100.0,
            rate_scale: None,
            replica_scale: None,
            percent_scale: 200.0,
            target_scale: 90.0,
            multiplier_scale: 3.0,
            mode_scale: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSection {
    pub window: usize,
    pub alpha: f64,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            window: 3,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub agent: AgentKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Trace source: a `.json` canonical trace, a `.csv` to ingest, or None
    /// for the synthetic generator.
    pub trace_path: Option<PathBuf>,
    pub train_episodes: usize,
    pub checkpoint_every_updates: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub trace: TraceProtocol,
    pub synth: SynthSection,
    pub sim: ClusterConfig,
    pub norm: NormSection,
    pub forecast: ForecastSection,
    pub weights: RewardWeights,
    pub slo: SloThresholds,
    pub ppo: PpoConfig,
    pub ddqn: DdqnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            agent: AgentKind::AttnDoubleLstmPpo,
            seed: 42,
            out_dir: PathBuf::from("runs/default"),
            trace_path: None,
            train_episodes: 60,
            checkpoint_every_updates: 0,
            state_dim: OBS_DIM,
            action_dim: ACTION_ARITIES.len(),
            trace: TraceProtocol::default(),
            synth: SynthSection::default(),
            sim: ClusterConfig::default(),
            norm: NormSection::default(),
            forecast: ForecastSection::default(),
            weights: RewardWeights::default(),
            slo: SloThresholds::default(),
            ppo: PpoConfig::default(),
            ddqn: DdqnConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim != OBS_DIM {
            return Err(Error::config(format!(
                "state_dim {} rejected: the state dimension is fixed at {OBS_DIM}",
                self.state_dim
            )));
        }
        if self.action_dim != ACTION_ARITIES.len() {
            return Err(Error::config(format!(
                "action_dim {} rejected: the action dimension is fixed at {}",
                self.action_dim,
                ACTION_ARITIES.len()
            )));
        }
        if self.trace.train_days == 0 || self.trace.train_days >= self.trace.days {
            return Err(Error::config("need 0 < train_days < days"));
        }
        if self.train_episodes == 0 {
            return Err(Error::config("train_episodes must be > 0"));
        }
        self.sim.validate()?;
        self.weights.validate()?;
        self.slo.validate()?;
        self.ppo.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut seen: std::collections::HashSet<String> = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                const SECTIONS: [&str; 9] = [
                    "run", "trace", "synth", "sim", "norm", "forecast", "reward", "ppo", "ddqn",
                ];
                if !SECTIONS.contains(&section.as_str()) {
                    return Err(Error::ConfigAt {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::ConfigAt {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let full = format!("{section}.{key}");
            if !seen.insert(full.clone()) {
                return Err(Error::ConfigAt {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("duplicate key {full}"),
                });
            }
            cfg.set(&section, key, value).map_err(|e| Error::ConfigAt {
                path: path.to_path_buf(),
                line: lineno,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e| Error::config(format!("bad value for {key}: {e}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                other => Err(Error::config(format!("bad boolean for {key}: {other}"))),
            }
        }
        fn auto_or(key: &str, v: &str) -> Result<Option<f64>> {
            if v == "auto" {
                Ok(None)
            } else {
                Ok(Some(num::<f64>(key, v)?))
            }
        }

        match (section, key) {
            ("run", "agent") => self.agent = AgentKind::parse(value)?,
            ("run", "seed") => self.seed = num(key, value)?,
            ("run", "out_dir") => self.out_dir = PathBuf::from(value),
            ("run", "trace_path") => {
                self.trace_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            ("run", "train_episodes") => self.train_episodes = num(key, value)?,
            ("run", "checkpoint_every_updates") => {
                self.checkpoint_every_updates = num(key, value)?
            }
            ("run", "state_dim") => self.state_dim = num(key, value)?,
            ("run", "action_dim") => self.action_dim = num(key, value)?,

            ("trace", "days") => self.trace.days = num(key, value)?,
            ("trace", "train_days") => self.trace.train_days = num(key, value)?,
            ("trace", "steps_per_day") => self.trace.steps_per_day = num(key, value)?,
            ("trace", "step_seconds") => self.trace.step_seconds = num(key, value)?,

            ("synth", "base_rate") => self.synth.base_rate = num(key, value)?,
            ("synth", "amplitude") => self.synth.amplitude = num(key, value)?,
            ("synth", "burst_prob") => self.synth.burst_prob = num(key, value)?,
            ("synth", "burst_mult_min") => self.synth.burst_mult_min = num(key, value)?,
            ("synth", "burst_mult_max") => self.synth.burst_mult_max = num(key, value)?,
            ("synth", "burst_len_min") => self.synth.burst_len_min = num(key, value)?,
            ("synth", "burst_len_max") => self.synth.burst_len_max = num(key, value)?,
            ("synth", "burst_ramp_steps") => self.synth.burst_ramp_steps = num(key, value)?,
            ("synth", "burst_season") => self.synth.burst_season = num(key, value)?,
            ("synth", "noise") => self.synth.noise = num(key, value)?,

            ("sim", "capacity_per_replica") => self.sim.capacity_per_replica = num(key, value)?,
            ("sim", "nominal_capacity_per_replica") => {
                self.sim.nominal_capacity_per_replica = num(key, value)?
            }
            ("sim", "max_replicas") => self.sim.max_replicas = num(key, value)?,
            ("sim", "min_replicas") => self.sim.min_replicas = num(key, value)?,
            ("sim", "base_latency_ms") => self.sim.base_latency_ms = num(key, value)?,
            ("sim", "queue_latency_ms") => self.sim.queue_latency_ms = num(key, value)?,
            ("sim", "overload_serve_factor") => {
                self.sim.overload_serve_factor = num(key, value)?
            }
            ("sim", "cold_start_steps") => self.sim.cold_start_steps = num(key, value)?,
            ("sim", "gateway_base_rate") => self.sim.gateway_base_rate = num(key, value)?,
            ("sim", "p90_sigma") => self.sim.p90_sigma = num(key, value)?,
            ("sim", "p90_jitter") => self.sim.p90_jitter = num(key, value)?,
            ("sim", "hpa_tolerance") => self.sim.hpa_tolerance = num(key, value)?,
            ("sim", "hpa_down_window") => self.sim.hpa_down_window = num(key, value)?,
            ("sim", "enh_latency_threshold_ms") => {
                self.sim.enh_latency_threshold_ms = num(key, value)?
            }
            ("sim", "enh_downscale_cap") => self.sim.enh_downscale_cap = num(key, value)?,
            ("sim", "ram_pod_base_pct") => self.sim.ram_pod_base_pct = num(key, value)?,
            ("sim", "ram_pod_per_load") => self.sim.ram_pod_per_load = num(key, value)?,
            ("sim", "cluster_cpu_base_pct") => self.sim.cluster_cpu_base_pct = num(key, value)?,
            ("sim", "cluster_cpu_per_replica") => {
                self.sim.cluster_cpu_per_replica = num(key, value)?
            }
            ("sim", "cluster_cpu_per_admitted") => {
                self.sim.cluster_cpu_per_admitted = num(key, value)?
            }
            ("sim", "cluster_ram_base_pct") => self.sim.cluster_ram_base_pct = num(key, value)?,
            ("sim", "cluster_ram_per_replica") => {
                self.sim.cluster_ram_per_replica = num(key, value)?
            }

            ("norm", "latency_scale_ms") => self.norm.latency_scale_ms = num(key, value)?,
            ("norm", "rate_scale") => self.norm.rate_scale = auto_or(key, value)?,
            ("norm", "replica_scale") => self.norm.replica_scale = auto_or(key, value)?,
            ("norm", "percent_scale") => self.norm.percent_scale = num(key, value)?,
            ("norm", "target_scale") => self.norm.target_scale = num(key, value)?,
            ("norm", "multiplier_scale") => self.norm.multiplier_scale = num(key, value)?,
            ("norm", "mode_scale") => self.norm.mode_scale = num(key, value)?,

            ("forecast", "window") => self.forecast.window = num(key, value)?,
            ("forecast", "alpha") => self.forecast.alpha = num(key, value)?,

            ("reward", "w_sla") => self.weights.w_sla = num(key, value)?,
            ("reward", "w_cpu") => self.weights.w_cpu = num(key, value)?,
            ("reward", "w_succ") => self.weights.w_succ = num(key, value)?,
            ("reward", "w_stab") => self.weights.w_stab = num(key, value)?,
            ("reward", "w_fcst") => self.weights.w_fcst = num(key, value)?,
            ("reward", "l_target_ms") => self.slo.target_ms = num(key, value)?,
            ("reward", "l_thresh_ms") => self.slo.hard_ms = num(key, value)?,

            ("ppo", "gamma") => self.ppo.gamma = num(key, value)?,
            ("ppo", "gae_lambda") => self.ppo.gae_lambda = num(key, value)?,
            ("ppo", "clip") => self.ppo.clip = num(key, value)?,
            ("ppo", "ent_coef") => self.ppo.ent_coef = num(key, value)?,
            ("ppo", "vf_coef") => self.ppo.vf_coef = num(key, value)?,
            ("ppo", "lr_initial") => self.ppo.lr_initial = num(key, value)?,
            ("ppo", "minibatch_size") => self.ppo.minibatch_size = num(key, value)?,
            ("ppo", "epochs") => self.ppo.epochs = num(key, value)?,
            ("ppo", "kl_target") => self.ppo.kl_target = num(key, value)?,
            ("ppo", "kl_beta_init") => self.ppo.kl_beta_init = num(key, value)?,
            ("ppo", "rollout_steps") => self.ppo.rollout_steps = num(key, value)?,
            ("ppo", "seq_len") => self.ppo.seq_len = num(key, value)?,
            ("ppo", "max_grad_norm") => self.ppo.max_grad_norm = num(key, value)?,
            ("ppo", "normalize_advantages") => {
                self.ppo.normalize_advantages = flag(key, value)?
            }

            ("ddqn", "gamma") => self.ddqn.gamma = num(key, value)?,
            ("ddqn", "epsilon_start") => self.ddqn.epsilon_start = num(key, value)?,
            ("ddqn", "epsilon_end") => self.ddqn.epsilon_end = num(key, value)?,
            ("ddqn", "epsilon_decay_frac") => self.ddqn.epsilon_decay_frac = num(key, value)?,
            ("ddqn", "target_sync_steps") => self.ddqn.target_sync_steps = num(key, value)?,
            ("ddqn", "batch_size") => self.ddqn.batch_size = num(key, value)?,
            ("ddqn", "learning_rate") => self.ddqn.learning_rate = num(key, value)?,
            ("ddqn", "buffer_capacity") => self.ddqn.buffer_capacity = num(key, value)?,
            ("ddqn", "update_every") => self.ddqn.update_every = num(key, value)?,

            _ => {
                return Err(Error::config(format!(
                    "unknown key `{key}` in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    /// Renders the fully resolved configuration, stable order, suitable for
    /// echoing into the output directory and re-running bit-exactly.
    pub fn to_config_string(&self) -> String {
        let auto = |v: &Option<f64>| match v {
            Some(x) => x.to_string(),
            None => "auto".to_string(),
        };
        format!(
            "[run]\n\
             agent = {}\n\
             seed = {}\n\
             out_dir = {}\n\
             trace_path = {}\n\
             train_episodes = {}\n\
             checkpoint_every_updates = {}\n\
             state_dim = {}\n\
             action_dim = {}\n\
             \n[trace]\n\
             days = {}\ntrain_days = {}\nsteps_per_day = {}\nstep_seconds = {}\n\
             \n[synth]\n\
             base_rate = {}\namplitude = {}\nburst_prob = {}\nburst_mult_min = {}\nburst_mult_max = {}\nburst_len_min = {}\nburst_len_max = {}\nburst_ramp_steps = {}\nburst_season = {}\nnoise = {}\n\
             \n[sim]\n\
             capacity_per_replica = {}\nnominal_capacity_per_replica = {}\nmax_replicas = {}\nmin_replicas = {}\nbase_latency_ms = {}\nqueue_latency_ms = {}\noverload_serve_factor = {}\ncold_start_steps = {}\ngateway_base_rate = {}\np90_sigma = {}\np90_jitter = {}\nhpa_tolerance = {}\nhpa_down_window = {}\nenh_latency_threshold_ms = {}\nenh_downscale_cap = {}\nram_pod_base_pct = {}\nram_pod_per_load = {}\ncluster_cpu_base_pct = {}\ncluster_cpu_per_replica = {}\ncluster_cpu_per_admitted = {}\ncluster_ram_base_pct = {}\ncluster_ram_per_replica = {}\n\
             \n[norm]\n\
             latency_scale_ms = {}\nrate_scale = {}\nreplica_scale = {}\npercent_scale = {}\ntarget_scale = {}\nmultiplier_scale = {}\nmode_scale = {}\n\
             \n[forecast]\nwindow = {}\nalpha = {}\n\
             \n[reward]\n\
             w_sla = {}\nw_cpu = {}\nw_succ = {}\nw_stab = {}\nw_fcst = {}\nl_target_ms = {}\nl_thresh_ms = {}\n\
             \n[ppo]\n\
             gamma = {}\ngae_lambda = {}\nclip = {}\nent_coef = {}\nvf_coef = {}\nlr_initial = {}\nminibatch_size = {}\nepochs = {}\nkl_target = {}\nkl_beta_init = {}\nrollout_steps = {}\nseq_len = {}\nmax_grad_norm = {}\nnormalize_advantages = {}\n\
             \n[ddqn]\n\
             gamma = {}\nepsilon_start = {}\nepsilon_end = {}\nepsilon_decay_frac = {}\ntarget_sync_steps = {}\nbatch_size = {}\nlearning_rate = {}\nbuffer_capacity = {}\nupdate_every = {}\n",
            self.agent.as_str(),
            self.seed,
            self.out_dir.display(),
            self.trace_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            self.train_episodes,
            self.checkpoint_every_updates,
            self.state_dim,
            self.action_dim,
            self.trace.days,
            self.trace.train_days,
            self.trace.steps_per_day,
            self.trace.step_seconds,
            self.synth.base_rate,
            self.synth.amplitude,
            self.synth.burst_prob,
            self.synth.burst_mult_min,
            self.synth.burst_mult_max,
            self.synth.burst_len_min,
            self.synth.burst_len_max,
            self.synth.burst_ramp_steps,
            self.synth.burst_season,
            self.synth.noise,
            self.sim.capacity_per_replica,
            self.sim.nominal_capacity_per_replica,
            self.sim.max_replicas,
            self.sim.min_replicas,
            self.sim.base_latency_ms,
            self.sim.queue_latency_ms,
            self.sim.overload_serve_factor,
            self.sim.cold_start_steps,
            self.sim.gateway_base_rate,
            self.sim.p90_sigma,
            self.sim.p90_jitter,
            self.sim.hpa_tolerance,
            self.sim.hpa_down_window,
            self.sim.enh_latency_threshold_ms,
            self.sim.enh_downscale_cap,
            self.sim.ram_pod_base_pct,
            self.sim.ram_pod_per_load,
            self.sim.cluster_cpu_base_pct,
            self.sim.cluster_cpu_per_replica,
            self.sim.cluster_cpu_per_admitted,
            self.sim.cluster_ram_base_pct,
            self.sim.cluster_ram_per_replica,
            self.norm.latency_scale_ms,
            auto(&self.norm.rate_scale),
            auto(&self.norm.replica_scale),
            self.norm.percent_scale,
            self.norm.target_scale,
            self.norm.multiplier_scale,
            self.norm.mode_scale,
            self.forecast.window,
            self.forecast.alpha,
            self.weights.w_sla,
            self.weights.w_cpu,
            self.weights.w_succ,
            self.weights.w_stab,
            self.weights.w_fcst,
            self.slo.target_ms,
            self.slo.hard_ms,
            self.ppo.gamma,
            self.ppo.gae_lambda,
            self.ppo.clip,
            self.ppo.ent_coef,
            self.ppo.vf_coef,
            self.ppo.lr_initial,
            self.ppo.minibatch_size,
            self.ppo.epochs,
            self.ppo.kl_target,
            self.ppo.kl_beta_init,
            self.ppo.rollout_steps,
            self.ppo.seq_len,
            self.ppo.max_grad_norm,
            self.ppo.normalize_advantages,
            self.ddqn.gamma,
            self.ddqn.epsilon_start,
            self.ddqn.epsilon_end,
            self.ddqn.epsilon_decay_frac,
            self.ddqn.target_sync_steps,
            self.ddqn.batch_size,
            self.ddqn.learning_rate,
            self.ddqn.buffer_capacity,
            self.ddqn.update_every,
        )
    }

    /// The synthetic generator settings with the protocol shape and the
    /// master seed's trace stream applied.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed ^ streams::TRACE,
            days: self.trace.days,
            train_days: self.trace.train_days,
            steps_per_day: self.trace.steps_per_day,
            step_seconds: self.trace.step_seconds,
            base_rate: self.synth.base_rate,
            amplitude: self.synth.amplitude,
            burst_prob: self.synth.burst_prob,
            burst_mult_min: self.synth.burst_mult_min,
            burst_mult_max: self.synth.burst_mult_max,
            burst_len_min: self.synth.burst_len_min,
            burst_len_max: self.synth.burst_len_max,
            burst_ramp_steps: self.synth.burst_ramp_steps,
            burst_season: self.synth.burst_season,
            noise: self.synth.noise,
        }
    }

    /// Environment settings with the normalization scales resolved against
    /// the trace (`auto` entries become 2 x peak demand / max replicas).
    pub fn env_config(&self, trace: &WorkloadTrace) -> EnvConfig {
        let mut norms = crate::control::NormConfig {
            latency_scale_ms: self.norm.latency_scale_ms,
            rate_scale: self
                .norm
                .rate_scale
                .unwrap_or_else(|| (2 * trace.peak()).max(1) as f64),
            replica_scale: self
                .norm
                .replica_scale
                .unwrap_or(self.sim.max_replicas as f64),
            percent_scale: self.norm.percent_scale,
            target_scale: self.norm.target_scale,
            multiplier_scale: self.norm.multiplier_scale,
            mode_scale: self.norm.mode_scale,
            steps_per_day: self.trace.steps_per_day,
            minutes_per_day: 1440.0,
        };
        norms.steps_per_day = trace.steps_per_day;
        EnvConfig {
            cluster: self.sim.clone(),
            norms,
            weights: self.weights,
            slo: self.slo,
            forecast_window: self.forecast.window,
            forecast_alpha: self.forecast.alpha,
            seed: self.seed,
        }
    }
}
