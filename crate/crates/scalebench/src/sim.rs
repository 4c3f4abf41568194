//! Deterministic discrete-time cluster simulator: replica lifecycle with cold
//! starts, gateway admission, an M/M/1-style congestion latency curve, and
//! the internal HPA loop with enhancement-mode overrides.
//!
//! Within one step, in order: pending replicas whose cold start elapsed come
//! online, the gateway admits up to multiplier x base rate, utilization and
//! latency follow from the admitted load on the replicas serving this
//! interval, requests beyond the overload envelope are dropped, and finally
//! the HPA recommendation (dampened by the active enhancement mode) changes
//! the replica set for the next interval.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// z-score of the 90th percentile of the standard normal; turns the lognormal
/// shape parameter into a median-to-P90 ratio.
const P90_Z: f64 = 1.2816;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EnhancementMode {
    Off,
    Mod,
    Aggr,
}

impl EnhancementMode {
    pub fn index(self) -> u8 {
        match self {
            EnhancementMode::Off => 0,
            EnhancementMode::Mod => 1,
            EnhancementMode::Aggr => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Saturation capacity per replica per step (knee of the latency curve).
    pub capacity_per_replica: f64,
    /// Sustainable healthy-load rate per replica: the request rate one
    /// replica serves at the 20 ms operating point (u = 50%). Feeds the
    /// forecast-alignment reward.
    pub nominal_capacity_per_replica: f64,
    pub max_replicas: u32,
    pub min_replicas: u32,
    pub base_latency_ms: f64,
    pub queue_latency_ms: f64,
    /// Requests beyond capacity are served (at saturated latency) up to this
    /// multiple of nominal capacity; the rest are dropped.
    pub overload_serve_factor: f64,
    /// Steps before a newly requested replica serves traffic.
    pub cold_start_steps: u32,
    /// Gateway admission cap per step at multiplier 1.0.
    pub gateway_base_rate: f64,
    /// Lognormal shape for the per-step P90 model.
    pub p90_sigma: f64,
    /// Amplitude of the seeded multiplicative jitter on the P90 output.
    pub p90_jitter: f64,
    /// HPA no-action band around the target ratio.
    pub hpa_tolerance: f64,
    /// Downscale stabilization window (steps).
    pub hpa_down_window: u32,
    /// Latency above which AGGR mode forces a scale-out.
    pub enh_latency_threshold_ms: f64,
    /// MOD/AGGR cap on the fraction of replicas removable per step.
    pub enh_downscale_cap: f64,
    // RAM signals are affine observation-only proxies.
    pub ram_pod_base_pct: f64,
    pub ram_pod_per_load: f64,
    pub cluster_cpu_base_pct: f64,
    pub cluster_cpu_per_replica: f64,
    pub cluster_cpu_per_admitted: f64,
    pub cluster_ram_base_pct: f64,
    pub cluster_ram_per_replica: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            capacity_per_replica: 50.0,
            nominal_capacity_per_replica: 25.0,
            max_replicas: 200,
            min_replicas: 1,
            base_latency_ms: 12.0,
            queue_latency_ms: 8.0,
            overload_serve_factor: 1.5,
            cold_start_steps: 2,
            gateway_base_rate: 500.0,
            p90_sigma: 0.3,
            p90_jitter: 0.05,
            hpa_tolerance: 0.1,
            hpa_down_window: 5,
            enh_latency_threshold_ms: 50.0,
            enh_downscale_cap: 0.3,
            ram_pod_base_pct: 30.0,
            ram_pod_per_load: 0.2,
            cluster_cpu_base_pct: 5.0,
            cluster_cpu_per_replica: 0.4,
            cluster_cpu_per_admitted: 0.01,
            cluster_ram_base_pct: 10.0,
            cluster_ram_per_replica: 0.45,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_per_replica <= 0.0 {
            return Err(Error::config("capacity_per_replica must be > 0"));
        }
        if self.nominal_capacity_per_replica <= 0.0
            || self.nominal_capacity_per_replica > self.capacity_per_replica
        {
            return Err(Error::config(
                "nominal_capacity_per_replica must be in (0, capacity_per_replica]",
            ));
        }
        if self.min_replicas < 1 || self.max_replicas < self.min_replicas {
            return Err(Error::config(
                "need max_replicas >= min_replicas >= 1",
            ));
        }
        if self.overload_serve_factor < 1.0 {
            return Err(Error::config("overload_serve_factor must be >= 1"));
        }
        if self.base_latency_ms <= 0.0 || self.queue_latency_ms <= 0.0 {
            return Err(Error::config("latencies must be > 0"));
        }
        if self.hpa_down_window < 1 {
            return Err(Error::config("hpa_down_window must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.enh_downscale_cap) {
            return Err(Error::config("enh_downscale_cap must be in [0,1)"));
        }
        Ok(())
    }
}

/// A batch of replicas started together; serves once `remaining` hits zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingBatch {
    pub remaining: u32,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub replicas_ready: u32,
    pub pending: Vec<PendingBatch>,
    /// Active HPA CPU target (percent), set by the controller.
    pub hpa_target: u32,
    /// Gateway throughput multiplier, set by the controller.
    pub multiplier: f64,
    pub mode: EnhancementMode,
    pub last_utilization: f64,
    pub last_latency_ms: f64,
    pub last_p90_ms: f64,
    pub last_success_ratio: f64,
    pub admitted: u64,
    pub cluster_cpu_total: f64,
    pub cluster_ram_total: f64,
    pub pod_ram: f64,
    /// Recent raw HPA recommendations for the downscale window.
    pub hpa_window: VecDeque<u32>,
    /// Replica count that served the previous interval.
    pub prev_serving: u32,
}

impl ClusterState {
    pub fn initial(config: &ClusterConfig) -> Self {
        ClusterState {
            replicas_ready: config.min_replicas,
            pending: Vec::new(),
            hpa_target: 50,
            multiplier: 1.0,
            mode: EnhancementMode::Off,
            last_utilization: 0.0,
            last_latency_ms: config.base_latency_ms,
            last_p90_ms: config.base_latency_ms * (P90_Z * config.p90_sigma).exp(),
            last_success_ratio: 1.0,
            admitted: 0,
            cluster_cpu_total: config.cluster_cpu_base_pct
                + config.cluster_cpu_per_replica * config.min_replicas as f64,
            cluster_ram_total: config.cluster_ram_base_pct
                + config.cluster_ram_per_replica * config.min_replicas as f64,
            pod_ram: config.ram_pod_base_pct,
            hpa_window: VecDeque::new(),
            prev_serving: config.min_replicas,
        }
    }

    pub fn pending_count(&self) -> u32 {
        self.pending.iter().map(|b| b.count).sum()
    }
}

/// Everything observable about one simulated interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub offered: u64,
    pub admitted: u64,
    pub served: u64,
    pub shed: u64,
    pub dropped: u64,
    pub avg_latency_ms: f64,
    pub p90_latency_ms: f64,
    pub success_ratio: f64,
    /// Serving replicas this interval minus the previous interval's.
    pub replica_delta: i64,
    /// Replicas that served this interval.
    pub replicas: u32,
    pub u_cpu: f64,
}

/// Raw HPA controller law (no stabilization window): hold inside the
/// tolerance band, otherwise ceil(replicas * usage / target) clamped to the
/// replica bounds.
pub fn hpa_raw_recommendation(
    replicas: u32,
    u_cpu: f64,
    target: u32,
    config: &ClusterConfig,
) -> Result<u32> {
    if target == 0 {
        return Err(Error::config("HPA target must be > 0"));
    }
    let ratio = u_cpu / target as f64;
    if (ratio - 1.0).abs() <= config.hpa_tolerance {
        return Ok(replicas);
    }
    let desired = (replicas as f64 * ratio).ceil();
    Ok((desired.max(config.min_replicas as f64) as u32).min(config.max_replicas))
}

/// HPA recommendation with the downscale stabilization window applied: the
/// effective desired count is the maximum over the recent raw
/// recommendations plus the current one, so scale-ups act immediately and
/// scale-downs wait out the window.
pub fn hpa_recommend(
    replicas: u32,
    u_cpu: f64,
    target: u32,
    config: &ClusterConfig,
    history: &[u32],
) -> Result<u32> {
    let raw = hpa_raw_recommendation(replicas, u_cpu, target, config)?;
    let tail = history
        .iter()
        .rev()
        .take(config.hpa_down_window.saturating_sub(1) as usize);
    Ok(tail.fold(raw, |acc, &r| acc.max(r)))
}

/// Enhancement-mode override of an HPA recommendation.
///
/// OFF passes through. MOD caps scale-down at `enh_downscale_cap` of the
/// current replicas per step. AGGR additionally forces one extra replica
/// when latency exceeds the threshold and the recommendation does not grow
/// the set.
pub fn apply_enhancement(
    desired: u32,
    replicas: u32,
    last_latency_ms: f64,
    mode: EnhancementMode,
    config: &ClusterConfig,
) -> u32 {
    match mode {
        EnhancementMode::Off => desired,
        EnhancementMode::Mod => dampen_downscale(desired, replicas, config),
        EnhancementMode::Aggr => {
            let adjusted = dampen_downscale(desired, replicas, config);
            if last_latency_ms > config.enh_latency_threshold_ms && adjusted <= replicas {
                (replicas + 1).min(config.max_replicas)
            } else {
                adjusted
            }
        }
    }
}

fn dampen_downscale(desired: u32, replicas: u32, config: &ClusterConfig) -> u32 {
    if desired >= replicas {
        return desired;
    }
    let floor = (replicas as f64 * (1.0 - config.enh_downscale_cap)).ceil() as u32;
    desired.max(floor)
}

/// Advances the cluster by one control interval.
pub fn step(
    state: &ClusterState,
    config: &ClusterConfig,
    offered: u64,
    rng: &mut ChaCha12Rng,
) -> Result<(ClusterState, StepOutcome)> {
    let mut st = state.clone();

    // Cold starts that elapsed come online and serve this interval.
    let mut promoted = 0u32;
    for batch in &mut st.pending {
        batch.remaining -= 1;
        if batch.remaining == 0 {
            promoted += batch.count;
        }
    }
    st.pending.retain(|b| b.remaining > 0);
    st.replicas_ready += promoted;
    let serving = st.replicas_ready;

    // Gateway admission acts as a circuit breaker.
    let gateway_cap = (st.multiplier * config.gateway_base_rate).round() as u64;
    let admitted = offered.min(gateway_cap);
    let shed = offered - admitted;

    let capacity = serving as f64 * config.capacity_per_replica;
    let u_cpu = 100.0 * admitted as f64 / capacity;
    let busy = (u_cpu / 100.0).min(0.95);
    let avg_latency = config.base_latency_ms + config.queue_latency_ms * busy / (1.0 - busy);
    let jitter = 1.0 + config.p90_jitter * (2.0 * rng.gen::<f64>() - 1.0);
    let p90 = avg_latency * (P90_Z * config.p90_sigma).exp() * jitter;

    let serve_cap = (config.overload_serve_factor * capacity).floor() as u64;
    let served = admitted.min(serve_cap);
    let dropped = admitted - served;
    let success_ratio = if offered == 0 {
        1.0
    } else {
        served as f64 / offered as f64
    };

    let per_replica_load = admitted as f64 / serving as f64;
    st.pod_ram = config.ram_pod_base_pct + config.ram_pod_per_load * per_replica_load;
    st.cluster_cpu_total = config.cluster_cpu_base_pct
        + config.cluster_cpu_per_replica * serving as f64
        + config.cluster_cpu_per_admitted * admitted as f64;
    st.cluster_ram_total =
        config.cluster_ram_base_pct + config.cluster_ram_per_replica * serving as f64;
    st.last_utilization = u_cpu;
    st.last_latency_ms = avg_latency;
    st.last_p90_ms = p90;
    st.last_success_ratio = success_ratio;
    st.admitted = admitted;

    // Internal HPA loop, then enhancement override, then apply.
    let raw = hpa_raw_recommendation(serving, u_cpu, st.hpa_target, config)?;
    st.hpa_window.push_back(raw);
    while st.hpa_window.len() > config.hpa_down_window as usize {
        st.hpa_window.pop_front();
    }
    let windowed = *st.hpa_window.iter().max().expect("window nonempty");
    let adjusted = apply_enhancement(windowed, serving, avg_latency, st.mode, config);

    let total = serving + st.pending_count();
    if adjusted > total {
        let spawn = (adjusted - total).min(config.max_replicas - total);
        if spawn > 0 {
            if config.cold_start_steps == 0 {
                st.replicas_ready += spawn;
            } else {
                st.pending.push(PendingBatch {
                    remaining: config.cold_start_steps,
                    count: spawn,
                });
            }
        }
    } else if adjusted < total {
        let mut excess = total - adjusted;
        // Cancel cold starts first, newest first; then remove live replicas.
        while excess > 0 {
            match st.pending.last_mut() {
                Some(batch) => {
                    let take = batch.count.min(excess);
                    batch.count -= take;
                    excess -= take;
                    if batch.count == 0 {
                        st.pending.pop();
                    }
                }
                None => break,
            }
        }
        if excess > 0 {
            let keep = st.replicas_ready.saturating_sub(excess);
            st.replicas_ready = keep.max(config.min_replicas);
        }
    }

    let replica_delta = serving as i64 - st.prev_serving as i64;
    st.prev_serving = serving;

    let outcome = StepOutcome {
        offered,
        admitted,
        served,
        shed,
        dropped,
        avg_latency_ms: avg_latency,
        p90_latency_ms: p90,
        success_ratio,
        replica_delta,
        replicas: serving,
        u_cpu,
    };
    debug_assert_eq!(outcome.served + outcome.shed + outcome.dropped, outcome.offered);
    Ok((st, outcome))
}

pub const EPISODE_CSV_HEADER: &str =
    "t,offered,admitted,served,dropped,replicas,pending,u_cpu,latency,p90,sr,t_hpa,m,mode,delta_rho";

pub fn episode_csv_row(t: usize, state: &ClusterState, outcome: &StepOutcome) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        t,
        outcome.offered,
        outcome.admitted,
        outcome.served,
        outcome.dropped,
        outcome.replicas,
        state.pending_count(),
        outcome.u_cpu,
        outcome.avg_latency_ms,
        outcome.p90_latency_ms,
        outcome.success_ratio,
        state.hpa_target,
        state.multiplier,
        state.mode.index(),
        outcome.replica_delta
    )
}
