//! SLO-aware composite reward: a weighted sum of five components covering
//! latency compliance, CPU-target alignment, scaling stability, forecast
//! alignment and request success.
//!
//! Component shapes are deliberately piecewise (the latency term has a hard
//! jump at the violation threshold) and the weighted total keeps the full
//! breakdown so telemetry can log every term per step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latency thresholds for the two-tier SLO objective (milliseconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SloThresholds {
    pub target_ms: f64,
    pub hard_ms: f64,
}

impl Default for SloThresholds {
    fn default() -> Self {
        SloThresholds {
            target_ms: 20.0,
            hard_ms: 50.0,
        }
    }
}

impl SloThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_ms > 0.0 && self.hard_ms > self.target_ms) {
            return Err(Error::config(format!(
                "SLO thresholds require 0 < target < hard, got target={} hard={}",
                self.target_ms, self.hard_ms
            )));
        }
        Ok(())
    }
}

/// Weights of the composite reward. Defaults are the headline configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_sla: f64,
    pub w_cpu: f64,
    pub w_succ: f64,
    pub w_stab: f64,
    pub w_fcst: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_sla: 0.50,
            w_cpu: 0.25,
            w_succ: 0.12,
            w_stab: 0.08,
            w_fcst: 0.05,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_sla, self.w_cpu, self.w_succ, self.w_stab, self.w_fcst];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("reward weights must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Per-step reward components plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_slo: f64,
    pub r_cpu: f64,
    pub r_stab: f64,
    pub r_fcst: f64,
    pub r_succ: f64,
    pub total: f64,
}

/// Latency reward: 1.0 at or below the target, linear decay up to the hard
/// threshold, then a steep penalty that bottoms out at -1 within 0.2 ms.
/// Discontinuous at the hard threshold by construction (left limit 0.5,
/// right limit 0).
pub fn r_slo(latency_ms: f64, th: &SloThresholds) -> Result<f64> {
    if !latency_ms.is_finite() || latency_ms < 0.0 {
        return Err(Error::numeric(format!(
            "latency must be finite and >= 0, got {latency_ms}"
        )));
    }
    let v = if latency_ms <= th.target_ms {
        1.0
    } else if latency_ms <= th.hard_ms {
        0.5 + 0.5 * (th.hard_ms - latency_ms) / (th.hard_ms - th.target_ms)
    } else {
        (-0.5 * (latency_ms - th.hard_ms) / 0.1).max(-1.0)
    };
    Ok(v)
}

/// CPU-target alignment: flat 1.0 inside a +/-10 percentage-point band around
/// the commanded HPA target, Gaussian falloff outside it.
pub fn r_cpu(utilization_pct: f64, target_pct: f64) -> f64 {
    let diff = utilization_pct - target_pct;
    if diff.abs() <= 10.0 {
        1.0
    } else {
        (-(diff / 50.0).powi(2)).exp()
    }
}

/// Stability penalty on replica movement: small moves cost 0.1 per replica,
/// jumps above 2 cost 0.5 per replica.
pub fn r_stab(replica_delta: i64) -> f64 {
    let mag = replica_delta.unsigned_abs() as f64;
    if mag <= 2.0 {
        -0.1 * mag
    } else {
        -0.5 * mag
    }
}

/// Forecast alignment: squared relative gap between provisioned capacity
/// (replicas x per-replica capacity) and the forecast demand. When the
/// forecast is zero or negative there is no signal and the term is 0.
pub fn r_fcst(replicas: u32, capacity_per_replica: f64, n_hat: f64) -> f64 {
    if n_hat <= 0.0 {
        return 0.0;
    }
    let gap = (replicas as f64 * capacity_per_replica - n_hat) / n_hat;
    -(gap * gap)
}

/// Success-ratio reward: 1.0 at >= 0.99, log of the ratio below. A ratio of
/// exactly zero is clamped to ln(1e-6).
pub fn r_succ(success_ratio: f64) -> Result<f64> {
    if !success_ratio.is_finite() || !(0.0..=1.0).contains(&success_ratio) {
        return Err(Error::numeric(format!(
            "success ratio must be in [0,1], got {success_ratio}"
        )));
    }
    let v = if success_ratio >= 0.99 {
        1.0
    } else if success_ratio == 0.0 {
        (1e-6f64).ln()
    } else {
        success_ratio.ln()
    };
    Ok(v)
}

/// Weighted total of the five components, keeping the full breakdown.
pub fn total(
    r_slo: f64,
    r_cpu: f64,
    r_stab: f64,
    r_fcst: f64,
    r_succ: f64,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let total = weights.w_sla * r_slo
        + weights.w_cpu * r_cpu
        + weights.w_stab * r_stab
        + weights.w_fcst * r_fcst
        + weights.w_succ * r_succ;
    RewardBreakdown {
        r_slo,
        r_cpu,
        r_stab,
        r_fcst,
        r_succ,
        total,
    }
}

/// Convenience wrapper used by the environment loop.
pub fn compute(
    latency_ms: f64,
    utilization_pct: f64,
    target_pct: f64,
    replica_delta: i64,
    replicas: u32,
    capacity_per_replica: f64,
    n_hat: f64,
    success_ratio: f64,
    th: &SloThresholds,
    weights: &RewardWeights,
) -> Result<RewardBreakdown> {
    let slo = r_slo(latency_ms, th)?;
    let cpu = r_cpu(utilization_pct, target_pct);
    let stab = r_stab(replica_delta);
    let fcst = r_fcst(replicas, capacity_per_replica, n_hat);
    let succ = r_succ(success_ratio)?;
    Ok(total(slo, cpu, stab, fcst, succ, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn th() -> SloThresholds {
        SloThresholds::default()
    }

    #[test]
    fn slo_goldens() {
        assert_eq!(r_slo(20.0, &th()).unwrap(), 1.0);
        // middle branch by hand: 0.5 + 0.5 * (50 - 35) / 30 = 0.75
        assert_relative_eq!(r_slo(35.0, &th()).unwrap(), 0.75, max_relative = 1e-12);
        // third branch: max(-1, -0.5 * 1 / 0.1) = -1
        assert_eq!(r_slo(51.0, &th()).unwrap(), -1.0);
        assert_eq!(r_slo(0.0, &th()).unwrap(), 1.0);
    }

    #[test]
    fn slo_continuous_at_target_discontinuous_at_hard() {
        // both branches give exactly 1.0 at the target
        assert_relative_eq!(
            0.5 + 0.5 * (50.0 - 20.0) / 30.0,
            r_slo(20.0, &th()).unwrap(),
            max_relative = 1e-15
        );
        // left limit at the hard threshold is 0.5; 0.2 ms past it is already -1
        assert_relative_eq!(r_slo(50.0, &th()).unwrap(), 0.5, max_relative = 1e-12);
        assert_eq!(r_slo(50.2, &th()).unwrap(), -1.0);
        // right limit approaches 0, not 0.5: the jump is real
        assert!(r_slo(50.0001, &th()).unwrap().abs() < 1e-3);
    }

    #[test]
    fn slo_monotone_non_increasing() {
        let mut prev = f64::INFINITY;
        for i in 0..2000 {
            let l = i as f64 * 0.05;
            let v = r_slo(l, &th()).unwrap();
            assert!(v <= prev + 1e-12, "r_slo not monotone at l={l}");
            prev = v;
        }
    }

    #[test]
    fn slo_rejects_negative_and_non_finite() {
        assert!(r_slo(-1.0, &th()).is_err());
        assert!(r_slo(f64::NAN, &th()).is_err());
    }

    #[test]
    fn cpu_goldens() {
        assert_eq!(r_cpu(50.0, 50.0), 1.0);
        // plug (50/50)^2 into the Gaussian
        assert_relative_eq!(r_cpu(100.0, 50.0), (-1.0f64).exp(), max_relative = 1e-12);
        // exactly at the tolerance edge
        assert_eq!(r_cpu(40.0, 50.0), 1.0);
        assert_eq!(r_cpu(60.0, 50.0), 1.0);
    }

    #[test]
    fn cpu_unimodal_with_plateau() {
        let target = 70.0;
        // non-decreasing up to the plateau, non-increasing after
        let mut prev = -1.0;
        for i in 0..=60 {
            let u = i as f64;
            let v = r_cpu(u, target);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
        for u in 60..=80 {
            assert_eq!(r_cpu(u as f64, target), 1.0);
        }
        let mut prev = 2.0;
        for i in 80..=200 {
            let v = r_cpu(i as f64, target);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn stab_goldens_and_symmetry() {
        assert_eq!(r_stab(0), 0.0);
        assert_relative_eq!(r_stab(2), -0.2, max_relative = 1e-12);
        assert_relative_eq!(r_stab(5), -2.5, max_relative = 1e-12);
        for d in -10..=10 {
            assert_eq!(r_stab(d), r_stab(-d));
        }
    }

    #[test]
    fn fcst_goldens() {
        assert_eq!(r_fcst(2, 50.0, 100.0), 0.0);
        assert_relative_eq!(r_fcst(2, 50.0, 50.0), -1.0, max_relative = 1e-12);
        assert_relative_eq!(r_fcst(1, 50.0, 100.0), -0.25, max_relative = 1e-12);
        // no-demand convention
        assert_eq!(r_fcst(3, 50.0, 0.0), 0.0);
        assert_eq!(r_fcst(3, 50.0, -1.0), 0.0);
    }

    #[test]
    fn fcst_never_positive() {
        for rho in 1..20u32 {
            for n in 1..40 {
                let v = r_fcst(rho, 50.0, n as f64 * 10.0);
                assert!(v <= 0.0);
            }
        }
    }

    #[test]
    fn succ_goldens() {
        assert_eq!(r_succ(0.995).unwrap(), 1.0);
        assert_eq!(r_succ(1.0).unwrap(), 1.0);
        let e_inv = (-1.0f64).exp();
        assert_relative_eq!(r_succ(e_inv).unwrap(), -1.0, max_relative = 1e-9);
        assert_relative_eq!(
            r_succ(0.0).unwrap(),
            (1e-6f64).ln(),
            max_relative = 1e-12
        );
        assert!(r_succ(1.1).is_err());
        assert!(r_succ(-0.1).is_err());
    }

    #[test]
    fn total_goldens() {
        let w = RewardWeights::default();
        let b = total(1.0, 1.0, 0.0, 0.0, 1.0, &w);
        assert_relative_eq!(b.total, 0.87, max_relative = 1e-12);

        let b = total(0.0, 0.0, 0.0, 0.0, 0.0, &w);
        assert_eq!(b.total, 0.0);

        let b = total(1.0, 1.0, -0.2, -0.25, 1.0, &w);
        assert_relative_eq!(b.total, 0.8415, max_relative = 1e-12);
    }

    #[test]
    fn total_linear_in_each_component() {
        // finite-difference slope along each component equals its weight
        let w = RewardWeights::default();
        let base = [0.3, 0.7, -0.4, -0.9, 0.2];
        let weights = [w.w_sla, w.w_cpu, w.w_stab, w.w_fcst, w.w_succ];
        for (i, expect) in weights.iter().enumerate() {
            let mut hi = base;
            hi[i] += 1.0;
            let f0 = total(base[0], base[1], base[2], base[3], base[4], &w).total;
            let f1 = total(hi[0], hi[1], hi[2], hi[3], hi[4], &w).total;
            assert_relative_eq!(f1 - f0, *expect, max_relative = 1e-12);
        }
    }
}
