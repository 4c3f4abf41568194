//! Generalized advantage estimation over collected rollouts.

use crate::error::{Error, Result};

/// Backward recursion: delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t and
/// A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1}. `bootstrap` stands in
/// for V at the step after the rollout end. Returns (advantages, returns)
/// with returns = A + V.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "GAE length mismatch: rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        next_adv = delta + gamma * lambda * not_done * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    Ok((advantages, returns))
}

/// In-place normalization to mean 0 and std 1 (epsilon 1e-8).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }
}

#[cfg(test)]
pub mod oracle {
    /// Independent double-sum definition of GAE, kept free of the recursion:
    /// A_t = sum_l delta_{t+l} * prod_{k<l} gamma*lambda*(1-done_{t+k}).
    pub fn gae_double_sum(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| -> f64 {
            let not_done = if dones[t] { 0.0 } else { 1.0 };
            let next_value = if t + 1 < n { values[t + 1] } else { bootstrap };
            rewards[t] + gamma * next_value * not_done - values[t]
        };
        (0..n)
            .map(|t| {
                let mut acc = 0.0;
                let mut weight = 1.0;
                for l in t..n {
                    acc += weight * delta(l);
                    if dones[l] {
                        break;
                    }
                    weight *= gamma * lambda;
                }
                acc
            })
            .collect()
    }
}
