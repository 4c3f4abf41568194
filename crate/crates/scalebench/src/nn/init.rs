//! Seeded weight initialization: Xavier-uniform input weights, orthogonal
//! recurrent weights, forget-gate bias +1, zero biases elsewhere.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Standard normal sample via Box-Muller.
pub fn sample_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn xavier_uniform(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Square orthogonal matrix via modified Gram-Schmidt on a Gaussian draw.
fn orthogonal_square(d: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| sample_normal(rng)).collect())
        .collect();
    for i in 0..d {
        for j in 0..i {
            let proj: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
            let prev = rows[j].clone();
            for (x, p) in rows[i].iter_mut().zip(&prev) {
                *x -= proj * p;
            }
        }
        let norm: f64 = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        // a fully degenerate draw is astronomically unlikely; re-seed the row
        if norm < 1e-12 {
            for x in rows[i].iter_mut() {
                *x = sample_normal(rng);
            }
            let norm: f64 = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt();
            rows[i].iter_mut().for_each(|x| *x /= norm);
        } else {
            rows[i].iter_mut().for_each(|x| *x /= norm);
        }
    }
    rows.into_iter().flatten().collect()
}

/// Recurrent weight block for an LSTM: four vertically stacked d x d
/// orthogonal matrices (one per gate).
pub fn orthogonal_gates(d: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * d * d);
    for _ in 0..4 {
        out.extend(orthogonal_square(d, rng));
    }
    out
}

/// LSTM bias: zeros except the forget gate slice, which starts at +1.
pub fn lstm_bias(d: usize) -> Vec<f64> {
    let mut b = vec![0.0; 4 * d];
    b[d..2 * d].iter_mut().for_each(|x| *x = 1.0);
    b
}
