//! Central finite differences of an independently written logistic loss,
//! compared with the analytic gradient of the query-model objective.

#![allow(dead_code)]

use nationmood::qmm::Problem;
use nationmood::seed::derive;

pub struct Instance {
    pub rows: Vec<Vec<u32>>,
    pub y: Vec<f64>,
    pub n_features: usize,
    pub lambda: f64,
    pub theta: Vec<f64>,
}

fn unit(seed: u64, k: u64) -> f64 {
    (derive(seed, k) >> 11) as f64 / (1u64 << 53) as f64
}

/// Random instance with 1..=50 features and 1..=200 examples.
pub fn instance(seed: u64) -> Instance {
    let mut k = 0u64;
    let mut next = || {
        k += 1;
        unit(seed, k)
    };
    let n_features = 1 + (next() * 50.0) as usize;
    let n_rows = 1 + (next() * 200.0) as usize;
    let density = 0.05 + 0.3 * next();
    let rows = (0..n_rows)
        .map(|_| (0..n_features as u32).filter(|_| next() < density).collect())
        .collect();
    let y = (0..n_rows).map(|_| if next() < 0.5 { -1.0 } else { 1.0 }).collect();
    let lambda = next() * 2.0;
    let theta = (0..=n_features).map(|_| (next() - 0.5) * 2.0).collect();
    Instance { rows, y, n_features, lambda, theta }
}

/// Σ log(1 + exp(−y·margin)) + λ‖w‖², intercept unpenalized.
pub fn loss(inst: &Instance, theta: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, y) in inst.rows.iter().zip(&inst.y) {
        let mut m = theta[0];
        for j in row {
            m += theta[*j as usize + 1];
        }
        let t = -y * m;
        total += if t > 30.0 { t + (-t).exp() } else { t.exp().ln_1p() };
    }
    for w in &theta[1..] {
        total += inst.lambda * w * w;
    }
    total
}

/// Relative error ‖analytic − numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞, 1e-12).
pub fn relative_error(inst: &Instance) -> f64 {
    let refs: Vec<&[u32]> = inst.rows.iter().map(Vec::as_slice).collect();
    let p = Problem { rows: &refs, y: &inst.y, n_features: inst.n_features, lambda: inst.lambda };
    let mut analytic = vec![0.0; inst.theta.len()];
    p.loss_grad(&inst.theta, &mut analytic);
    let h = 1e-5;
    let mut num = vec![0.0; inst.theta.len()];
    let mut t = inst.theta.clone();
    for j in 0..t.len() {
        let orig = t[j];
        t[j] = orig + h;
        let up = loss(inst, &t);
        t[j] = orig - h;
        let down = loss(inst, &t);
        t[j] = orig;
        num[j] = (up - down) / (2.0 * h);
    }
    let diff = analytic.iter().zip(&num).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = analytic.iter().chain(&num).map(|v| v.abs()).fold(1e-12, f64::max);
    diff / scale
}
