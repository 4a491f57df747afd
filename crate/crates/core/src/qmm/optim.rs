//! L2-regularized logistic regression over sparse binary rows.

use rayon::prelude::*;

/// Rows per gradient chunk. Fixed so the reduction order does not depend
/// on the number of threads.
const CHUNK: usize = 2048;

/// Binary design matrix: each row lists its active feature indices.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub rows: &'a [&'a [u32]],
    /// Targets in {−1, +1}.
    pub y: &'a [f64],
    pub n_features: usize,
    pub lambda: f64,
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn margin(row: &[u32], theta: &[f64]) -> f64 {
    theta[0] + row.iter().map(|&j| theta[j as usize + 1]).sum::<f64>()
}

impl Problem<'_> {
    /// Loss only. `theta[0]` is the unregularized intercept.
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let data: f64 = self
            .rows
            .par_chunks(CHUNK)
            .zip(self.y.par_chunks(CHUNK))
            .map(|(rows, ys)| rows.iter().zip(ys).map(|(r, y)| softplus(-y * margin(r, theta))).sum::<f64>())
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        data + self.lambda * theta[1..].iter().map(|w| w * w).sum::<f64>()
    }

    /// Loss and gradient with respect to `theta`.
    pub fn loss_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let dim = self.n_features + 1;
        let parts: Vec<(f64, Vec<f64>)> = self
            .rows
            .par_chunks(CHUNK)
            .zip(self.y.par_chunks(CHUNK))
            .map(|(rows, ys)| {
                let mut g = vec![0.0; dim];
                let mut l = 0.0;
                for (r, y) in rows.iter().zip(ys) {
                    let m = y * margin(r, theta);
                    l += softplus(-m);
                    let coef = -y * sigmoid(-m);
                    g[0] += coef;
                    for &j in r.iter() {
                        g[j as usize + 1] += coef;
                    }
                }
                (l, g)
            })
            .collect();
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        for j in 1..dim {
            grad[j] += 2.0 * self.lambda * theta[j];
            loss += self.lambda * theta[j] * theta[j];
        }
        loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution {
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub grad_inf_norm: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Full-batch gradient descent from `theta` with Barzilai-Borwein trial
/// steps and Armijo backtracking. Stops when the gradient's infinity norm
/// drops below `tol` or after `max_iter` iterations.
pub fn minimize(p: &Problem<'_>, theta: &mut [f64], tol: f64, max_iter: usize) -> Solution {
    let dim = theta.len();
    let mut grad = vec![0.0; dim];
    let mut f = p.loss_grad(theta, &mut grad);
    let mut trial = vec![0.0; dim];
    let mut grad_new = vec![0.0; dim];
    let mut step = 1.0 / inf_norm(&grad).max(1.0);
    for it in 0..max_iter {
        let gnorm = inf_norm(&grad);
        if gnorm < tol {
            return Solution { iterations: it, converged: true, final_loss: f, grad_inf_norm: gnorm };
        }
        let gg: f64 = grad.iter().map(|g| g * g).sum();
        // Loss differences below this are rounding noise; near the optimum
        // the gradient is the only reliable descent signal.
        let noise = 64.0 * f64::EPSILON * f.abs().max(1.0);
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..=60 {
            for k in 0..dim {
                trial[k] = theta[k] - alpha * grad[k];
            }
            let f_try = p.loss(&trial);
            if f_try <= f - 1e-4 * alpha * gg {
                accepted = Some(p.loss_grad(&trial, &mut grad_new));
                break;
            }
            if (f_try - f).abs() <= noise {
                let f_try = p.loss_grad(&trial, &mut grad_new);
                if inf_norm(&grad_new) < gnorm {
                    accepted = Some(f_try);
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Solution { iterations: it, converged: false, final_loss: f, grad_inf_norm: gnorm };
        };
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..dim {
            let s = trial[k] - theta[k];
            ss += s * s;
            sy += s * (grad_new[k] - grad[k]);
        }
        step = if sy > 0.0 && (ss / sy).is_finite() { ss / sy } else { alpha * 2.0 };
        theta.copy_from_slice(&trial);
        std::mem::swap(&mut grad, &mut grad_new);
        f = f_new;
    }
    let gnorm = inf_norm(&grad);
    Solution { iterations: max_iter, converged: gnorm < tol, final_loss: f, grad_inf_norm: gnorm }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn perfect_single_feature() {
        let a: &[u32] = &[0];
        let b: &[u32] = &[];
        let rows = [a, a, b, b];
        let y = [1.0, 1.0, -1.0, -1.0];
        let p = Problem { rows: &rows, y: &y, n_features: 1, lambda: 0.1 };
        let mut theta = vec![0.0; 2];
        let sol = minimize(&p, &mut theta, 1e-6, 10_000);
        assert!(sol.converged);
        assert!(theta[1] > 0.0);
        assert!(sol.final_loss < p.loss(&[0.0, 0.0]));
    }
}
