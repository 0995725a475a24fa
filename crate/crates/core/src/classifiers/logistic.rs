//! Binary L2-penalized logistic regression trained with L-BFGS.
//!
//! Objective over weights `w` and intercept `c`, labels `y_i` in {-1, +1}:
//!
//! ```text
//! 0.5 * w·w + C * Σ_i log(1 + exp(-y_i (x_i·w + c)))
//! ```
//!
//! The intercept is not penalized.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{sigmoid, Matrix, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Stop once the largest gradient component falls below this.
    pub tol: f64,
    pub warm_start: bool,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 100,
            tol: 1e-4,
            warm_start: true,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Objective value at the start point and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl LogisticModel {
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.rows()
            .map(|r| sigmoid(dot(r, &self.weights) + self.intercept))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Labels mapped to -1 / +1.
pub fn signed_labels(y: &[u8]) -> Vec<f64> {
    y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect()
}

/// Objective at `params = [w..., c]`.
pub fn objective(params: &[f64], x: &Matrix, y_signed: &[f64], c: f64) -> f64 {
    let d = x.n_cols();
    let (w, b) = (&params[..d], params[d]);
    let loss: f64 = x
        .rows()
        .zip(y_signed)
        .map(|(r, yi)| softplus(-yi * (dot(r, w) + b)))
        .sum();
    0.5 * dot(w, w) + c * loss
}

/// Objective and its analytic gradient at `params = [w..., c]`.
pub fn objective_and_gradient(
    params: &[f64],
    x: &Matrix,
    y_signed: &[f64],
    c: f64,
) -> (f64, Vec<f64>) {
    let d = x.n_cols();
    let (w, b) = (&params[..d], params[d]);
    let mut grad = vec![0.0; d + 1];
    grad[..d].copy_from_slice(w);
    let mut loss = 0.0;
    for (r, &yi) in x.rows().zip(y_signed) {
        let margin = yi * (dot(r, w) + b);
        loss += softplus(-margin);
        // d/dz log(1 + exp(-y z)) = -y * sigmoid(-y z)
        let coef = -c * yi * sigmoid(-margin);
        for j in 0..d {
            grad[j] += coef * r[j];
        }
        grad[d] += coef;
    }
    (0.5 * dot(w, w) + c * loss, grad)
}

struct Lbfgs {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    s_hist: VecDeque<Vec<f64>>,
    y_hist: VecDeque<Vec<f64>>,
    memory: usize,
    done: bool,
}

impl Lbfgs {
    fn new(x: Vec<f64>, f: f64, g: Vec<f64>, memory: usize) -> Self {
        Self {
            x,
            f,
            g,
            s_hist: VecDeque::new(),
            y_hist: VecDeque::new(),
            memory: memory.max(1),
            done: false,
        }
    }

    fn direction(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self.g.iter().map(|v| -v).collect();
        let k = self.s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y_hist[i], &self.s_hist[i]);
            alpha[i] = rho * dot(&self.s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y_hist[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if let (Some(s), Some(y)) = (self.s_hist.back(), self.y_hist.back()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y_hist[i], &self.s_hist[i]);
            let beta = rho * dot(&self.y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s_hist[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q
    }

    /// One iteration with a backtracking Armijo line search. Returns false
    /// when no decrease could be found.
    fn step(&mut self, eval: &impl Fn(&[f64]) -> (f64, Vec<f64>)) -> bool {
        let mut d = self.direction();
        let mut slope = dot(&self.g, &d);
        if !(slope < 0.0) {
            self.s_hist.clear();
            self.y_hist.clear();
            d = self.g.iter().map(|v| -v).collect();
            slope = dot(&self.g, &d);
        }
        let mut step = if self.s_hist.is_empty() {
            1.0 / self.g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0)
        } else {
            1.0
        };
        for _ in 0..60 {
            let cand: Vec<f64> = self.x.iter().zip(&d).map(|(x, di)| x + step * di).collect();
            let (f_new, g_new) = eval(&cand);
            if f_new.is_finite() && f_new <= self.f + 1e-4 * step * slope {
                let s: Vec<f64> = cand.iter().zip(&self.x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&self.g).map(|(a, b)| a - b).collect();
                if dot(&s, &y) > 1e-12 {
                    if self.s_hist.len() == self.memory {
                        self.s_hist.pop_front();
                        self.y_hist.pop_front();
                    }
                    self.s_hist.push_back(s);
                    self.y_hist.push_back(y);
                }
                self.x = cand;
                self.f = f_new;
                self.g = g_new;
                return true;
            }
            step *= 0.5;
        }
        false
    }
}

/// Minimizes the objective in `segments` equal slices of `max_iter`
/// iterations, returning the model after each slice.
pub(crate) fn fit_segments(
    params: &LogisticParams,
    x: &Matrix,
    y: &[u8],
    init: Option<&LogisticModel>,
    segments: usize,
) -> Result<Vec<LogisticModel>, ModelError> {
    if !(params.c > 0.0) {
        return Err(ModelError::Hyperparameter("logistic regression C must be positive".into()));
    }
    let d = x.n_cols();
    let ys = signed_labels(y);
    let eval = |p: &[f64]| objective_and_gradient(p, x, &ys, params.c);
    let start: Vec<f64> = match init {
        Some(m) if m.weights.len() == d => {
            let mut v = m.weights.clone();
            v.push(m.intercept);
            v
        }
        _ => vec![0.0; d + 1],
    };
    let (f0, g0) = eval(&start);
    let mut opt = Lbfgs::new(start, f0, g0, params.memory);
    let mut trace = vec![f0];
    let per_segment = params.max_iter.div_ceil(segments);
    let mut remaining = params.max_iter;
    let mut out = Vec::with_capacity(segments);
    for _ in 0..segments {
        let mut budget = per_segment.min(remaining);
        while budget > 0 && !opt.done {
            if opt.g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) <= params.tol {
                opt.done = true;
                break;
            }
            if !opt.step(&eval) {
                opt.done = true;
                break;
            }
            trace.push(opt.f);
            budget -= 1;
            remaining -= 1;
        }
        if !opt.done && opt.g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) <= params.tol {
            opt.done = true;
        }
        out.push(LogisticModel {
            weights: opt.x[..d].to_vec(),
            intercept: opt.x[d],
            objective_trace: trace.clone(),
            converged: opt.done,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_at_origin() {
        // at w = 0, c = 0 every sample contributes -y * 0.5 * C
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
        let (f, g) = objective_and_gradient(&[0.0, 0.0, 0.0], &x, &[1.0, -1.0], 2.0);
        assert!((f - 2.0 * 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] - (-1.0 + 3.0)).abs() < 1e-12);
        assert!((g[1] - (-2.0 - 1.0)).abs() < 1e-12);
        assert!(g[2].abs() < 1e-12);
    }

    #[test]
    fn segments_resume_and_trace_is_monotone() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 - 30.0) / 10.0, ((i * 13) % 7) as f64 / 7.0]).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from((i * 31) % 60 < 25 + i / 3)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = LogisticParams::default();
        let snaps = fit_segments(&p, &x, &y, None, 10).unwrap();
        assert_eq!(snaps.len(), 10);
        let last = snaps.last().unwrap();
        assert!(last.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        let whole = fit_segments(&p, &x, &y, None, 1).unwrap().pop().unwrap();
        assert_eq!(whole.weights, last.weights);
        // warm start from the optimum converges immediately
        let warm = fit_segments(&p, &x, &y, Some(&whole), 1).unwrap().pop().unwrap();
        assert!(warm.objective_trace.len() <= 2);
    }
}
