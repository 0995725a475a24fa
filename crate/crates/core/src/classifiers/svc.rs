//! C-SVC with an RBF kernel, solved by SMO with second-order working-set
//! selection, and a sigmoid fitted to the training decision values.

use serde::{Deserialize, Serialize};

use super::{Matrix, ModelError};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvcParams {
    pub c: f64,
    /// RBF width; when absent, `1 / (n_features * variance of all inputs)`.
    pub gamma: Option<f64>,
    pub tol: f64,
    /// Pair updates are capped at `max_passes * n_samples`.
    pub max_passes: usize,
}

impl Default for SvcParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcModel {
    pub gamma: f64,
    pub support_vectors: Matrix,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub prob_a: f64,
    pub prob_b: f64,
    pub iterations: usize,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d).exp()
}

/// `1 / (n_features * var(X))` over every entry; 1 when the variance is zero.
pub fn scale_gamma(x: &Matrix) -> f64 {
    let v = x.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.n_cols() as f64 * var)
    } else {
        1.0
    }
}

struct Solution {
    alpha: Vec<f64>,
    grad: Vec<f64>,
    rho: f64,
    iterations: usize,
}

fn solve(k: &[f64], y: &[f64], c: f64, eps: f64, max_iter: usize) -> Solution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut iterations = 0;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                let (eligible, g) = if y[t] > 0.0 {
                    (!lower(alpha[t]), grad[t])
                } else {
                    (!upper(alpha[t]), -grad[t])
                };
                if !eligible {
                    continue;
                }
                gmax2 = gmax2.max(g);
                let diff = gmax + g;
                if diff > 0.0 {
                    let quad = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (Some(i), Some(j)) = (i_sel, j_sel) else { break };
        if gmax + gmax2 < eps {
            break;
        }
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (k[i * n + i] + k[j * n + j] + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i * n + i] + k[j * n + j] - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let (mut ub, mut lb, mut sum_free, mut nr_free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nr_free += 1;
            sum_free += yg;
        }
    }
    let rho = if nr_free > 0 {
        sum_free / nr_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Solution {
        alpha,
        grad,
        rho,
        iterations,
    }
}

/// Fits `P(y = 1 | f) = 1 / (1 + exp(A f + B))` by Newton's method with
/// backtracking, on targets smoothed toward the class priors.
pub fn fit_sigmoid(dec: &[f64], y: &[u8]) -> (f64, f64) {
    let prior1 = y.iter().filter(|&&v| v == 1).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = y.iter().map(|&v| if v == 1 { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(&d, &ti)| {
                let z = d * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, ((prior0 + 1.0) / (prior1 + 1.0)).ln());
    let mut fval = objective(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (&d, &ti) in dec.iter().zip(&t) {
            let z = d * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += d * d * d2;
            h22 += d2;
            h21 += d * d2;
            let d1 = ti - p;
            g1 += d * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    (a, b)
}

fn sigmoid_predict(f: f64, a: f64, b: f64) -> f64 {
    let z = f * a + b;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl SvcModel {
    pub fn fit(params: &SvcParams, x: &Matrix, y: &[u8]) -> Result<Self, ModelError> {
        if !(params.c > 0.0) || !(params.tol > 0.0) || params.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(ModelError::Hyperparameter(
                "SVC needs positive C, tol and gamma".into(),
            ));
        }
        let n = x.n_rows();
        let gamma = params.gamma.unwrap_or_else(|| scale_gamma(x));
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in 0..i {
                let v = rbf(gamma, x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let max_iter = params.max_passes.max(1).saturating_mul(n);
        let sol = solve(&k, &ys, params.c, params.tol, max_iter);
        // f(x_i) = sum_j alpha_j y_j K_ij - rho = y_i (G_i + 1) - rho
        let dec: Vec<f64> = (0..n)
            .map(|i| ys[i] * (sol.grad[i] + 1.0) - sol.rho)
            .collect();
        let (prob_a, prob_b) = fit_sigmoid(&dec, y);
        let sv: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
        Ok(Self {
            gamma,
            support_vectors: x.select(&sv),
            dual_coef: sv.iter().map(|&i| sol.alpha[i] * ys[i]).collect(),
            rho: sol.rho,
            prob_a,
            prob_b,
            iterations: sol.iterations,
        })
    }

    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        x.rows()
            .map(|r| {
                self.support_vectors
                    .rows()
                    .zip(&self.dual_coef)
                    .map(|(s, c)| c * rbf(self.gamma, s, r))
                    .sum::<f64>()
                    - self.rho
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.decision_function(x)
            .into_iter()
            .map(|f| sigmoid_predict(f, self.prob_a, self.prob_b))
            .collect()
    }
}
