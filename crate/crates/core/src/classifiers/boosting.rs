use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, weighted_mean, Criterion, Presorted, Tree, TreeParams};
use super::{sigmoid, Matrix, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientBoostingParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for GradientBoostingParams {
    fn default() -> Self {
        Self {
            n_estimators: 701,
            learning_rate: 0.5,
            max_depth: 3,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

/// Binomial-deviance gradient boosting with Newton leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingModel {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GradientBoostingModel {
    pub fn fit(params: &GradientBoostingParams, x: &Matrix, y: &[u8]) -> Result<Self, ModelError> {
        if params.n_estimators == 0 || !(params.learning_rate > 0.0) {
            return Err(ModelError::Hyperparameter(
                "gradient boosting needs n_estimators >= 1 and learning_rate > 0".into(),
            ));
        }
        let n = x.n_rows();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let pos = yf.iter().sum::<f64>() / n as f64;
        let init = (pos / (1.0 - pos)).ln();
        let presorted = Presorted::new(x);
        let tree_params = TreeParams {
            criterion: Criterion::Mse,
            max_depth: Some(params.max_depth),
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
        };
        let ones = vec![1.0; n];
        let mut f = vec![init; n];
        let mut trees = Vec::with_capacity(params.n_estimators);
        for _ in 0..params.n_estimators {
            let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
            let resid: Vec<f64> = yf.iter().zip(&p).map(|(y, p)| y - p).collect();
            let leaf = |rows: &[usize]| {
                let num: f64 = rows.iter().map(|&i| resid[i]).sum();
                let den: f64 = rows.iter().map(|&i| p[i] * (1.0 - p[i])).sum();
                if den.abs() < 1e-150 {
                    0.0
                } else {
                    num / den
                }
            };
            let tree = fit_tree(x, &presorted, &resid, &ones, &tree_params, None, &leaf);
            for (fi, r) in f.iter_mut().zip(x.rows()) {
                *fi += params.learning_rate * tree.predict_row(r);
            }
            trees.push(tree);
        }
        Ok(Self {
            init,
            learning_rate: params.learning_rate,
            trees,
        })
    }

    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        x.rows()
            .map(|r| {
                self.trees
                    .iter()
                    .fold(self.init, |acc, t| acc + self.learning_rate * t.predict_row(r))
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.decision_function(x).into_iter().map(sigmoid).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self {
            n_estimators: 50,
            learning_rate: 1.0,
        }
    }
}

/// Real AdaBoost (SAMME.R) over depth-1 trees. Each stump stores the class-1
/// probability of its leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stumps: Vec<Tree>,
}

fn log_odds_clipped(p1: f64) -> f64 {
    let eps = f64::EPSILON;
    p1.max(eps).ln() - (1.0 - p1).max(eps).ln()
}

impl AdaBoostModel {
    pub fn fit(params: &AdaBoostParams, x: &Matrix, y: &[u8]) -> Result<Self, ModelError> {
        if params.n_estimators == 0 || !(params.learning_rate > 0.0) {
            return Err(ModelError::Hyperparameter(
                "AdaBoost needs n_estimators >= 1 and learning_rate > 0".into(),
            ));
        }
        let n = x.n_rows();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let presorted = Presorted::new(x);
        let stump = TreeParams {
            criterion: Criterion::Gini,
            max_depth: Some(1),
            min_samples_split: 2,
            min_samples_leaf: 1,
        };
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::with_capacity(params.n_estimators);
        for m in 0..params.n_estimators {
            let leaf = |rows: &[usize]| weighted_mean(&yf, &w, rows);
            let tree = fit_tree(x, &presorted, &yf, &w, &stump, None, &leaf);
            let p1: Vec<f64> = x.rows().map(|r| tree.predict_row(r)).collect();
            stumps.push(tree);
            // ties in the predicted probability go to class 0
            let total: f64 = w.iter().sum();
            let wrong: f64 = p1
                .iter()
                .zip(y)
                .zip(&w)
                .filter(|((p, &l), _)| u8::from(**p > 0.5) != l)
                .map(|(_, wi)| wi)
                .sum();
            if wrong / total <= 0.0 {
                break;
            }
            if m + 1 == params.n_estimators {
                break;
            }
            for ((wi, &p), &l) in w.iter_mut().zip(&p1).zip(y) {
                let lo = log_odds_clipped(p);
                let true_minus_other = if l == 1 { lo } else { -lo };
                *wi *= (-params.learning_rate * 0.5 * true_minus_other).exp();
            }
            let sum: f64 = w.iter().sum();
            if !sum.is_finite() || sum <= 0.0 {
                break;
            }
            w.iter_mut().for_each(|wi| *wi /= sum);
        }
        Ok(Self { stumps })
    }

    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        let m = self.stumps.len() as f64;
        x.rows()
            .map(|r| {
                self.stumps
                    .iter()
                    .map(|t| log_odds_clipped(t.predict_row(r)))
                    .sum::<f64>()
                    / m
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.decision_function(x).into_iter().map(sigmoid).collect()
    }
}
