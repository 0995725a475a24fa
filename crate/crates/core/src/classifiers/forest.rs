use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, weighted_mean, Criterion, Presorted, Tree, TreeParams};
use super::{Matrix, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 701,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub trees: Vec<Tree>,
}

impl RandomForestModel {
    pub fn fit(params: &ForestParams, x: &Matrix, y: &[u8], seed: u64) -> Result<Self, ModelError> {
        if params.n_estimators == 0 {
            return Err(ModelError::Hyperparameter("n_estimators must be at least 1".into()));
        }
        let n = x.n_rows();
        let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        let presorted = Presorted::new(x);
        let tree_params = TreeParams {
            criterion: Criterion::Gini,
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split,
            min_samples_leaf: params.min_samples_leaf,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; n];
        let trees = (0..params.n_estimators)
            .map(|_| {
                if params.bootstrap {
                    w.fill(0.0);
                    for _ in 0..n {
                        w[rng.random_range(0..n)] += 1.0;
                    }
                } else {
                    w.fill(1.0);
                }
                let leaf = |rows: &[usize]| weighted_mean(&yf, &w, rows);
                fit_tree(x, &presorted, &yf, &w, &tree_params, Some(&mut rng), &leaf)
            })
            .collect();
        Ok(Self { trees })
    }

    /// Mean over trees of the class-1 weight fraction in the reached leaf.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        let m = self.trees.len() as f64;
        x.rows()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / m)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_change_the_forest() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<u8> = (0..30).map(|i| u8::from((i * 7) % 5 + (i * 13) % 4 > 3)).collect();
        let p = ForestParams {
            n_estimators: 9,
            ..Default::default()
        };
        let a = RandomForestModel::fit(&p, &x, &y, 1).unwrap();
        let b = RandomForestModel::fit(&p, &x, &y, 2).unwrap();
        assert_eq!(a, RandomForestModel::fit(&p, &x, &y, 1).unwrap());
        assert_ne!(a, b);
        let pr = a.predict_proba(&x);
        assert!(pr.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
