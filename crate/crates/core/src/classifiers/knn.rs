use serde::{Deserialize, Serialize};

use super::{Matrix, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    /// One minus cosine similarity.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeights {
    #[default]
    Uniform,
    /// Inverse distance. Exact matches take all the weight.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnParams {
    pub k: usize,
    pub metric: DistanceMetric,
    pub weights: KnnWeights,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 13,
            metric: DistanceMetric::Euclidean,
            weights: KnnWeights::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub x: Matrix,
    pub y: Vec<u8>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn distance(metric: DistanceMetric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        DistanceMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cosine => {
            let d: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
            (1.0 - d / (norm(a) * norm(b))).max(0.0)
        }
    }
}

fn check_nonzero(metric: DistanceMetric, x: &Matrix) -> Result<(), ModelError> {
    if metric == DistanceMetric::Cosine && x.rows().any(|r| norm(r) == 0.0) {
        return Err(ModelError::ZeroVector);
    }
    Ok(())
}

impl KnnModel {
    pub fn fit(params: &KnnParams, x: &Matrix, y: &[u8]) -> Result<Self, ModelError> {
        if params.k == 0 {
            return Err(ModelError::Hyperparameter("k must be at least 1".into()));
        }
        check_nonzero(params.metric, x)?;
        Ok(Self {
            params: params.clone(),
            x: x.clone(),
            y: y.to_vec(),
        })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_nonzero(self.params.metric, x)?;
        let k = self.params.k.min(self.y.len());
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(self.y.len());
        Ok(x
            .rows()
            .map(|q| {
                dist.clear();
                dist.extend(
                    self.x
                        .rows()
                        .enumerate()
                        .map(|(i, r)| (distance(self.params.metric, q, r), i)),
                );
                let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if k < dist.len() {
                    dist.select_nth_unstable_by(k - 1, cmp);
                }
                let nearest = &dist[..k];
                match self.params.weights {
                    KnnWeights::Uniform => {
                        nearest.iter().map(|&(_, i)| f64::from(self.y[i])).sum::<f64>() / k as f64
                    }
                    KnnWeights::Distance => {
                        let exact: Vec<f64> = nearest
                            .iter()
                            .filter(|(d, _)| *d == 0.0)
                            .map(|&(_, i)| f64::from(self.y[i]))
                            .collect();
                        if !exact.is_empty() {
                            return exact.iter().sum::<f64>() / exact.len() as f64;
                        }
                        let (num, den) = nearest.iter().fold((0.0, 0.0), |(n, d), &(dist, i)| {
                            (n + f64::from(self.y[i]) / dist, d + 1.0 / dist)
                        });
                        num / den
                    }
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Matrix, Vec<u8>) {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![10.0]]).unwrap();
        (x, vec![0, 0, 1, 1])
    }

    #[test]
    fn uniform_vote() {
        let (x, y) = line();
        let p = KnnParams { k: 3, ..Default::default() };
        let m = KnnModel::fit(&p, &x, &y).unwrap();
        let q = Matrix::from_rows(&[vec![0.4], vec![9.0]]).unwrap();
        let out = m.predict_proba(&q).unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_distance_and_exact_match() {
        let (x, y) = line();
        let p = KnnParams {
            k: 2,
            weights: KnnWeights::Distance,
            ..Default::default()
        };
        let m = KnnModel::fit(&p, &x, &y).unwrap();
        let q = Matrix::from_rows(&[vec![1.5], vec![2.0], vec![1.25]]).unwrap();
        let out = m.predict_proba(&q).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
        assert_eq!(out[1], 1.0);
        // weights 1/0.25 and 1/0.75 for labels 0 and 1
        assert!((out[2] - (1.0 / 0.75) / (4.0 + 1.0 / 0.75)).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_zero_vectors() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = KnnParams {
            k: 1,
            metric: DistanceMetric::Cosine,
            ..Default::default()
        };
        let m = KnnModel::fit(&p, &x, &[0, 1]).unwrap();
        let q = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert!(matches!(m.predict_proba(&q), Err(ModelError::ZeroVector)));
        let q = Matrix::from_rows(&[vec![2.0, 0.1]]).unwrap();
        assert_eq!(m.predict_proba(&q).unwrap(), vec![0.0]);
    }
}
