//! Probability-emitting binary classifiers behind one fit/predict surface.
//!
//! Kinds: L2 logistic regression (L-BFGS), k-nearest neighbours, random
//! forest, gradient boosting, real AdaBoost (SAMME.R) and an RBF C-SVC with
//! logistic calibration. Logistic regression, kNN and the SVC see features
//! standardized on the training split; tree ensembles see raw features.

mod boosting;
mod forest;
mod knn;
pub mod logistic;
mod scaling;
mod svc;
pub mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boosting::{AdaBoostModel, AdaBoostParams, GradientBoostingModel, GradientBoostingParams};
pub use forest::{ForestParams, RandomForestModel};
pub use knn::{DistanceMetric, KnnModel, KnnParams, KnnWeights};
pub use logistic::{LogisticModel, LogisticParams};
pub use scaling::Standardizer;
pub use svc::{SvcModel, SvcParams};

pub const MODEL_FORMAT: &str = "straddle-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("no features")]
    NoFeatures,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("labels must be 0 or 1, found {0}")]
    BadLabel(u8),
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("matrix data length {len} does not match {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major sample-by-feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if data.len() != rows * cols {
            return Err(ModelError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ModelError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ModelError::ArityMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn map_rows(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.rows() {
            data.extend(f(r));
        }
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    fn check_finite(&self) -> Result<(), ModelError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(p) => Err(ModelError::NonFinite {
                row: p / self.cols,
                col: p % self.cols,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    Knn,
    RandomForest,
    GradientBoosting,
    Adaboost,
    Svc,
}

impl ClassifierKind {
    pub fn uses_standardization(self) -> bool {
        matches!(
            self,
            ClassifierKind::LogisticRegression | ClassifierKind::Knn | ClassifierKind::Svc
        )
    }

    /// Kinds whose fit consumes the seed.
    pub fn is_stochastic(self) -> bool {
        matches!(self, ClassifierKind::RandomForest)
    }

    /// Kinds trained by an iterative optimizer that can be resumed.
    pub fn is_iterative(self) -> bool {
        matches!(self, ClassifierKind::LogisticRegression)
    }
}

/// Kind plus hyperparameters; missing keys take the defaults of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    LogisticRegression(LogisticParams),
    Knn(KnnParams),
    RandomForest(ForestParams),
    GradientBoosting(GradientBoostingParams),
    Adaboost(AdaBoostParams),
    Svc(SvcParams),
}

impl ModelParams {
    pub fn default_for(kind: ClassifierKind) -> Self {
        match kind {
            ClassifierKind::LogisticRegression => ModelParams::LogisticRegression(Default::default()),
            ClassifierKind::Knn => ModelParams::Knn(Default::default()),
            ClassifierKind::RandomForest => ModelParams::RandomForest(Default::default()),
            ClassifierKind::GradientBoosting => ModelParams::GradientBoosting(Default::default()),
            ClassifierKind::Adaboost => ModelParams::Adaboost(Default::default()),
            ClassifierKind::Svc => ModelParams::Svc(Default::default()),
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        match self {
            ModelParams::LogisticRegression(_) => ClassifierKind::LogisticRegression,
            ModelParams::Knn(_) => ClassifierKind::Knn,
            ModelParams::RandomForest(_) => ClassifierKind::RandomForest,
            ModelParams::GradientBoosting(_) => ClassifierKind::GradientBoosting,
            ModelParams::Adaboost(_) => ClassifierKind::Adaboost,
            ModelParams::Svc(_) => ClassifierKind::Svc,
        }
    }

    /// Caps the ensemble size of tree ensembles.
    pub fn cap_estimators(&mut self, cap: usize) {
        match self {
            ModelParams::RandomForest(p) => p.n_estimators = p.n_estimators.min(cap),
            ModelParams::GradientBoosting(p) => p.n_estimators = p.n_estimators.min(cap),
            ModelParams::Adaboost(p) => p.n_estimators = p.n_estimators.min(cap),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(flatten)]
    pub params: ModelParams,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(params: ModelParams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn default_for(kind: ClassifierKind) -> Self {
        Self::new(ModelParams::default_for(kind), 0)
    }

    pub fn kind(&self) -> ClassifierKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelState {
    LogisticRegression(LogisticModel),
    Knn(KnnModel),
    RandomForest(RandomForestModel),
    GradientBoosting(GradientBoostingModel),
    Adaboost(AdaBoostModel),
    Svc(SvcModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub n_features: usize,
    pub scaler: Option<Standardizer>,
    pub state: ModelState,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: TrainedModel,
}

fn validate_training(x: &Matrix, y: &[u8]) -> Result<(), ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::LabelCount {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    if x.n_rows() < 2 {
        return Err(ModelError::TooFewSamples(x.n_rows()));
    }
    if x.n_cols() == 0 {
        return Err(ModelError::NoFeatures);
    }
    if let Some(&bad) = y.iter().find(|&&v| v > 1) {
        return Err(ModelError::BadLabel(bad));
    }
    x.check_finite()?;
    let positives = y.iter().filter(|&&v| v == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(ModelError::SingleClass);
    }
    Ok(())
}

pub fn fit(spec: &ClassifierSpec, x: &Matrix, y: &[u8]) -> Result<TrainedModel, ModelError> {
    fit_warm(spec, x, y, None)
}

/// Fits, resuming logistic regression from `previous` when it is a compatible
/// logistic model with `warm_start` enabled. Other kinds ignore `previous`.
pub fn fit_warm(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[u8],
    previous: Option<&TrainedModel>,
) -> Result<TrainedModel, ModelError> {
    let mut snapshots = fit_epochs(spec, x, y, previous, 1)?;
    Ok(snapshots.pop().expect("at least one epoch"))
}

/// Fits in `epochs` optimizer segments and returns the model after each one.
///
/// Only iterative kinds produce distinct snapshots; the others are fitted once
/// and returned as a single snapshot.
pub fn fit_epochs(
    spec: &ClassifierSpec,
    x: &Matrix,
    y: &[u8],
    previous: Option<&TrainedModel>,
    epochs: usize,
) -> Result<Vec<TrainedModel>, ModelError> {
    validate_training(x, y)?;
    let scaler = spec
        .kind()
        .uses_standardization()
        .then(|| Standardizer::fit(x));
    let scaled;
    let xs = match &scaler {
        Some(s) => {
            scaled = s.transform(x);
            &scaled
        }
        None => x,
    };
    let wrap = |state: ModelState| TrainedModel {
        spec: spec.clone(),
        n_features: x.n_cols(),
        scaler: scaler.clone(),
        state,
    };
    let single = |state| Ok(vec![wrap(state)]);
    match &spec.params {
        ModelParams::LogisticRegression(p) => {
            let init = match previous {
                Some(TrainedModel {
                    state: ModelState::LogisticRegression(m),
                    n_features,
                    ..
                }) if p.warm_start && *n_features == x.n_cols() => Some(m),
                _ => None,
            };
            let snaps = logistic::fit_segments(p, xs, y, init, epochs.max(1))?;
            Ok(snaps
                .into_iter()
                .map(|m| wrap(ModelState::LogisticRegression(m)))
                .collect())
        }
        ModelParams::Knn(p) => single(ModelState::Knn(KnnModel::fit(p, xs, y)?)),
        ModelParams::RandomForest(p) => single(ModelState::RandomForest(RandomForestModel::fit(
            p, xs, y, spec.seed,
        )?)),
        ModelParams::GradientBoosting(p) => {
            single(ModelState::GradientBoosting(GradientBoostingModel::fit(p, xs, y)?))
        }
        ModelParams::Adaboost(p) => single(ModelState::Adaboost(AdaBoostModel::fit(p, xs, y)?)),
        ModelParams::Svc(p) => single(ModelState::Svc(SvcModel::fit(p, xs, y)?)),
    }
}

impl TrainedModel {
    /// Probability of class 1 for every row of `x`.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        if x.n_cols() != self.n_features {
            return Err(ModelError::ArityMismatch {
                expected: self.n_features,
                got: x.n_cols(),
            });
        }
        x.check_finite()?;
        let scaled;
        let xs = match &self.scaler {
            Some(s) => {
                scaled = s.transform(x);
                &scaled
            }
            None => x,
        };
        let probs = match &self.state {
            ModelState::LogisticRegression(m) => m.predict_proba(xs),
            ModelState::Knn(m) => m.predict_proba(xs)?,
            ModelState::RandomForest(m) => m.predict_proba(xs),
            ModelState::GradientBoosting(m) => m.predict_proba(xs),
            ModelState::Adaboost(m) => m.predict_proba(xs),
            ModelState::Svc(m) => m.predict_proba(xs),
        };
        Ok(probs.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }

    /// `[P(0), P(1)]` per row.
    pub fn predict_class_proba(&self, x: &Matrix) -> Result<Vec<[f64; 2]>, ModelError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| [1.0 - p, p])
            .collect())
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(s).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(ModelError::Format(format!("unknown format {:?}", file.format)));
        }
        if file.version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported version {}",
                file.version
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Trade decision: 1 exactly when the probability is strictly above `threshold`.
pub fn decide(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities
        .iter()
        .map(|&p| u8::from(p > threshold))
        .collect()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
