//! Native classifiers, evaluation metrics, grid search and importance.

mod data;
mod forest;
mod grid;
mod importance;
mod knn;
mod metrics;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use data::{Matrix, argmax_count, check_labels};
pub use forest::{Forest, ForestConfig, Node, Tree};
pub use grid::{GridConfig, GridPoint, GridResult, GridUnit, choose_feature_count, count_grid, grid_search, inner_split};
pub use importance::{Importance, permutation_importance};
pub use knn::Knn;
pub use metrics::{ClassMetrics, ConfusionMatrix, EvalReport, Metrics, mean_sd};

use crate::dataset::{Problem, Scope};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    Forest,
    Knn,
}

impl LearnerKind {
    /// Tree counts for the forest, neighbour counts for KNN.
    pub fn default_grid(self) -> Vec<usize> {
        match self {
            LearnerKind::Forest => vec![10, 30, 50, 100, 200],
            LearnerKind::Knn => vec![5, 10, 30, 50, 100],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Forest => "RF",
            LearnerKind::Knn => "KNN",
        }
    }
}

/// Learner kind with its single tuned parameter (`tr` or `ngb`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub param: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Forest(Forest),
    Knn(Knn),
}

impl Model {
    pub fn train(x: &Matrix, y: &[usize], classes: usize, config: &LearnerConfig) -> Result<Self> {
        match config.kind {
            LearnerKind::Forest => {
                let fc = ForestConfig { trees: config.param, seed: config.seed, ..ForestConfig::default() };
                Ok(Model::Forest(Forest::train(x, y, classes, &fc)?))
            }
            LearnerKind::Knn => Ok(Model::Knn(Knn::train(x, y, classes, config.param)?)),
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        match self {
            Model::Forest(f) => f.predict(x),
            Model::Knn(k) => k.predict(x),
        }
    }

    pub fn predict_all(&self, x: &Matrix) -> Vec<usize> {
        match self {
            Model::Forest(f) => f.predict_all(x),
            Model::Knn(k) => k.predict_all(x),
        }
    }
}

/// Confusion matrix of `model` on a test set.
pub fn evaluate(model: &Model, x: &Matrix, y: &[usize], problem: Problem) -> ConfusionMatrix {
    ConfusionMatrix::from_predictions(problem, y, &model.predict_all(x))
}

pub const MODEL_FORMAT: &str = "jumplab-model";
pub const MODEL_VERSION: u32 = 1;

/// Serialized replicate models of one problem, scope and learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub problem: Problem,
    pub scope: Scope,
    pub learner: LearnerConfig,
    /// Attribute indices each model was trained on, per replicate.
    pub features: Vec<Vec<usize>>,
    pub models: Vec<Model>,
}

impl ModelFile {
    pub fn new(problem: Problem, scope: Scope, learner: LearnerConfig, features: Vec<Vec<usize>>, models: Vec<Model>) -> Self {
        Self { format: MODEL_FORMAT.into(), version: MODEL_VERSION, problem, scope, learner, features, models }
    }

    pub fn write<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer(sink, self)?;
        Ok(())
    }

    pub fn read<R: Read>(source: R) -> Result<Self> {
        let m: ModelFile = serde_json::from_reader(source)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::InconsistentData(format!("unsupported model container {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}
