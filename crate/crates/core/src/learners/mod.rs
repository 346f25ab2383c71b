//! Random forest over lexicon features, logistic head over frozen
//! embeddings, and grid-search cross-validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub mod forest;
pub mod grid;
pub mod linear;
pub mod tree;

pub use forest::{predict_forest, train_forest, ForestModel, ForestParams, ForestTrainer};
pub use grid::{grid_search, stratified_kfold, CvCell, GridResult, GridSpec, ParamSet, ParamValue, Trainer};
pub use linear::{train_linear, LinearModel, LinearParams, LinearTrainer};
pub use tree::DecisionTree;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no training examples")]
    EmptyData,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no embedding for labeled id `{0}`")]
    MissingEmbedding(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("every grid cell failed; first error: {0}")]
    NoViableCell(String),
}

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<F> {
    dim: usize,
    x: Vec<F>,
    y: Vec<bool>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[F]>>(rows: &[R], labels: &[bool]) -> Result<Self, LearnError> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut d = Self::new(dim);
        for (r, &l) in rows.iter().zip(labels) {
            d.push(r.as_ref(), l)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, row: &[F], label: bool) -> Result<(), LearnError> {
        if row.len() != self.dim {
            return Err(LearnError::DimensionMismatch {
                expected: self.dim,
                found: row.len(),
            });
        }
        self.x.extend_from_slice(row);
        self.y.push(label);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[F] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> bool {
        self.y[i]
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&y| y).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut d = Self::new(self.dim);
        for &i in indices {
            d.x.extend_from_slice(self.row(i));
            d.y.push(self.y[i]);
        }
        d
    }

    /// Errors unless the data is non-empty and has both classes.
    pub fn check_trainable(&self) -> Result<(), LearnError> {
        if self.is_empty() {
            return Err(LearnError::EmptyData);
        }
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(LearnError::SingleClass);
        }
        Ok(())
    }
}

/// Per-class sample weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights<F> {
    pub negative: F,
    pub positive: F,
}

impl<F: Scalar> ClassWeights<F> {
    pub fn unit() -> Self {
        Self {
            negative: F::one(),
            positive: F::one(),
        }
    }

    /// `n / (2 * n_class)` for each class.
    pub fn inverse_frequency(labels: &[bool]) -> Result<Self, LearnError> {
        let n = labels.len();
        if n == 0 {
            return Err(LearnError::EmptyData);
        }
        let pos = labels.iter().filter(|&&y| y).count();
        if pos == 0 || pos == n {
            return Err(LearnError::SingleClass);
        }
        let two_n = F::of_usize(n);
        Ok(Self {
            negative: two_n / F::of_usize(2 * (n - pos)),
            positive: two_n / F::of_usize(2 * pos),
        })
    }

    #[inline]
    pub fn of(&self, label: bool) -> F {
        if label {
            self.positive
        } else {
            self.negative
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.negative > F::zero()
            && self.positive > F::zero()
            && self.negative.is_finite()
            && self.positive.is_finite()
        {
            Ok(())
        } else {
            Err(LearnError::InvalidHyperparameter(
                "class weights must be positive and finite".into(),
            ))
        }
    }
}
