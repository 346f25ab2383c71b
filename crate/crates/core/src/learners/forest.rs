//! Bagged random forest of [`DecisionTree`]s.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{ParamSet, Trainer};
use super::tree::{DecisionTree, TreeParams};
use super::{ClassWeights, Dataset, LearnError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams<F> {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means `ceil(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    /// `None` means inverse class frequency of the training labels.
    pub class_weights: Option<ClassWeights<F>>,
    pub threshold: F,
}

impl<F: Scalar> Default for ForestParams<F> {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            features_per_split: None,
            class_weights: None,
            threshold: F::of(0.5),
        }
    }
}

impl<F: Scalar> ForestParams<F> {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidHyperparameter(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1");
        }
        if self.max_depth == Some(0) {
            return bad("max_depth must be >= 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1");
        }
        if self.features_per_split == Some(0) {
            return bad("features_per_split must be >= 1");
        }
        if !(self.threshold > F::zero() && self.threshold < F::one()) {
            return bad("threshold must lie in (0, 1)");
        }
        if let Some(w) = &self.class_weights {
            w.validate()?;
        }
        Ok(())
    }
}

/// `ceil(sqrt(p))`, at least 1.
pub fn default_features_per_split(dim: usize) -> usize {
    ((dim as f64).sqrt().ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<F> {
    pub trees: Vec<DecisionTree<F>>,
    pub dim: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
    pub class_weights: ClassWeights<F>,
    pub threshold: F,
    pub seed: u64,
}

/// Fit `n_trees` trees, each on a same-size bootstrap resample drawn per
/// class (so every tree sees both classes). Tree `i` draws from ChaCha
/// stream `i` of `seed`, so the result does not depend on thread scheduling.
pub fn train_forest<F: Scalar>(
    data: &Dataset<F>,
    params: &ForestParams<F>,
    seed: u64,
) -> Result<ForestModel<F>, LearnError> {
    data.check_trainable()?;
    params.validate()?;
    let weights = match params.class_weights {
        Some(w) => w,
        None => ClassWeights::inverse_frequency(data.labels())?,
    };
    let dim = data.dim();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: params
            .features_per_split
            .unwrap_or_else(|| default_features_per_split(dim))
            .min(dim.max(1)),
    };
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data.label(i));
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let bootstrap: Vec<usize> = [&pos, &neg]
                .into_iter()
                .flat_map(|class| {
                    (0..class.len())
                        .map(|_| class[rng.gen_range(0..class.len())])
                        .collect::<Vec<_>>()
                })
                .collect();
            DecisionTree::fit(data, bootstrap, &tree_params, &weights, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        dim,
        n_trees: params.n_trees,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        features_per_split: tree_params.features_per_split,
        class_weights: weights,
        threshold: params.threshold,
        seed,
    })
}

/// Fraction of trees voting positive, and `score >= threshold`.
pub fn predict_forest<F: Scalar>(model: &ForestModel<F>, x: &[F]) -> Result<(bool, F), LearnError> {
    if x.len() != model.dim {
        return Err(LearnError::DimensionMismatch {
            expected: model.dim,
            found: x.len(),
        });
    }
    let score = model.score(x);
    Ok((score >= model.threshold, score))
}

impl<F: Scalar> ForestModel<F> {
    pub fn score(&self, x: &[F]) -> F {
        if self.trees.is_empty() {
            return F::zero();
        }
        let votes = self.trees.iter().filter(|t| t.predict(x)).count();
        F::of_usize(votes) / F::of_usize(self.trees.len())
    }

    /// Structural checks used after deserialization.
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.trees.len() != self.n_trees {
            return Err(LearnError::InvalidHyperparameter(format!(
                "model lists {} trees but n_trees = {}",
                self.trees.len(),
                self.n_trees
            )));
        }
        for t in &self.trees {
            if t.max_feature().is_some_and(|f| f >= self.dim) {
                return Err(LearnError::DimensionMismatch {
                    expected: self.dim,
                    found: t.max_feature().unwrap_or(0) + 1,
                });
            }
            let n = t.nodes().len();
            for node in t.nodes() {
                if let super::tree::Node::Split { left, right, .. } = node {
                    if *left >= n || *right >= n {
                        return Err(LearnError::InvalidHyperparameter(
                            "tree node points outside the tree".into(),
                        ));
                    }
                }
            }
        }
        self.class_weights.validate()
    }
}

/// Grid-search adapter; grid axes `n_trees`, `max_depth` (null = unlimited),
/// `min_leaf` and `features_per_split` override `base`.
#[derive(Debug, Clone)]
pub struct ForestTrainer<F> {
    pub base: ForestParams<F>,
}

impl<F: Scalar> Default for ForestTrainer<F> {
    fn default() -> Self {
        Self { base: ForestParams::default() }
    }
}

impl<F: Scalar> ForestTrainer<F> {
    pub fn params_for(&self, cell: &ParamSet) -> Result<ForestParams<F>, LearnError> {
        let mut p = self.base.clone();
        for (name, value) in cell {
            match name.as_str() {
                "n_trees" => p.n_trees = value.as_usize(name)?,
                "max_depth" => p.max_depth = value.as_opt_usize(name)?,
                "min_leaf" => p.min_leaf = value.as_usize(name)?,
                "features_per_split" => p.features_per_split = value.as_opt_usize(name)?,
                other => {
                    return Err(LearnError::InvalidHyperparameter(format!(
                        "unknown forest hyperparameter `{other}`"
                    )))
                }
            }
        }
        Ok(p)
    }
}

impl<F: Scalar> Trainer<F> for ForestTrainer<F> {
    type Model = ForestModel<F>;

    fn fit(&self, data: &Dataset<F>, params: &ParamSet, seed: u64) -> Result<Self::Model, LearnError> {
        train_forest(data, &self.params_for(params)?, seed)
    }

    fn predict(&self, model: &Self::Model, row: &[F]) -> bool {
        model.score(row) >= model.threshold
    }

    /// Fewer trees, then shallower, then larger leaves.
    fn complexity(&self, params: &ParamSet) -> Vec<f64> {
        let p = self.params_for(params).unwrap_or_else(|_| self.base.clone());
        vec![
            p.n_trees as f64,
            p.max_depth.map_or(f64::INFINITY, |d| d as f64),
            -(p.min_leaf as f64),
        ]
    }
}
