//! Exhaustive hyperparameter grid scored by stratified k-fold CV.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnError};
use crate::eval::Confusion;
use crate::scalar::Scalar;

/// One hyperparameter value. `null` in a grid file means "unlimited" for
/// axes that accept it (e.g. `max_depth`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    None,
}

impl ParamValue {
    pub fn as_opt_usize(&self, name: &str) -> Result<Option<usize>, LearnError> {
        match *self {
            ParamValue::None => Ok(None),
            ParamValue::Int(v) if v >= 0 => Ok(Some(v as usize)),
            ParamValue::Float(v) if v >= 0.0 && v.fract() == 0.0 => Ok(Some(v as usize)),
            _ => Err(LearnError::InvalidHyperparameter(format!(
                "`{name}` must be a non-negative integer, got {self:?}"
            ))),
        }
    }

    pub fn as_usize(&self, name: &str) -> Result<usize, LearnError> {
        self.as_opt_usize(name)?.ok_or_else(|| {
            LearnError::InvalidHyperparameter(format!("`{name}` may not be null"))
        })
    }

    pub fn as_f64(&self, name: &str) -> Result<f64, LearnError> {
        match *self {
            ParamValue::Int(v) => Ok(v as f64),
            ParamValue::Float(v) => Ok(v),
            ParamValue::None => Err(LearnError::InvalidHyperparameter(format!(
                "`{name}` may not be null"
            ))),
        }
    }
}

pub type ParamSet = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Mean positive-class F1 over folds.
    #[default]
    F1Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: BTreeMap<String, Vec<ParamValue>>,
    pub folds: usize,
    #[serde(default)]
    pub objective: Objective,
}

impl GridSpec {
    /// n_trees {50,100,200} × max_depth {8,16,none} × min_leaf {1,5}, 5 folds.
    pub fn forest_default() -> Self {
        let ints = |v: &[i64]| v.iter().map(|&x| ParamValue::Int(x)).collect::<Vec<_>>();
        Self {
            axes: BTreeMap::from([
                ("n_trees".to_string(), ints(&[50, 100, 200])),
                (
                    "max_depth".to_string(),
                    vec![ParamValue::Int(8), ParamValue::Int(16), ParamValue::None],
                ),
                ("min_leaf".to_string(), ints(&[1, 5])),
            ]),
            folds: 5,
            objective: Objective::F1Positive,
        }
    }

    /// l2 over {1e-4, 1e-3, 1e-2, 1e-1}, 5 folds.
    pub fn linear_default() -> Self {
        Self {
            axes: BTreeMap::from([(
                "l2".to_string(),
                [1e-4, 1e-3, 1e-2, 1e-1].map(ParamValue::Float).to_vec(),
            )]),
            folds: 5,
            objective: Objective::F1Positive,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), LearnError> {
        if let Some((name, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(LearnError::InvalidGrid(format!("axis `{name}` is empty")));
        }
        if self.folds < 2 {
            return Err(LearnError::InvalidGrid("folds must be >= 2".into()));
        }
        if self.folds > n {
            return Err(LearnError::InvalidGrid(format!(
                "{} folds exceed {n} training examples",
                self.folds
            )));
        }
        Ok(())
    }

    /// Cartesian product; the last axis (by name) varies fastest.
    pub fn cells(&self) -> Vec<ParamSet> {
        let mut cells = vec![ParamSet::new()];
        for (name, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|cell| {
                    values.iter().map(move |v| {
                        let mut c = cell.clone();
                        c.insert(name.clone(), *v);
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

/// A learner the grid search can fit and query.
pub trait Trainer<F: Scalar>: Sync {
    type Model: Send;

    fn fit(&self, data: &Dataset<F>, params: &ParamSet, seed: u64) -> Result<Self::Model, LearnError>;

    fn predict(&self, model: &Self::Model, row: &[F]) -> bool;

    /// Lexicographic size key used to break score ties; smaller is simpler.
    fn complexity(&self, _params: &ParamSet) -> Vec<f64> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub params: ParamSet,
    pub fold_f1: Vec<f64>,
    pub mean_f1: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ParamSet,
    pub best_index: usize,
    pub cells: Vec<CvCell>,
}

impl GridResult {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best_index]
    }

    /// `cell,params,mean_f1,fold_1..fold_k,error`.
    pub fn to_csv(&self) -> String {
        let folds = self.cells.iter().map(|c| c.fold_f1.len()).max().unwrap_or(0);
        let mut out = String::from("cell,params,mean_f1");
        for k in 1..=folds {
            let _ = write!(out, ",fold_{k}");
        }
        out.push_str(",error\n");
        for (i, c) in self.cells.iter().enumerate() {
            let params = serde_json::to_string(&c.params).unwrap_or_default();
            let _ = write!(out, "{i},\"{}\",", params.replace('"', "\"\""));
            if let Some(m) = c.mean_f1 {
                let _ = write!(out, "{m}");
            }
            for k in 0..folds {
                out.push(',');
                if let Some(v) = c.fold_f1.get(k) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push(',');
            if let Some(e) = &c.error {
                out.push_str(&crate::eval::csv_field(e));
            }
            out.push('\n');
        }
        out
    }
}

/// Fold index per example. Examples are grouped by `(label, stratum)`,
/// shuffled within each group, and dealt round-robin with the dealing
/// position carried across groups so fold sizes differ by at most one.
pub fn stratified_kfold(labels: &[bool], strata: &[i64], k: usize, seed: u64) -> Vec<usize> {
    let mut groups: BTreeMap<(bool, i64), Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        let s = strata.get(i).copied().unwrap_or(0);
        groups.entry((y, s)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut deal = 0usize;
    for (_, mut members) in groups {
        members.shuffle(&mut rng);
        for i in members {
            fold[i] = deal % k;
            deal += 1;
        }
    }
    fold
}

fn cmp_complexity(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap_or(Ordering::Equal) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Score every grid cell by stratified k-fold CV and pick the best.
///
/// `strata` (e.g. publication year) refines the label stratification; pass
/// an empty slice to stratify by label only. A cell whose training fails in
/// any fold is recorded with its error and skipped. The winner maximizes
/// mean positive-class F1; ties go to the smaller [`Trainer::complexity`],
/// then to the earlier cell.
pub fn grid_search<F: Scalar, T: Trainer<F>>(
    data: &Dataset<F>,
    strata: &[i64],
    spec: &GridSpec,
    trainer: &T,
    seed: u64,
) -> Result<GridResult, LearnError> {
    data.check_trainable()?;
    spec.validate(data.len())?;
    let folds = stratified_kfold(data.labels(), strata, spec.folds, seed);
    let splits: Vec<(Dataset<F>, Vec<usize>)> = (0..spec.folds)
        .map(|k| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != k).collect();
            let held: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == k).collect();
            (data.subset(&train), held)
        })
        .collect();

    let cells: Vec<CvCell> = spec
        .cells()
        .into_par_iter()
        .map(|params| {
            let mut fold_f1 = Vec::with_capacity(spec.folds);
            for (k, (train, held)) in splits.iter().enumerate() {
                let model = match trainer.fit(train, &params, seed.wrapping_add(k as u64)) {
                    Ok(m) => m,
                    Err(e) => {
                        return CvCell {
                            params,
                            fold_f1,
                            mean_f1: None,
                            error: Some(format!("fold {}: {e}", k + 1)),
                        }
                    }
                };
                let conf = Confusion::from_pairs(
                    held.iter()
                        .map(|&i| (trainer.predict(&model, data.row(i)), data.label(i))),
                );
                fold_f1.push(conf.positive::<f64>().f1);
            }
            let mean = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
            CvCell {
                params,
                fold_f1,
                mean_f1: Some(mean),
                error: None,
            }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        let Some(score) = c.mean_f1 else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let bs = cells[b].mean_f1.unwrap_or(f64::NEG_INFINITY);
                if (score - bs).abs() <= 1e-12 {
                    cmp_complexity(&trainer.complexity(&c.params), &trainer.complexity(&cells[b].params))
                        == Ordering::Less
                } else {
                    score > bs
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    match best {
        Some(i) => Ok(GridResult {
            best: cells[i].params.clone(),
            best_index: i,
            cells,
        }),
        None => Err(LearnError::NoViableCell(
            cells
                .iter()
                .find_map(|c| c.error.clone())
                .unwrap_or_else(|| "no cells".into()),
        )),
    }
}
