//! Class-weighted, L2-regularized logistic regression over fixed vectors.
//!
//! Objective, with `s_i = ±1`, `z_i = w·x_i + b` and sample weights `c_i`
//! taken from the class weights:
//!
//! ```text
//! L(w, b) = Σ c_i · ln(1 + exp(-s_i z_i)) / Σ c_i  +  (l2 / 2) · |w|²
//! ```
//!
//! Minimized by full-batch gradient descent with Armijo backtracking from
//! the zero vector; the bias is not regularized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{ParamSet, Trainer};
use super::{ClassWeights, Dataset, LearnError};
use crate::ingest::EmbeddingTable;
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams<F> {
    pub l2: F,
    /// `None` means inverse class frequency.
    pub class_weights: Option<ClassWeights<F>>,
    pub threshold: F,
    pub max_iter: usize,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub tolerance: F,
}

impl<F: Scalar> Default for LinearParams<F> {
    fn default() -> Self {
        Self {
            l2: F::of(1e-4),
            class_weights: None,
            threshold: F::of(0.5),
            max_iter: DEFAULT_MAX_ITER,
            tolerance: F::of(DEFAULT_TOLERANCE),
        }
    }
}

impl<F: Scalar> LinearParams<F> {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidHyperparameter(m.to_string()));
        if !(self.l2 >= F::zero() && self.l2.is_finite()) {
            return bad("l2 must be a finite non-negative number");
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<F> {
    pub weights: Vec<F>,
    pub bias: F,
    pub l2: F,
    pub threshold: F,
    pub class_weights: ClassWeights<F>,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
fn softplus<F: Scalar>(t: F) -> F {
    // ln(1 + e^t) without overflow
    t.max(F::zero()) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid<F: Scalar>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (F::one() + e)
    }
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Loss only.
pub fn logistic_loss<F: Scalar>(
    weights: &[F],
    bias: F,
    data: &Dataset<F>,
    class_weights: &ClassWeights<F>,
    l2: F,
) -> F {
    let mut total_c = F::zero();
    let mut acc = F::zero();
    for i in 0..data.len() {
        let c = class_weights.of(data.label(i));
        let s = if data.label(i) { F::one() } else { -F::one() };
        let z = dot(weights, data.row(i)) + bias;
        acc = acc + c * softplus(-s * z);
        total_c = total_c + c;
    }
    let reg = F::of(0.5) * l2 * dot(weights, weights);
    if total_c > F::zero() {
        acc / total_c + reg
    } else {
        reg
    }
}

/// Loss plus its gradient with respect to `(weights, bias)`.
pub fn logistic_loss_and_grad<F: Scalar>(
    weights: &[F],
    bias: F,
    data: &Dataset<F>,
    class_weights: &ClassWeights<F>,
    l2: F,
) -> (F, Vec<F>, F) {
    let dim = weights.len();
    let mut grad = vec![F::zero(); dim];
    let mut grad_b = F::zero();
    let mut total_c = F::zero();
    let mut acc = F::zero();
    for i in 0..data.len() {
        let row = data.row(i);
        let c = class_weights.of(data.label(i));
        let s = if data.label(i) { F::one() } else { -F::one() };
        let z = dot(weights, row) + bias;
        acc = acc + c * softplus(-s * z);
        total_c = total_c + c;
        // d/dz softplus(-s z) = -s * sigmoid(-s z)
        let g = -s * c * sigmoid(-s * z);
        for (gj, &xj) in grad.iter_mut().zip(row) {
            *gj = *gj + g * xj;
        }
        grad_b = grad_b + g;
    }
    let norm = if total_c > F::zero() { total_c } else { F::one() };
    for (gj, &wj) in grad.iter_mut().zip(weights) {
        *gj = *gj / norm + l2 * wj;
    }
    let loss = acc / norm + F::of(0.5) * l2 * dot(weights, weights);
    (loss, grad, grad_b / norm)
}

/// Gradient descent on a prepared dataset.
pub fn fit_logistic<F: Scalar>(
    data: &Dataset<F>,
    params: &LinearParams<F>,
    seed: u64,
) -> Result<LinearModel<F>, LearnError> {
    data.check_trainable()?;
    params.validate()?;
    let cw = match params.class_weights {
        Some(w) => w,
        None => ClassWeights::inverse_frequency(data.labels())?,
    };
    let dim = data.dim();
    let mut w = vec![F::zero(); dim];
    let mut b = F::zero();
    let mut step = F::one();
    let half = F::of(0.5);
    let min_step = F::of(1e-20);
    let mut iterations = 0;
    let mut converged = false;

    let (mut loss, mut gw, mut gb) = logistic_loss_and_grad(&w, b, data, &cw, params.l2);
    while iterations < params.max_iter {
        let gnorm2 = dot(&gw, &gw) + gb * gb;
        if gnorm2.sqrt() < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut t = step;
        let (mut cand_w, mut cand_b);
        loop {
            cand_w = w.iter().zip(&gw).map(|(&wi, &gi)| wi - t * gi).collect::<Vec<_>>();
            cand_b = b - t * gb;
            let cand_loss = logistic_loss(&cand_w, cand_b, data, &cw, params.l2);
            if cand_loss <= loss - half * t * gnorm2 || t < min_step {
                break;
            }
            t = t * half;
        }
        if t < min_step {
            // no further descent representable at this precision
            break;
        }
        w = cand_w;
        b = cand_b;
        step = (t * F::of(2.0)).min(F::of(1e6));
        (loss, gw, gb) = logistic_loss_and_grad(&w, b, data, &cw, params.l2);
    }
    if !converged {
        let gnorm = (dot(&gw, &gw) + gb * gb).sqrt();
        converged = gnorm < params.tolerance;
    }
    Ok(LinearModel {
        weights: w,
        bias: b,
        l2: params.l2,
        threshold: params.threshold,
        class_weights: cw,
        seed,
        iterations,
        converged,
    })
}

/// Join labels to embeddings (ascending id order) and fit.
///
/// The optimizer is deterministic; `seed` is recorded in the model so runs
/// are described by the same tuple as the forest.
pub fn train_linear<F: Scalar>(
    table: &EmbeddingTable<F>,
    labels: &BTreeMap<String, bool>,
    params: &LinearParams<F>,
    seed: u64,
) -> Result<LinearModel<F>, LearnError> {
    let data = embedding_dataset(table, labels)?;
    fit_logistic(&data, params, seed)
}

pub fn embedding_dataset<F: Scalar>(
    table: &EmbeddingTable<F>,
    labels: &BTreeMap<String, bool>,
) -> Result<Dataset<F>, LearnError> {
    let mut data = Dataset::new(table.dim());
    for (id, &label) in labels {
        let row = table
            .get(id)
            .ok_or_else(|| LearnError::MissingEmbedding(id.clone()))?;
        data.push(row, label)?;
    }
    Ok(data)
}

impl<F: Scalar> LinearModel<F> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `sigmoid(w·x + b)` and `score >= threshold`.
    pub fn predict(&self, x: &[F]) -> Result<(bool, F), LearnError> {
        if x.len() != self.weights.len() {
            return Err(LearnError::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        let p = sigmoid(dot(&self.weights, x) + self.bias);
        Ok((p >= self.threshold, p))
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(LearnError::InvalidHyperparameter("non-finite weights".into()));
        }
        self.class_weights.validate()
    }
}

/// Grid-search adapter; axis `l2`.
#[derive(Debug, Clone)]
pub struct LinearTrainer<F> {
    pub base: LinearParams<F>,
}

impl<F: Scalar> Default for LinearTrainer<F> {
    fn default() -> Self {
        Self { base: LinearParams::default() }
    }
}

impl<F: Scalar> LinearTrainer<F> {
    pub fn params_for(&self, cell: &ParamSet) -> Result<LinearParams<F>, LearnError> {
        let mut p = self.base.clone();
        for (name, value) in cell {
            match name.as_str() {
                "l2" => p.l2 = F::of(value.as_f64(name)?),
                other => {
                    return Err(LearnError::InvalidHyperparameter(format!(
                        "unknown linear hyperparameter `{other}`"
                    )))
                }
            }
        }
        Ok(p)
    }
}

impl<F: Scalar> Trainer<F> for LinearTrainer<F> {
    type Model = LinearModel<F>;

    fn fit(&self, data: &Dataset<F>, params: &ParamSet, seed: u64) -> Result<Self::Model, LearnError> {
        fit_logistic(data, &self.params_for(params)?, seed)
    }

    fn predict(&self, model: &Self::Model, row: &[F]) -> bool {
        model.predict(row).map(|(l, _)| l).unwrap_or(false)
    }

    /// Stronger regularization is simpler.
    fn complexity(&self, params: &ParamSet) -> Vec<f64> {
        let p = self.params_for(params).unwrap_or_else(|_| self.base.clone());
        vec![-p.l2.as_f64()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(n: usize, dim: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut d = Dataset::new(dim);
        for _ in 0..n {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y = dot(&truth, &x) + rng.gen_range(-0.5..0.5) > 0.0;
            d.push(&x, y).unwrap();
        }
        d
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert_eq!(softplus(-1000.0f64), 0.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
    }

    #[test]
    fn descends_below_zero_vector() {
        let d = noisy(150, 4, 2);
        let cw = ClassWeights::inverse_frequency(d.labels()).unwrap();
        let params = LinearParams { l2: 0.01, ..Default::default() };
        let m = fit_logistic(&d, &params, 0).unwrap();
        let at_zero = logistic_loss(&[0.0; 4], 0.0, &d, &cw, 0.01);
        let at_fit = logistic_loss(&m.weights, m.bias, &d, &cw, 0.01);
        assert!(at_fit <= at_zero);
        assert!(m.converged, "{} iterations", m.iterations);
    }

    #[test]
    fn gradient_agrees_with_loss() {
        let d = noisy(40, 3, 8);
        let cw = ClassWeights { negative: 0.7, positive: 2.0 };
        let w = [0.3, -0.2, 0.5];
        let (loss, _, _) = logistic_loss_and_grad(&w, 0.1, &d, &cw, 0.05);
        assert!((loss - logistic_loss(&w, 0.1, &d, &cw, 0.05)).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let d = Dataset::from_rows(&[[1.0f64], [2.0]], &[false, false]).unwrap();
        assert!(matches!(
            fit_logistic(&d, &LinearParams::default(), 0),
            Err(LearnError::SingleClass)
        ));
        let mut t = EmbeddingTable::<f64>::new(1);
        t.insert("a", &[1.0]).unwrap();
        let labels: BTreeMap<String, bool> = [("a".to_string(), true), ("b".to_string(), false)].into();
        assert!(matches!(
            train_linear(&t, &labels, &LinearParams::default(), 0),
            Err(LearnError::MissingEmbedding(id)) if id == "b"
        ));
    }

    #[test]
    fn deterministic() {
        let d = noisy(80, 3, 5);
        let p = LinearParams::default();
        assert_eq!(fit_logistic(&d, &p, 1).unwrap(), fit_logistic(&d, &p, 1).unwrap());
    }

    #[test]
    fn f32_fits_too() {
        let d64 = noisy(100, 2, 9);
        let rows: Vec<Vec<f32>> = (0..d64.len()).map(|i| d64.row(i).iter().map(|&v| v as f32).collect()).collect();
        let d = Dataset::from_rows(&rows, d64.labels()).unwrap();
        let m = fit_logistic(&d, &LinearParams::<f32> { max_iter: 500, ..Default::default() }, 0).unwrap();
        let correct = (0..d.len()).filter(|&i| m.predict(d.row(i)).unwrap().0 == d.label(i)).count();
        assert!(correct as f64 / d.len() as f64 > 0.8);
    }
}
