//! CART-style binary decision tree with class-weighted Gini splits.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassWeights, Dataset};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    /// Minimum samples on each side of a split.
    pub min_leaf: usize,
    /// Features drawn (without replacement) at every node.
    pub features_per_split: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node<F> {
    Leaf {
        /// Class with the larger weighted count; ties go negative.
        vote: bool,
        positive_weight: F,
        negative_weight: F,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: F,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<F> {
    nodes: Vec<Node<F>>,
}

/// Best split found at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<F> {
    pub feature: usize,
    pub threshold: F,
    /// Weight-averaged Gini impurity of the two children.
    pub impurity: F,
}

/// Gini impurity `1 - p^2 - q^2` of a node with the given class weights.
#[inline]
pub fn gini<F: Scalar>(positive: F, negative: F) -> F {
    let total = positive + negative;
    if total <= F::zero() {
        return F::zero();
    }
    let p = positive / total;
    let q = negative / total;
    F::one() - p * p - q * q
}

fn midpoint<F: Scalar>(lo: F, hi: F) -> F {
    let mid = lo + (hi - lo) / F::of(2.0);
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn cmp_values<F: Scalar>(a: &F, b: &F) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Lowest weighted child impurity over `features`, scanning every boundary
/// between distinct sorted values. Each child must keep at least `min_leaf`
/// samples. Ties keep the earliest feature in `features`, then the lowest
/// threshold.
pub fn best_split<F: Scalar>(
    data: &Dataset<F>,
    samples: &[usize],
    features: &[usize],
    weights: &ClassWeights<F>,
    min_leaf: usize,
) -> Option<Split<F>> {
    let min_leaf = min_leaf.max(1);
    let n = samples.len();
    if n < 2 * min_leaf {
        return None;
    }
    let (mut tot_pos, mut tot_neg) = (F::zero(), F::zero());
    for &i in samples {
        if data.label(i) {
            tot_pos = tot_pos + weights.positive;
        } else {
            tot_neg = tot_neg + weights.negative;
        }
    }
    let total = tot_pos + tot_neg;

    let mut best: Option<Split<F>> = None;
    let mut column: Vec<(F, bool)> = Vec::with_capacity(n);
    for &f in features {
        column.clear();
        column.extend(samples.iter().map(|&i| (data.row(i)[f], data.label(i))));
        column.sort_by(|a, b| cmp_values(&a.0, &b.0));

        let (mut lp, mut ln) = (F::zero(), F::zero());
        for k in 0..n - 1 {
            if column[k].1 {
                lp = lp + weights.positive;
            } else {
                ln = ln + weights.negative;
            }
            let left_count = k + 1;
            if left_count < min_leaf || n - left_count < min_leaf {
                continue;
            }
            if column[k].0 >= column[k + 1].0 {
                continue;
            }
            let (rp, rn) = (tot_pos - lp, tot_neg - ln);
            let impurity = ((lp + ln) * gini(lp, ln) + (rp + rn) * gini(rp, rn)) / total;
            if best.is_none_or(|b| impurity < b.impurity) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(column[k].0, column[k + 1].0),
                    impurity,
                });
            }
        }
    }
    best
}

impl<F: Scalar> DecisionTree<F> {
    /// Grow a tree on `samples` (indices into `data`, repeats allowed).
    pub fn fit<R: Rng>(
        data: &Dataset<F>,
        samples: Vec<usize>,
        params: &TreeParams,
        weights: &ClassWeights<F>,
        rng: &mut R,
    ) -> Self {
        let dim = data.dim();
        let k = params.features_per_split.clamp(1, dim.max(1));
        let mut nodes: Vec<Node<F>> = Vec::new();
        let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        nodes.push(placeholder());
        stack.push((0, samples, 0));

        while let Some((slot, samples, depth)) = stack.pop() {
            let (mut pw, mut nw) = (F::zero(), F::zero());
            for &i in &samples {
                if data.label(i) {
                    pw = pw + weights.positive;
                } else {
                    nw = nw + weights.negative;
                }
            }
            let leaf = Node::Leaf {
                vote: pw > nw,
                positive_weight: pw,
                negative_weight: nw,
            };
            let parent = gini(pw, nw);
            let depth_ok = params.max_depth.is_none_or(|d| depth < d);
            if !depth_ok || parent <= F::zero() || dim == 0 {
                nodes[slot] = leaf;
                continue;
            }
            let mut features: Vec<usize> = sample(rng, dim, k).into_vec();
            features.sort_unstable();
            let split = best_split(data, &samples, &features, weights, params.min_leaf);
            let tol = F::epsilon() * F::of(16.0);
            match split {
                Some(s) if s.impurity < parent - tol => {
                    let (left, right): (Vec<usize>, Vec<usize>) = samples
                        .iter()
                        .partition(|&&i| data.row(i)[s.feature] <= s.threshold);
                    let li = nodes.len();
                    nodes.push(placeholder());
                    nodes.push(placeholder());
                    nodes[slot] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left: li,
                        right: li + 1,
                    };
                    stack.push((li + 1, right, depth + 1));
                    stack.push((li, left, depth + 1));
                }
                _ => nodes[slot] = leaf,
            }
        }
        Self { nodes }
    }

    pub fn predict(&self, row: &[F]) -> bool {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { vote, .. } => return *vote,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node<F>] {
        &self.nodes
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            match &self.nodes[at] {
                Node::Leaf { .. } => max = max.max(d),
                Node::Split { left, right, .. } => {
                    stack.push((*left, d + 1));
                    stack.push((*right, d + 1));
                }
            }
        }
        max
    }

    /// Largest feature index referenced by a split.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub fn from_nodes(nodes: Vec<Node<F>>) -> Self {
        Self { nodes }
    }
}

fn placeholder<F: Scalar>() -> Node<F> {
    Node::Leaf {
        vote: false,
        positive_weight: F::zero(),
        negative_weight: F::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct re-evaluation of every candidate threshold.
    fn oracle(
        data: &Dataset<f64>,
        samples: &[usize],
        features: &[usize],
        w: &ClassWeights<f64>,
        min_leaf: usize,
    ) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in features {
            let mut vals: Vec<f64> = samples.iter().map(|&i| data.row(i)[f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for pair in vals.windows(2) {
                let t = pair[0] + (pair[1] - pair[0]) / 2.0;
                let t = if t >= pair[1] { pair[0] } else { t };
                let (mut l, mut r) = ((0.0, 0.0, 0usize), (0.0, 0.0, 0usize));
                for &i in samples {
                    let side = if data.row(i)[f] <= t { &mut l } else { &mut r };
                    if data.label(i) {
                        side.0 += w.positive;
                    } else {
                        side.1 += w.negative;
                    }
                    side.2 += 1;
                }
                if l.2 < min_leaf || r.2 < min_leaf {
                    continue;
                }
                let g = |p: f64, q: f64| {
                    let s = p + q;
                    1.0 - (p / s).powi(2) - (q / s).powi(2)
                };
                let imp = ((l.0 + l.1) * g(l.0, l.1) + (r.0 + r.1) * g(r.0, r.1))
                    / (l.0 + l.1 + r.0 + r.1);
                if best.is_none_or(|b| imp < b.2 - 1e-12) {
                    best = Some((f, t, imp));
                }
            }
        }
        best
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Dataset<f64> {
        let mut d = Dataset::new(dim);
        for _ in 0..n {
            let row: Vec<f64> = (0..dim).map(|_| (rng.gen_range(0..6) as f64) * 0.5).collect();
            let label = row[0] + rng.gen_range(-1.0..1.0) > 1.2;
            d.push(&row, label).unwrap();
        }
        d
    }

    #[test]
    fn split_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..200 {
            let n = rng.gen_range(2..=50);
            let data = random_data(&mut rng, n, 4);
            let samples: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let features: Vec<usize> = sample(&mut rng, 4, 2).into_vec();
            let w = ClassWeights {
                negative: 1.0,
                positive: rng.gen_range(0.5..5.0),
            };
            let min_leaf = rng.gen_range(1..4);
            let got = best_split(&data, &samples, &features, &w, min_leaf);
            let want = oracle(&data, &samples, &features, &w, min_leaf);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(o)) => {
                    assert!((g.impurity - o.2).abs() < 1e-9, "case {case}: {g:?} vs {o:?}");
                }
                other => panic!("case {case}: {other:?}"),
            }
        }
    }

    #[test]
    fn two_points_depth_one() {
        let data = Dataset::from_rows(&[[0.0f64], [1.0]], &[false, true]).unwrap();
        let params = TreeParams {
            max_depth: Some(1),
            min_leaf: 1,
            features_per_split: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = DecisionTree::fit(&data, vec![0, 1], &params, &ClassWeights::unit(), &mut rng);
        assert!(!t.predict(&[0.0]));
        assert!(t.predict(&[1.0]));
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn depth_limit_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_data(&mut rng, 300, 3);
        for max in [1, 2, 4] {
            let params = TreeParams {
                max_depth: Some(max),
                min_leaf: 1,
                features_per_split: 3,
            };
            let t = DecisionTree::fit(&data, (0..300).collect(), &params, &ClassWeights::unit(), &mut rng);
            assert!(t.depth() <= max);
            assert!(t.max_feature().unwrap() < 3);
        }
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(1.0f64, 1.0), 0.5);
        assert_eq!(gini(3.0f64, 0.0), 0.0);
        assert_eq!(gini(0.0f64, 0.0), 0.0);
    }
}
