//! Random forest classifier over fixed-width feature vectors.
//!
//! Bagged CART trees: each tree trains on a bootstrap resample and
//! considers a fresh random feature subset at every node. Trees grow
//! until leaves are pure or smaller than twice the leaf minimum, and
//! prediction averages the positive-class frequency of the reached
//! leaves. Split thresholds sit halfway between adjacent distinct
//! sorted values; when floating-point rounding would push the midpoint
//! onto the upper value it falls back to the lower value so the
//! routing rule `x <= threshold` reproduces the training partition.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::scene::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

impl SplitCriterion {
    pub fn impurity(self, counts: &[usize]) -> Result<f64> {
        match self {
            SplitCriterion::Gini => gini_impurity(counts),
            SplitCriterion::Entropy => shannon_entropy(counts),
        }
    }
}

/// Per-node feature subset size as a function of total feature count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
        };
        m.clamp(1, n_features)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfHyperParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub criterion: SplitCriterion,
    pub max_features: MaxFeatures,
}

impl Default for RfHyperParams {
    fn default() -> Self {
        RfHyperParams {
            n_trees: 100,
            min_leaf: 1,
            criterion: SplitCriterion::Gini,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

impl RfHyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gini impurity 1 - sum(p^2) over class counts.
pub fn gini_impurity(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Data("impurity of an empty node is undefined".into()));
    }
    let n = total as f64;
    let mut sum_sq = 0.0;
    for &c in counts {
        let p = c as f64 / n;
        sum_sq += p * p;
    }
    Ok(1.0 - sum_sq)
}

/// Shannon entropy in bits over class counts.
pub fn shannon_entropy(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Data("entropy of an empty node is undefined".into()));
    }
    let n = total as f64;
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Candidate threshold with its impurity decrease.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Midpoint between two adjacent distinct values, nudged down to the
/// lower value when rounding would reach the upper one.
pub fn midpoint_threshold(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best single-feature threshold for binary labels.
///
/// Scans boundaries between adjacent distinct sorted values, keeping
/// only those that leave at least `min_leaf` samples on each side.
/// Returns the threshold with the largest impurity decrease (ties go
/// to the smallest threshold) or None when no boundary strictly
/// improves on the parent impurity.
pub fn best_split(
    values: &[f64],
    labels: &[Label],
    criterion: SplitCriterion,
    min_leaf: usize,
) -> Option<Split> {
    let n = values.len();
    assert_eq!(n, labels.len(), "values and labels must align");
    if n < 2 * min_leaf.max(1) || n < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite feature values"));

    let total_pos = labels.iter().filter(|l| **l == Label::Autonomous).count();
    let parent = criterion.impurity(&[total_pos, n - total_pos]).ok()?;

    let mut best: Option<Split> = None;
    let mut left_pos = 0usize;
    for i in 1..n {
        let prev = order[i - 1];
        if labels[prev] == Label::Autonomous {
            left_pos += 1;
        }
        let (lo, hi) = (values[prev], values[order[i]]);
        if lo == hi {
            continue;
        }
        if i < min_leaf || n - i < min_leaf {
            continue;
        }
        let left = [left_pos, i - left_pos];
        let right = [total_pos - left_pos, (n - i) - (total_pos - left_pos)];
        let wl = i as f64 / n as f64;
        let wr = (n - i) as f64 / n as f64;
        let decrease = parent
            - wl * criterion.impurity(&left).ok()?
            - wr * criterion.impurity(&right).ok()?;
        if decrease > 0.0 && best.map_or(true, |b| decrease > b.impurity_decrease) {
            best = Some(Split { threshold: midpoint_threshold(lo, hi), impurity_decrease: decrease });
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { prob: f64 },
    Branch { feature: usize, threshold: f64, left: usize, right: usize },
}

/// One CART tree stored as a node arena.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { prob } => return *prob,
                Node::Branch { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_features: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Mean positive-class frequency over all trees, in [0, 1].
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!(
                "forest trained on {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Label],
    hp: &'a RfHyperParams,
    n_features: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, samples: Vec<usize>, rng: &mut impl Rng) -> usize {
        let n = samples.len();
        let pos = samples.iter().filter(|&&i| self.y[i] == Label::Autonomous).count();
        let make_leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf { prob: pos as f64 / n as f64 });
            nodes.len() - 1
        };
        if pos == 0 || pos == n || n < 2 * self.hp.min_leaf {
            return make_leaf(&mut self.nodes);
        }

        // Random feature subset without replacement.
        let m = self.hp.max_features.count(self.n_features);
        let mut feats: Vec<usize> = (0..self.n_features).collect();
        for i in 0..m {
            let j = rng.gen_range(i..self.n_features);
            feats.swap(i, j);
        }

        let labels: Vec<Label> = samples.iter().map(|&i| self.y[i]).collect();
        let mut chosen: Option<(usize, Split)> = None;
        let mut values = Vec::with_capacity(n);
        for &f in &feats[..m] {
            values.clear();
            values.extend(samples.iter().map(|&i| self.x[i][f]));
            if let Some(split) = best_split(&values, &labels, self.hp.criterion, self.hp.min_leaf) {
                if chosen.as_ref().map_or(true, |(_, b)| split.impurity_decrease > b.impurity_decrease)
                {
                    chosen = Some((f, split));
                }
            }
        }
        let Some((feature, split)) = chosen else {
            return make_leaf(&mut self.nodes);
        };

        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&i| self.x[i][feature] <= split.threshold);
        // A usable split always separates at least one sample per side.
        debug_assert!(!left.is_empty() && !right.is_empty());

        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { prob: 0.0 }); // placeholder
        let l = self.grow(left, rng);
        let r = self.grow(right, rng);
        self.nodes[at] = Node::Branch { feature, threshold: split.threshold, left: l, right: r };
        at
    }
}

fn train_tree(x: &[Vec<f64>], y: &[Label], hp: &RfHyperParams, seed: u64) -> Tree {
    let n = x.len();
    let mut rng = rng_from(seed, &[]);
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut builder =
        TreeBuilder { x, y, hp, n_features: x[0].len(), nodes: Vec::new() };
    let root = builder.grow(bootstrap, &mut rng);
    debug_assert_eq!(root, 0);
    Tree { nodes: builder.nodes }
}

/// Trains a forest on row vectors `x` with binary labels `y`.
///
/// Deterministic in (x, y, hp, seed) regardless of thread count: each
/// tree derives its own RNG stream from the seed and its index.
pub fn rf_train(x: &[Vec<f64>], y: &[Label], hp: &RfHyperParams, seed: u64) -> Result<RandomForest> {
    hp.validate()?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} samples vs {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Data("need at least two samples to train".into()));
    }
    let n_features = x[0].len();
    if n_features == 0 {
        return Err(Error::Data("samples have no features".into()));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, expected {n_features}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!("training sample {i}")));
        }
    }
    let pos = y.iter().filter(|l| **l == Label::Autonomous).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Data("training labels contain a single class".into()));
    }

    let trees: Vec<Tree> = (0..hp.n_trees)
        .into_par_iter()
        .map(|i| train_tree(x, y, hp, crate::rng::derive_seed(seed, &[i as u64])))
        .collect();
    Ok(RandomForest { n_features, trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn impurity_fixtures() {
        assert_abs_diff_eq!(gini_impurity(&[10, 0]).unwrap(), 0.0);
        assert_abs_diff_eq!(gini_impurity(&[5, 5]).unwrap(), 0.5);
        assert_abs_diff_eq!(gini_impurity(&[3, 1]).unwrap(), 0.375);
        assert_abs_diff_eq!(shannon_entropy(&[5, 5]).unwrap(), 1.0);
        assert_abs_diff_eq!(shannon_entropy(&[4, 0]).unwrap(), 0.0);
        let expect = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert_abs_diff_eq!(shannon_entropy(&[3, 1]).unwrap(), expect, epsilon = 1e-12);
        assert!(gini_impurity(&[]).is_err());
        assert!(shannon_entropy(&[0, 0]).is_err());
    }

    #[test]
    fn best_split_finds_clean_boundary() {
        let values = [1.0, 2.0, 3.0, 4.0];
        let labels = [Label::Human, Label::Human, Label::Autonomous, Label::Autonomous];
        let split = best_split(&values, &labels, SplitCriterion::Gini, 1).unwrap();
        assert_abs_diff_eq!(split.threshold, 2.5);
        assert_abs_diff_eq!(split.impurity_decrease, 0.5);
    }

    #[test]
    fn best_split_respects_min_leaf() {
        let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let labels = [
            Label::Human,
            Label::Autonomous,
            Label::Autonomous,
            Label::Autonomous,
            Label::Autonomous,
            Label::Autonomous,
        ];
        // The clean boundary after sample 0 is forbidden at min_leaf 2.
        let split = best_split(&values, &labels, SplitCriterion::Gini, 2).unwrap();
        assert!(split.threshold > 1.5);
        assert!(best_split(&values[..4], &labels[..4], SplitCriterion::Gini, 3).is_none());
    }

    #[test]
    fn best_split_none_on_degenerate_input() {
        let same_label = [Label::Human; 4];
        assert!(best_split(&[1.0, 2.0, 3.0, 4.0], &same_label, SplitCriterion::Gini, 1).is_none());
        let labels = [Label::Human, Label::Autonomous];
        assert!(best_split(&[2.0, 2.0], &labels, SplitCriterion::Entropy, 1).is_none());
        assert!(best_split(&[], &[], SplitCriterion::Gini, 1).is_none());
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = midpoint_threshold(a, b);
        assert!(t >= a && t < b);
        assert_eq!(midpoint_threshold(2.0, 4.0), 3.0);
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::Sqrt.count(250), 15);
        assert_eq!(MaxFeatures::Log2.count(250), 7);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
        assert_eq!(MaxFeatures::Log2.count(1), 1);
    }

    fn blobs(n_per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Label>) {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(seed, &[]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..2 * n_per_class {
            let pos = i % 2 == 0;
            let center = if pos { 2.0 } else { -2.0 };
            x.push(vec![
                center + rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ]);
            y.push(if pos { Label::Autonomous } else { Label::Human });
        }
        (x, y)
    }

    #[test]
    fn forest_separates_blobs() {
        let (x, y) = blobs(40, 1);
        let hp = RfHyperParams { n_trees: 30, ..RfHyperParams::default() };
        let forest = rf_train(&x, &y, &hp, 7).unwrap();
        assert_eq!(forest.n_trees(), 30);
        let mut correct = 0;
        for (xi, yi) in x.iter().zip(&y) {
            let p = forest.predict_proba(xi).unwrap();
            assert!((0.0..=1.0).contains(&p));
            if (p >= 0.5) == (*yi == Label::Autonomous) {
                correct += 1;
            }
        }
        assert_eq!(correct, x.len());
    }

    #[test]
    fn forest_training_is_deterministic() {
        let (x, y) = blobs(20, 2);
        let hp = RfHyperParams { n_trees: 10, ..RfHyperParams::default() };
        let a = rf_train(&x, &y, &hp, 3).unwrap();
        let b = rf_train(&x, &y, &hp, 3).unwrap();
        assert_eq!(a, b);
        let c = rf_train(&x, &y, &hp, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forest_rejects_bad_input() {
        let (x, y) = blobs(5, 3);
        let hp = RfHyperParams::default();
        assert!(rf_train(&x[..0], &y[..0], &hp, 0).is_err());
        assert!(rf_train(&x, &y[..4], &hp, 0).is_err());
        let all_pos = vec![Label::Autonomous; x.len()];
        assert!(rf_train(&x, &all_pos, &hp, 0).is_err());
        let bad_hp = RfHyperParams { n_trees: 0, ..hp };
        assert!(rf_train(&x, &y, &bad_hp, 0).is_err());
        let mut ragged = x.clone();
        ragged[1].pop();
        assert!(rf_train(&ragged, &y, &RfHyperParams::default(), 0).is_err());

        let forest = rf_train(&x, &y, &RfHyperParams { n_trees: 3, ..RfHyperParams::default() }, 0)
            .unwrap();
        assert!(forest.predict_proba(&[1.0]).is_err());
    }
}
