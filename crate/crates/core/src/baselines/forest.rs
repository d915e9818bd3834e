use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bit_lists, check_training, check_width, BaselineError};
use crate::chem::Fingerprint;
use crate::rng::{derive_seed, seeded};

/// Inputs are bits, so the only useful threshold is 0.5: a row goes left
/// when the bit is clear and right when it is set.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    /// Fraction of features considered at each split, rounded up.
    pub max_features_frac: f64,
    /// Nodes with fewer rows become leaves.
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_features_frac: 1.0 / 3.0,
            min_samples_split: 6,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn features_per_split(&self, width: usize) -> usize {
        ((self.max_features_frac * width as f64).ceil() as usize).clamp(1, width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// Training rows reaching the leaf per class, `[inactive, active]`.
    Leaf { counts: [u32; 2] },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub seed: u64,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, fp: &Fingerprint) -> [u32; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature, left, right, ..
                } => at = if fp.contains(*feature as usize) { *right } else { *left } as usize,
            }
        }
    }

    pub fn predict(&self, fp: &Fingerprint) -> f64 {
        let [n0, n1] = self.leaf_for(fp);
        n1 as f64 / (n0 + n1) as f64
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub input_width: usize,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Mean over trees of the active fraction in the reached leaf.
    pub fn predict_proba(&self, features: &[Fingerprint]) -> Result<Vec<f64>, BaselineError> {
        check_width(features, self.input_width)?;
        let n = self.trees.len() as f64;
        Ok(features
            .iter()
            .map(|fp| self.trees.iter().map(|t| t.predict(fp)).sum::<f64>() / n)
            .collect())
    }
}

/// Gini impurity `1 − p₀² − p₁²` of class counts.
pub fn gini(counts: [u32; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

/// Impurity decrease of splitting `parent` into `left` and `right`,
/// weighting each child by its share of the rows.
pub fn gini_gain(parent: [u32; 2], left: [u32; 2], right: [u32; 2]) -> f64 {
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    gini(parent) - nl / n * gini(left) - nr / n * gini(right)
}

struct Builder<'a> {
    rows: &'a [Vec<u32>],
    features: &'a [Fingerprint],
    labels: &'a [u8],
    mtry: usize,
    min_split: usize,
    /// Per-feature row and active counts for the current node.
    seen: Vec<u32>,
    active: Vec<u32>,
    touched: Vec<u32>,
    order: Vec<u32>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[u32]) -> [u32; 2] {
        let pos = idx.iter().filter(|&&i| self.labels[i as usize] == 1).count() as u32;
        [idx.len() as u32 - pos, pos]
    }

    /// Best split among up to `mtry` non-constant features drawn without
    /// replacement. Constant features do not count toward `mtry`; drawing
    /// continues until `mtry` candidates were scored or features run out.
    fn best_split(&mut self, idx: &[u32], parent: [u32; 2], rng: &mut crate::rng::Rng) -> Option<u32> {
        for &f in &self.touched {
            self.seen[f as usize] = 0;
            self.active[f as usize] = 0;
        }
        self.touched.clear();
        for &i in idx {
            let y = self.labels[i as usize] as u32;
            for &b in &self.rows[i as usize] {
                if self.seen[b as usize] == 0 {
                    self.touched.push(b);
                }
                self.seen[b as usize] += 1;
                self.active[b as usize] += y;
            }
        }
        let n = idx.len() as u32;
        let width = self.order.len();
        let mut scored = 0;
        let mut best: Option<(f64, u32)> = None;
        for k in 0..width {
            let j = rng.random_range(k..width);
            self.order.swap(k, j);
            let f = self.order[k] as usize;
            let set = self.seen[f];
            if set == 0 || set == n {
                continue;
            }
            let right = [set - self.active[f], self.active[f]];
            let left = [parent[0] - right[0], parent[1] - right[1]];
            let gain = gini_gain(parent, left, right);
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, f as u32));
            }
            scored += 1;
            if scored == self.mtry {
                break;
            }
        }
        best.map(|(_, f)| f)
    }

    fn build(&mut self, sample: Vec<u32>, seed: u64) -> Tree {
        let mut rng = seeded(seed);
        let mut nodes = vec![Node::Leaf { counts: [0, 0] }];
        let mut stack = vec![(0usize, sample)];
        while let Some((at, idx)) = stack.pop() {
            let counts = self.counts(&idx);
            let pure = counts[0] == 0 || counts[1] == 0;
            let split = if pure || idx.len() < self.min_split {
                None
            } else {
                self.best_split(&idx, counts, &mut rng)
            };
            let Some(feature) = split else {
                nodes[at] = Node::Leaf { counts };
                continue;
            };
            let (right, left): (Vec<u32>, Vec<u32>) =
                idx.iter().partition(|&&i| self.features[i as usize].contains(feature as usize));
            let l = nodes.len();
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes.push(Node::Leaf { counts: [0, 0] });
            nodes[at] = Node::Split {
                feature,
                threshold: THRESHOLD,
                left: l as u32,
                right: l as u32 + 1,
            };
            stack.push((l + 1, right));
            stack.push((l, left));
        }
        Tree { seed, nodes }
    }
}

/// Train a forest. Tree `t` draws its bootstrap sample and feature subsets
/// from `derive_seed(config.seed, t)`, so the result does not depend on how
/// trees are scheduled across threads.
pub fn train_random_forest(
    features: &[Fingerprint],
    labels: &[u8],
    config: &ForestConfig,
) -> Result<ForestModel, BaselineError> {
    let width = check_training(features, labels)?;
    if config.trees == 0 || !(config.max_features_frac > 0.0 && config.max_features_frac <= 1.0) {
        return Err(BaselineError::InvalidConfig(format!("{config:?}")));
    }
    if features.len() < config.min_samples_split.max(1) {
        return Err(BaselineError::EmptyInput(format!(
            "{} examples, at least {} needed",
            features.len(),
            config.min_samples_split
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(BaselineError::InvalidConfig("labels must be 0 or 1".into()));
    }
    let rows = bit_lists(features);
    let n = features.len();
    let mtry = config.features_per_split(width);
    let trees = (0..config.trees as u64)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(config.seed, t);
            let sample: Vec<u32> = if config.bootstrap {
                let mut rng = seeded(derive_seed(seed, 0));
                (0..n).map(|_| rng.random_range(0..n as u32)).collect()
            } else {
                (0..n as u32).collect()
            };
            let mut builder = Builder {
                rows: &rows,
                features,
                labels,
                mtry,
                min_split: config.min_samples_split,
                seen: vec![0; width],
                active: vec![0; width],
                touched: Vec::new(),
                order: (0..width as u32).collect(),
            };
            builder.build(sample, derive_seed(seed, 1))
        })
        .collect();
    Ok(ForestModel {
        input_width: width,
        config: config.clone(),
        trees,
    })
}
