//! A random decision forest built from scratch on real-valued features.
//!
//! Each tree is grown on the full training set (no bagging). At every node
//! a fixed number of candidate splits is drawn: a uniform feature index
//! paired with a threshold read from a uniformly drawn training vector at
//! that index, so thresholds always sit on observed values. The candidate
//! with the highest information gain
//!
//! ```text
//! I = H(B) - (|L| / |B|) H(L) - (|R| / |B|) H(R)
//! ```
//!
//! wins (first drawn wins ties); if no candidate reaches `min_gain_bits`
//! the node becomes a leaf holding its label counts. Scoring averages the
//! leaf positive fractions across trees, so the output is a probability in
//! `[0, 1]` rather than a hard vote.
//!
//! Tree `i` is seeded by `derive_seed(seed, i)`, which makes parallel and
//! sequential training produce identical forests.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::seed::{derive_seed, draw_index, rng_from_seed};
use crate::{Error, Result};

/// Shannon entropy of a count vector, in bits. Empty (all-zero) counts
/// have zero entropy.
pub fn entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Information gain of splitting `parent` into `left` and `right`.
/// The children must partition the parent exactly.
pub fn information_gain(parent: &[u64], left: &[u64], right: &[u64]) -> Result<f64> {
    if parent.len() != left.len() || parent.len() != right.len() {
        return Err(Error::PartitionMismatch {
            message: format!(
                "count vectors differ in length: {} / {} / {}",
                parent.len(),
                left.len(),
                right.len()
            ),
        });
    }
    for i in 0..parent.len() {
        if left[i] + right[i] != parent[i] {
            return Err(Error::PartitionMismatch {
                message: format!(
                    "class {i}: {} + {} != {}",
                    left[i], right[i], parent[i]
                ),
            });
        }
    }
    Ok(gain_from_counts(parent, left, right))
}

/// The gain formula without the partition check, for the hot path. Tiny
/// negative rounding residue is clamped to zero.
fn gain_from_counts(parent: &[u64], left: &[u64], right: &[u64]) -> f64 {
    let total: u64 = parent.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let nl: u64 = left.iter().sum();
    let nr: u64 = right.iter().sum();
    let n = total as f64;
    let gain =
        entropy(parent) - (nl as f64 / n) * entropy(left) - (nr as f64 / n) * entropy(right);
    gain.max(0.0)
}

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate (feature, threshold) draws per node.
    pub features_per_branch: usize,
    /// A node refuses to split when its best candidate gains less than this
    /// many bits.
    pub min_gain_bits: f64,
    /// Maximum branch levels on any root-to-leaf path; the root sits at
    /// depth 0, so a node at this depth is always a leaf.
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 400,
            features_per_branch: 30,
            min_gain_bits: 0.001,
            max_depth: 5,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::InvalidConfig { message });
        if self.n_trees == 0 {
            return bad("n_trees must be positive".into());
        }
        if self.features_per_branch == 0 {
            return bad("features_per_branch must be positive".into());
        }
        if !(self.min_gain_bits >= 0.0 && self.min_gain_bits.is_finite()) {
            return bad(format!("min_gain_bits {} must be finite and >= 0", self.min_gain_bits));
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive".into());
        }
        Ok(())
    }
}

/// A tree node. Serialized untagged: branches carry `feature/threshold/
/// left/right`, leaves carry `neg/pos`, and the field sets distinguish them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Branch {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        neg: u64,
        pos: u64,
    },
}

impl Node {
    fn leaf_fraction(&self, values: &[f64]) -> f64 {
        match self {
            Node::Branch {
                feature,
                threshold,
                left,
                right,
            } => {
                if values[*feature] <= *threshold {
                    left.leaf_fraction(values)
                } else {
                    right.leaf_fraction(values)
                }
            }
            Node::Leaf { neg, pos } => *pos as f64 / (*neg + *pos) as f64,
        }
    }

    fn collect_features(&self, used: &mut Vec<bool>) {
        if let Node::Branch {
            feature,
            left,
            right,
            ..
        } = self
        {
            used[*feature] = true;
            left.collect_features(used);
            right.collect_features(used);
        }
    }

    fn max_depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Branch { left, right, .. } => 1 + left.max_depth().max(right.max_depth()),
        }
    }
}

/// Training rows with labels. `threshold_rows`, when set, is the pool that
/// candidate thresholds are read from instead of the training rows
/// themselves (the training rows remain what gain is computed on).
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub threshold_rows: Option<Vec<Vec<f64>>>,
}

impl TrainingSet {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> TrainingSet {
        TrainingSet {
            rows,
            labels,
            threshold_rows: None,
        }
    }

    fn validate(&self) -> Result<usize> {
        if self.rows.is_empty() {
            return Err(Error::EmptyInput {
                what: "training set",
            });
        }
        if self.rows.len() != self.labels.len() {
            return Err(Error::InvalidArgument {
                message: format!(
                    "{} rows but {} labels",
                    self.rows.len(),
                    self.labels.len()
                ),
            });
        }
        let dim = self.rows[0].len();
        if dim == 0 {
            return Err(Error::EmptyInput {
                what: "feature dimension",
            });
        }
        for row in self.rows.iter().chain(self.threshold_rows.iter().flatten()) {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
        }
        if let Some(pool) = &self.threshold_rows {
            if pool.is_empty() {
                return Err(Error::EmptyInput {
                    what: "threshold pool",
                });
            }
        }
        Ok(dim)
    }
}

/// A trained forest plus everything needed to audit it later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forest {
    pub version: u32,
    pub params: ForestParams,
    pub reference_fingerprint: String,
    pub feature_dim: usize,
    pub training_negative: u64,
    pub training_positive: u64,
    pub trees: Vec<Node>,
}

const MODEL_VERSION: u32 = 1;

/// Train `params.n_trees` trees in parallel. Tree seeds depend only on
/// `(params.seed, tree index)`, so scheduling cannot change the result.
pub fn train_forest(
    train: &TrainingSet,
    params: &ForestParams,
    reference_fingerprint: &str,
) -> Result<Forest> {
    params.validate()?;
    let dim = train.validate()?;
    let pool: &[Vec<f64>] = train.threshold_rows.as_deref().unwrap_or(&train.rows);
    let trees: Vec<Node> = (0..params.n_trees)
        .into_par_iter()
        .map(|i| train_tree(train, pool, params, derive_seed(params.seed, i as u64)))
        .collect();
    let positive = train
        .labels
        .iter()
        .filter(|&&l| l == Label::Positive)
        .count() as u64;
    Ok(Forest {
        version: MODEL_VERSION,
        params: params.clone(),
        reference_fingerprint: reference_fingerprint.to_string(),
        feature_dim: dim,
        training_negative: train.labels.len() as u64 - positive,
        training_positive: positive,
        trees,
    })
}

fn train_tree(train: &TrainingSet, pool: &[Vec<f64>], params: &ForestParams, seed: u64) -> Node {
    let mut rng = rng_from_seed(seed);
    let indices: Vec<usize> = (0..train.rows.len()).collect();
    grow(train, pool, params, &indices, 0, &mut rng)
}

fn class_counts(train: &TrainingSet, indices: &[usize]) -> [u64; 2] {
    let mut counts = [0u64; 2];
    for &i in indices {
        match train.labels[i] {
            Label::Negative => counts[0] += 1,
            Label::Positive => counts[1] += 1,
        }
    }
    counts
}

fn grow(
    train: &TrainingSet,
    pool: &[Vec<f64>],
    params: &ForestParams,
    indices: &[usize],
    depth: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Node {
    let counts = class_counts(train, indices);
    let leaf = Node::Leaf {
        neg: counts[0],
        pos: counts[1],
    };
    // Pure nodes, single rows and depth-capped nodes stop before drawing
    // any candidates, keeping the RNG stream a pure function of the splits
    // actually considered.
    if depth >= params.max_depth || counts[0] == 0 || counts[1] == 0 || indices.len() < 2 {
        return leaf;
    }

    let dim = train.rows[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for _ in 0..params.features_per_branch {
        let feature = draw_index(rng, dim);
        let threshold = pool[draw_index(rng, pool.len())][feature];
        let mut left = [0u64; 2];
        for &i in indices {
            if train.rows[i][feature] <= threshold {
                match train.labels[i] {
                    Label::Negative => left[0] += 1,
                    Label::Positive => left[1] += 1,
                }
            }
        }
        let right = [counts[0] - left[0], counts[1] - left[1]];
        // A side with no rows is a non-split; never select it.
        if left[0] + left[1] == 0 || right[0] + right[1] == 0 {
            continue;
        }
        let gain = gain_from_counts(&counts, &left, &right);
        if best.map_or(true, |(g, _, _)| gain > g) {
            best = Some((gain, feature, threshold));
        }
    }

    let (gain, feature, threshold) = match best {
        Some(b) => b,
        None => return leaf,
    };
    if gain < params.min_gain_bits {
        return leaf;
    }

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| train.rows[i][feature] <= threshold);
    Node::Branch {
        feature,
        threshold,
        left: Box::new(grow(train, pool, params, &left_idx, depth + 1, rng)),
        right: Box::new(grow(train, pool, params, &right_idx, depth + 1, rng)),
    }
}

/// Mean leaf positive fraction across trees: a score in `[0, 1]`.
pub fn classify(forest: &Forest, values: &[f64]) -> Result<f64> {
    if values.len() != forest.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: forest.feature_dim,
            actual: values.len(),
        });
    }
    let sum: f64 = forest
        .trees
        .iter()
        .map(|t| t.leaf_fraction(values))
        .sum();
    Ok(sum / forest.trees.len() as f64)
}

/// Per-feature prevalence: the fraction of trees in which the feature
/// appears in at least one branch.
pub fn feature_importance(forest: &Forest) -> Vec<f64> {
    let mut counts = vec![0u64; forest.feature_dim];
    for tree in &forest.trees {
        let mut used = vec![false; forest.feature_dim];
        tree.collect_features(&mut used);
        for (c, u) in counts.iter_mut().zip(&used) {
            if *u {
                *c += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|c| c as f64 / forest.trees.len() as f64)
        .collect()
}

/// Deepest branch level across the forest's trees (diagnostics).
pub fn forest_depth(forest: &Forest) -> usize {
    forest.trees.iter().map(Node::max_depth).max().unwrap_or(0)
}

/// Write the forest as versioned JSON.
pub fn save_model(forest: &Forest, out: &Path) -> Result<()> {
    let file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
    serde_json::to_writer(std::io::BufWriter::new(file), forest)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Forest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let forest: Forest = serde_json::from_reader(std::io::BufReader::new(file))?;
    if forest.version != MODEL_VERSION {
        return Err(Error::InvalidConfig {
            message: format!("unsupported model version {}", forest.version),
        });
    }
    Ok(forest)
}
