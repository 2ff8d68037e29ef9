//! Random-forest and k-NN classifiers on `d × m` feature matrices.
//!
//! Class labels are `1..=k`. Every random choice in forest training comes
//! from a ChaCha stream derived from the seed and the tree index, so a
//! forest is reproducible bit for bit regardless of thread count.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `round(√d)`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            mtry: None,
            seed: 0,
        }
    }
}

/// `round(√d)`, at least 1.
pub fn default_mtry(d: usize) -> usize {
    ((d as f64).sqrt().round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class counts of the training samples reaching the leaf (index `c − 1`
    /// for class `c`).
    Leaf { counts: Vec<u32> },
}

/// A binary decision tree; node 0 is the root. Samples with
/// `x[feature] ≤ threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// Index of the largest count, ties towards the smaller class; returns a
/// 1-based class id.
fn argmax_class<T: PartialOrd + Copy>(counts: &[T]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate().skip(1) {
        if v > counts[best] {
            best = c;
        }
    }
    best + 1
}

impl Tree {
    fn leaf_for(&self, x: impl Fn(usize) -> f64) -> &[u32] {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x(*feature) <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the leaf reached by `x`.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_class(self.leaf_for(|f| x[f]))
    }

    fn predict_column(&self, features: &DMatrix<f64>, col: usize) -> usize {
        argmax_class(self.leaf_for(|f| features[(f, col)]))
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &Tree, n: usize) -> usize {
            match &t.nodes[n] {
                Node::Split { left, right, .. } => 1 + rec(t, *left).max(rec(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        rec(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub mtry: usize,
    pub seed: u64,
    /// Number of classes (largest training label).
    pub k: usize,
    /// Feature dimension.
    pub dim: usize,
}

impl ForestModel {
    /// The forest made of the first `n` trees.
    pub fn truncated(&self, n: usize) -> ForestModel {
        let n = n.min(self.trees.len());
        ForestModel {
            trees: self.trees[..n].to_vec(),
            n_trees: n,
            ..self.clone()
        }
    }
}

/// Hard-vote predictions plus per-class vote fractions (`k × n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub votes: DMatrix<f64>,
}

fn class_count(labels: &[usize]) -> Result<usize> {
    if labels.contains(&0) {
        return Err(Error::invalid("class labels must be ≥ 1"));
    }
    Ok(labels.iter().copied().max().unwrap_or(0))
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Lowest weighted Gini `Σ_side (n − Σ c²/n)` over midpoints of `feature`.
fn best_threshold(
    features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    samples: &[usize],
    feature: usize,
    total: &[u32],
    scratch: &mut Vec<(f64, usize)>,
) -> Option<(f64, f64)> {
    scratch.clear();
    scratch.extend(samples.iter().map(|&i| (features[(feature, i)], labels[i])));
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
    if scratch[0].0 == scratch[scratch.len() - 1].0 {
        return None;
    }
    let n = scratch.len() as f64;
    let mut left = vec![0u32; k];
    let mut sq_left = 0.0f64;
    let mut sq_right: f64 = total.iter().map(|&c| (c as f64) * (c as f64)).sum();
    let mut best: Option<(f64, f64)> = None;
    for pos in 0..scratch.len() - 1 {
        let c = scratch[pos].1 - 1;
        let (l_old, r_old) = (left[c] as f64, (total[c] - left[c]) as f64);
        left[c] += 1;
        sq_left += 2.0 * l_old + 1.0;
        sq_right -= 2.0 * r_old - 1.0;
        let (a, b) = (scratch[pos].0, scratch[pos + 1].0);
        if a == b {
            continue;
        }
        let nl = (pos + 1) as f64;
        let nr = n - nl;
        let score = (nl - sq_left / nl) + (nr - sq_right / nr);
        if best.is_none_or(|(s, _)| score < s) {
            let mut thr = 0.5 * (a + b);
            if !(thr < b) {
                thr = a;
            }
            best = Some((score, thr));
        }
    }
    best
}

/// Grows one tree to purity on the (possibly repeated) `samples`.
///
/// At every node `mtry` distinct features are drawn from `rng`; if none of
/// them can split the node, the remaining features are tried in index
/// order. Nodes whose samples are identical in every feature become leaves.
pub fn grow_tree(
    features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    samples: &[usize],
    mtry: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let d = features.nrows();
    let mtry = mtry.clamp(1, d.max(1));
    let mut nodes: Vec<Node> = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>)> = Vec::new();
    nodes.push(Node::Leaf { counts: vec![] });
    stack.push((0, samples.to_vec()));
    let mut scratch = Vec::with_capacity(samples.len());
    while let Some((slot, node_samples)) = stack.pop() {
        let mut counts = vec![0u32; k];
        for &i in &node_samples {
            counts[labels[i] - 1] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || d == 0 {
            nodes[slot] = Node::Leaf { counts };
            continue;
        }
        let candidates = index::sample(rng, d, mtry).into_vec();
        let mut best: Option<Best> = None;
        let mut consider = |f: usize, best: &mut Option<Best>| {
            if let Some((score, threshold)) =
                best_threshold(features, labels, k, &node_samples, f, &counts, &mut scratch)
            {
                if best.as_ref().is_none_or(|b| score < b.score) {
                    *best = Some(Best {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        };
        for &f in &candidates {
            consider(f, &mut best);
        }
        if best.is_none() {
            for f in (0..d).filter(|f| !candidates.contains(f)) {
                consider(f, &mut best);
                if best.is_some() {
                    break;
                }
            }
        }
        let Some(best) = best else {
            nodes[slot] = Node::Leaf { counts };
            continue;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = node_samples
            .iter()
            .partition(|&&i| features[(best.feature, i)] <= best.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { counts: vec![] });
        nodes.push(Node::Leaf { counts: vec![] });
        nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        stack.push((r, right));
        stack.push((l, left));
    }
    Tree { nodes }
}

/// Random stream for tree `t` of a forest seeded with `seed`.
pub fn tree_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

/// Trains a random forest: bootstrap per tree, Gini splits over `mtry`
/// random features, grown to purity.
pub fn rf_train(
    features: &DMatrix<f64>,
    labels: &[usize],
    params: &ForestParams,
) -> Result<ForestModel> {
    let (d, m) = features.shape();
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: labels.len(),
        });
    }
    if m == 0 || d == 0 {
        return Err(Error::invalid(
            "random forest needs at least one sample and one feature",
        ));
    }
    if params.n_trees == 0 {
        return Err(Error::invalid("random forest needs n_trees ≥ 1"));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features contain non-finite values"));
    }
    let k = class_count(labels)?;
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(d));
    if mtry == 0 || mtry > d {
        return Err(Error::invalid(format!("mtry = {mtry} must lie in 1..={d}")));
    }
    let trees = par::map_range(params.n_trees, |t| {
        let mut rng = tree_rng(params.seed, t);
        let sample: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        grow_tree(features, labels, k, &sample, mtry, &mut rng)
    });
    Ok(ForestModel {
        trees,
        n_trees: params.n_trees,
        mtry,
        seed: params.seed,
        k,
        dim: d,
    })
}

const PREDICT_CHUNK: usize = 1024;

/// Majority vote over trees; ties go to the smaller class id.
pub fn rf_predict(model: &ForestModel, features: &DMatrix<f64>) -> Result<Prediction> {
    if features.nrows() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: features.nrows(),
        });
    }
    let n = features.ncols();
    let k = model.k;
    let ntrees = model.trees.len() as f64;
    let chunks = par::map_range(n.div_ceil(PREDICT_CHUNK), |c| {
        let start = c * PREDICT_CHUNK;
        let end = (start + PREDICT_CHUNK).min(n);
        (start..end)
            .map(|col| {
                let mut votes = vec![0u32; k];
                for tree in &model.trees {
                    votes[tree.predict_column(features, col) - 1] += 1;
                }
                votes
            })
            .collect::<Vec<_>>()
    });
    let mut labels = Vec::with_capacity(n);
    let mut fractions = DMatrix::zeros(k, n);
    for (col, votes) in chunks.into_iter().flatten().enumerate() {
        labels.push(argmax_class(&votes));
        for (c, &v) in votes.iter().enumerate() {
            fractions[(c, col)] = v as f64 / ntrees;
        }
    }
    Ok(Prediction {
        labels,
        votes: fractions,
    })
}

/// Euclidean k-NN majority vote (neighbour distance ties towards the smaller
/// training index, vote ties towards the smaller class id).
pub fn knn_predict(
    train: &DMatrix<f64>,
    labels: &[usize],
    test: &DMatrix<f64>,
    k_nn: usize,
) -> Result<Vec<usize>> {
    let m = train.ncols();
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: labels.len(),
        });
    }
    if train.nrows() != test.nrows() {
        return Err(Error::DimensionMismatch {
            expected: train.nrows(),
            got: test.nrows(),
        });
    }
    if k_nn == 0 || k_nn > m {
        return Err(Error::invalid(format!("k_nn = {k_nn} must lie in 1..={m}")));
    }
    let k = class_count(labels)?;
    Ok(par::map_range(test.ncols(), |i| {
        let mut dist: Vec<(f64, usize)> = (0..m)
            .map(|j| {
                let d2: f64 = train
                    .column(j)
                    .iter()
                    .zip(test.column(i).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d2, j)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k_nn < m {
            dist.select_nth_unstable_by(k_nn - 1, order);
        }
        let mut votes = vec![0u32; k];
        for &(_, j) in &dist[..k_nn] {
            votes[labels[j] - 1] += 1;
        }
        argmax_class(&votes)
    }))
}
