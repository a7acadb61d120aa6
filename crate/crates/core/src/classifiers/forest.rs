//! Bagged CART trees on Gini impurity.
//!
//! Each tree draws its bootstrap sample and per-node feature subsets from its
//! own ChaCha stream (`stream = tree index`), so trees can be grown in any
//! order or in parallel and still come out identical.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features considered per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn features_per_split(&self, d: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf { normal: u32, abnormal: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> (u32, u32) {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right } as usize,
                Node::Leaf { normal, abnormal } => return (normal, abnormal),
            }
        }
    }

    /// Majority vote of the reached leaf; a tied leaf votes normal.
    pub fn votes_abnormal(&self, x: &[f64]) -> bool {
        let (normal, abnormal) = self.leaf(x);
        abnormal > normal
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, left as usize).max(go(nodes, right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

/// Best split found for one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Size-weighted Gini impurity of the two children, divided by node size.
    pub impurity: f64,
}

/// `Σ count² / n` over both classes; larger means purer.
fn purity(normal: usize, abnormal: usize) -> f64 {
    let n = normal + abnormal;
    if n == 0 {
        0.0
    } else {
        ((normal * normal + abnormal * abnormal) as f64) / n as f64
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Searches `features` (ascending) for the split that minimises weighted Gini
/// impurity. Ties keep the lowest feature, then the lowest threshold.
pub fn best_split(
    rows: &[f64],
    d: usize,
    y: &[bool],
    samples: &[usize],
    features: &[usize],
    buf: &mut Vec<(f64, bool)>,
) -> Option<SplitChoice> {
    let n = samples.len();
    let total_abnormal = samples.iter().filter(|&&i| y[i]).count();
    let total_normal = n - total_abnormal;
    let mut best: Option<(f64, usize, f64)> = None;
    for &f in features {
        buf.clear();
        buf.extend(samples.iter().map(|&i| (rows[i * d + f], y[i])));
        buf.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (mut ln, mut la) = (0usize, 0usize);
        for j in 0..n - 1 {
            if buf[j].1 {
                la += 1;
            } else {
                ln += 1;
            }
            if buf[j].0 == buf[j + 1].0 {
                continue;
            }
            let q = purity(ln, la) + purity(total_normal - ln, total_abnormal - la);
            if best.is_none_or(|(bq, _, _)| q > bq) {
                best = Some((q, f, midpoint(buf[j].0, buf[j + 1].0)));
            }
        }
    }
    best.map(|(q, feature, threshold)| SplitChoice {
        feature,
        threshold,
        impurity: 1.0 - q / n as f64,
    })
}

struct Builder<'a> {
    rows: &'a [f64],
    d: usize,
    y: &'a [bool],
    params: &'a ForestParams,
    m: usize,
}

impl Builder<'_> {
    fn grow(&self, mut samples: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes = vec![Node::Leaf { normal: 0, abnormal: 0 }];
        // (node slot, start, end, depth) into `samples`
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        let mut buf = Vec::new();
        let mut feats: Vec<usize> = Vec::with_capacity(self.m);
        while let Some((slot, start, end, depth)) = stack.pop() {
            let node_samples = &mut samples[start..end];
            let abnormal = node_samples.iter().filter(|&&i| self.y[i]).count();
            let normal = node_samples.len() - abnormal;
            let leaf = Node::Leaf {
                normal: normal as u32,
                abnormal: abnormal as u32,
            };
            let stop = normal == 0
                || abnormal == 0
                || node_samples.len() < self.params.min_samples_split
                || self.params.max_depth.is_some_and(|md| depth >= md);
            if stop {
                nodes[slot] = leaf;
                continue;
            }
            feats.clear();
            feats.extend(index::sample(rng, self.d, self.m));
            feats.sort_unstable();
            let Some(split) = best_split(self.rows, self.d, self.y, node_samples, &feats, &mut buf) else {
                nodes[slot] = leaf;
                continue;
            };
            // Partition in place, keeping relative order on each side.
            let (mut left, mut right): (Vec<usize>, Vec<usize>) = node_samples
                .iter()
                .partition(|&&i| self.rows[i * self.d + split.feature] <= split.threshold);
            let mid = start + left.len();
            left.append(&mut right);
            node_samples.copy_from_slice(&left);

            let l = nodes.len();
            nodes.push(Node::Leaf { normal: 0, abnormal: 0 });
            nodes.push(Node::Leaf { normal: 0, abnormal: 0 });
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l as u32,
                right: (l + 1) as u32,
            };
            stack.push((l + 1, mid, end, depth + 1));
            stack.push((l, start, mid, depth + 1));
        }
        Tree { nodes }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(rows: &[f64], d: usize, y: &[bool], params: ForestParams, seed: u64) -> Self {
        let n = y.len();
        let builder = Builder {
            rows,
            d,
            y,
            params: &params,
            m: params.features_per_split(d),
        };
        let trees = par::map_indices(params.n_trees, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let samples = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.grow(samples, &mut rng)
        });
        Self { params, trees }
    }

    /// Fraction of trees voting abnormal.
    pub fn score(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let votes = self.trees.iter().filter(|t| t.votes_abnormal(x)).count();
        votes as f64 / self.trees.len() as f64
    }
}
