use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{Criterion, HyperParams, N_CLASSES};
use crate::seed::Rng;

/// Impurity of a node given its class counts.
pub fn impurity(criterion: Criterion, counts: &[f64; N_CLASSES]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    match criterion {
        Criterion::Gini => 1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>(),
        Criterion::Entropy => counts
            .iter()
            .filter(|c| **c > 0.0)
            .map(|c| {
                let p = c / total;
                -p * p.log2()
            })
            .sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    #[serde(rename = "s")]
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        /// Impurity decrease weighted by the node's share of the tree's rows.
        gain: f64,
    },
    #[serde(rename = "l")]
    Leaf { dist: [f64; N_CLASSES] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_distribution(&self, x: &[f64]) -> &[f64; N_CLASSES] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { dist } => return dist,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Accumulate weighted impurity decrease per feature into `acc`.
    pub fn add_importances(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                acc[*feature as usize] += gain;
            }
        }
    }
}

/// Row-major training matrix with dense class indices.
pub struct TrainView<'a> {
    pub x: &'a [f64],
    pub y: &'a [u8],
    pub n_features: usize,
}

impl TrainView<'_> {
    fn value(&self, row: u32, feature: usize) -> f64 {
        self.x[row as usize * self.n_features + feature]
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Pending {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
    split: Candidate,
    priority: f64,
    seq: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Max-heap on priority; earlier nodes first on ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Builder<'a, 'r> {
    data: &'a TrainView<'a>,
    hp: &'a HyperParams,
    rng: &'r mut Rng,
    n_root: f64,
    features_per_node: usize,
    pairs: Vec<(f64, u8)>,
}

fn class_counts(y: &[u8], rows: &[u32]) -> [f64; N_CLASSES] {
    let mut c = [0.0; N_CLASSES];
    for r in rows {
        c[y[*r as usize] as usize] += 1.0;
    }
    c
}

impl Builder<'_, '_> {
    /// Best split of `rows` over a random feature subset, if any is allowed.
    fn best_split(&mut self, rows: &[u32], depth: usize, counts: &[f64; N_CLASSES]) -> Option<Candidate> {
        let n = rows.len();
        let parent = impurity(self.hp.criterion, counts);
        if n < self.hp.min_samples_split
            || n < 2 * self.hp.min_samples_leaf
            || parent <= 0.0
            || self.hp.max_depth.is_some_and(|d| depth >= d)
        {
            return None;
        }
        let n_features = self.data.n_features;
        let mut features: Vec<usize> = if self.features_per_node >= n_features {
            (0..n_features).collect()
        } else {
            sample(self.rng, n_features, self.features_per_node).into_vec()
        };
        // Ties resolve to the lowest feature index, then the lowest threshold.
        features.sort_unstable();

        let msl = self.hp.min_samples_leaf;
        let nf = n as f64;
        let mut best: Option<Candidate> = None;
        for f in features {
            self.pairs.clear();
            self.pairs.extend(rows.iter().map(|&r| (self.data.value(r, f), self.data.y[r as usize])));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if self.pairs[0].0 == self.pairs[n - 1].0 {
                continue;
            }
            let mut left = [0.0; N_CLASSES];
            for i in 0..n - 1 {
                left[self.pairs[i].1 as usize] += 1.0;
                let (lo, hi) = (self.pairs[i].0, self.pairs[i + 1].0);
                if lo == hi {
                    continue;
                }
                let nl = i + 1;
                if nl < msl || n - nl < msl {
                    continue;
                }
                let mut right = [0.0; N_CLASSES];
                for k in 0..N_CLASSES {
                    right[k] = counts[k] - left[k];
                }
                let wl = nl as f64 / nf;
                let decrease = parent
                    - wl * impurity(self.hp.criterion, &left)
                    - (1.0 - wl) * impurity(self.hp.criterion, &right);
                if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Candidate { feature: f, threshold, decrease });
                }
            }
        }
        best
    }

    fn leaf(counts: &[f64; N_CLASSES]) -> Node {
        let total: f64 = counts.iter().sum();
        let mut dist = [0.0; N_CLASSES];
        for k in 0..N_CLASSES {
            dist[k] = counts[k] / total;
        }
        Node::Leaf { dist }
    }
}

/// Grow one CART tree on `rows` (which may repeat, for bootstrap samples).
///
/// Nodes are expanded best-first by weighted impurity decrease, so a
/// `max_leaf_nodes` budget keeps the most useful splits.
pub fn grow_tree(data: &TrainView<'_>, rows: Vec<u32>, hp: &HyperParams, rng: &mut Rng) -> Tree {
    let features_per_node = hp.max_features.resolve(data.n_features);
    let mut b = Builder { data, hp, rng, n_root: rows.len() as f64, features_per_node, pairs: Vec::with_capacity(rows.len()) };
    let mut nodes: Vec<Node> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;

    let root_counts = class_counts(data.y, &rows);
    nodes.push(Builder::leaf(&root_counts));
    let push = |b: &mut Builder, heap: &mut BinaryHeap<Pending>, node: usize, rows: Vec<u32>, depth: usize, seq: &mut usize| {
        let counts = class_counts(b.data.y, &rows);
        if let Some(split) = b.best_split(&rows, depth, &counts) {
            let priority = rows.len() as f64 / b.n_root * split.decrease;
            heap.push(Pending { node, rows, depth, split, priority, seq: *seq });
            *seq += 1;
        }
    };
    push(&mut b, &mut heap, 0, rows, 0, &mut seq);

    let mut leaves = 1usize;
    while let Some(p) = heap.pop() {
        if hp.max_leaf_nodes.is_some_and(|m| leaves >= m) {
            break;
        }
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            p.rows.iter().partition(|&&r| data.value(r, p.split.feature) <= p.split.threshold);
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Builder::leaf(&class_counts(data.y, &left_rows)));
        nodes.push(Builder::leaf(&class_counts(data.y, &right_rows)));
        nodes[p.node] = Node::Split {
            feature: p.split.feature as u32,
            threshold: p.split.threshold,
            left: li as u32,
            right: ri as u32,
            gain: p.priority,
        };
        leaves += 1;
        push(&mut b, &mut heap, li, left_rows, p.depth + 1, &mut seq);
        push(&mut b, &mut heap, ri, right_rows, p.depth + 1, &mut seq);
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smm::MaxFeatures;

    #[test]
    fn gini_examples() {
        assert_eq!(impurity(Criterion::Gini, &[10.0, 10.0, 0.0]), 0.5);
        assert_eq!(impurity(Criterion::Gini, &[7.0, 0.0, 0.0]), 0.0);
        assert!((impurity(Criterion::Gini, &[1.0, 1.0, 1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((impurity(Criterion::Entropy, &[5.0, 5.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    fn full_hp() -> HyperParams {
        HyperParams { bootstrap: false, max_features: MaxFeatures::Fraction(1.0), n_estimators: 1, ..HyperParams::default() }
    }

    #[test]
    fn separable_one_dimensional_split() {
        let x = vec![-3.0, -2.0, -0.5, 0.25, 1.0, 4.0];
        let y = vec![0u8, 0, 0, 2, 2, 2];
        let view = TrainView { x: &x, y: &y, n_features: 1 };
        let tree = grow_tree(&view, (0..6).collect(), &full_hp(), &mut crate::seed::rng(1));
        assert_eq!(tree.depth(), 1);
        match &tree.nodes[0] {
            Node::Split { threshold, .. } => assert!(*threshold >= -0.5 && *threshold < 0.25),
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn pure_data_is_single_leaf() {
        let x = vec![1.0, 2.0, 3.0];
        let y = vec![1u8, 1, 1];
        let view = TrainView { x: &x, y: &y, n_features: 1 };
        let tree = grow_tree(&view, (0..3).collect(), &full_hp(), &mut crate::seed::rng(1));
        assert_eq!(tree.nodes, vec![Node::Leaf { dist: [0.0, 1.0, 0.0] }]);
    }

    #[test]
    fn leaf_budget_is_respected() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let y: Vec<u8> = (0..40).map(|i| (i % 3) as u8).collect();
        let view = TrainView { x: &x, y: &y, n_features: 1 };
        let hp = HyperParams { max_leaf_nodes: Some(5), ..full_hp() };
        let tree = grow_tree(&view, (0..40).collect(), &hp, &mut crate::seed::rng(1));
        assert_eq!(tree.leaf_count(), 5);
    }
}
