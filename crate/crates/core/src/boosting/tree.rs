//! Exact greedy regression trees on second-order statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Where a missing value goes.
        default_left: bool,
        #[serde(default)]
        cover: Option<f64>,
    },
    Leaf {
        weight: f64,
        #[serde(default)]
        cover: Option<f64>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> Option<f64> {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }
}

/// Binary tree stored as a node array with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64, cover: f64) -> Self {
        Self { nodes: vec![TreeNode::Leaf { weight, cover: Some(cover) }] }
    }

    /// Index of the child a row follows at a split node.
    #[inline]
    pub fn next_node(node: &TreeNode, row: &[f64]) -> Option<usize> {
        match *node {
            TreeNode::Split { feature, threshold, left, right, default_left, .. } => {
                let v = row[feature];
                Some(if v.is_nan() {
                    if default_left {
                        left
                    } else {
                        right
                    }
                } else if v < threshold {
                    left
                } else {
                    right
                })
            }
            TreeNode::Leaf { .. } => None,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            let node = &self.nodes[idx];
            match Self::next_node(node, row) {
                Some(next) => idx = next,
                None => {
                    let TreeNode::Leaf { weight, .. } = node else { unreachable!() };
                    return *weight;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }

    pub fn has_covers(&self) -> bool {
        self.nodes.iter().all(|n| n.cover().is_some_and(|c| c > 0.0))
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Split { feature, .. } => Some(*feature),
            TreeNode::Leaf { .. } => None,
        })
    }
}

pub fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

/// Regularized Newton step `-soft_threshold(G, alpha) / (H + lambda)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let t = soft_threshold(g, alpha);
    if t == 0.0 {
        0.0
    } else {
        -t / (h + lambda)
    }
}

fn structure_score(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let t = soft_threshold(g, alpha);
    t * t / (2.0 * (h + lambda))
}

/// Loss reduction of a split minus the complexity penalty `gamma`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, alpha: f64, gamma: f64) -> f64 {
    structure_score(gl, hl, lambda, alpha) + structure_score(gr, hr, lambda, alpha)
        - structure_score(gl + gr, hl + hr, lambda, alpha)
        - gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

/// Column view of the training matrix with rows presorted per feature
/// (missing values excluded from the sorted lists).
pub struct ColumnData<'a> {
    pub rows: &'a [Vec<f64>],
    pub sorted: Vec<Vec<usize>>,
}

impl<'a> ColumnData<'a> {
    pub fn new(rows: &'a [Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let sorted = (0..p)
            .map(|j| {
                let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| !rows[i][j].is_nan()).collect();
                idx.sort_by(|&a, &b| rows[a][j].total_cmp(&rows[b][j]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { rows, sorted }
    }

    pub fn n_features(&self) -> usize {
        self.sorted.len()
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

struct NodeStats {
    g: f64,
    h: f64,
}

/// Best split of one feature over the node's rows (given in sorted order).
#[allow(clippy::too_many_arguments)]
fn best_split_for_feature(
    feature: usize,
    sorted: &[usize],
    n_members: usize,
    rows: &[Vec<f64>],
    grad: &[f64],
    hess: &[f64],
    total: &NodeStats,
    params: &TreeParams,
) -> Option<SplitCandidate> {
    let (mut g_present, mut h_present) = (0.0, 0.0);
    for &i in sorted {
        g_present += grad[i];
        h_present += hess[i];
    }
    let g_missing = total.g - g_present;
    let h_missing = total.h - h_present;
    let has_missing = sorted.len() < n_members;

    let mut best: Option<SplitCandidate> = None;
    let (mut gl, mut hl) = (0.0, 0.0);
    for k in 0..sorted.len().saturating_sub(1) {
        let i = sorted[k];
        gl += grad[i];
        hl += hess[i];
        let v = rows[i][feature];
        let next = rows[sorted[k + 1]][feature];
        if next <= v {
            continue;
        }
        let threshold = v + (next - v) / 2.0;
        let threshold = if threshold > v && threshold <= next { threshold } else { next };
        let directions: &[bool] = if has_missing { &[false, true] } else { &[true] };
        for &default_left in directions {
            let (gleft, hleft) = if default_left && has_missing { (gl + g_missing, hl + h_missing) } else { (gl, hl) };
            let (gright, hright) = (total.g - gleft, total.h - hleft);
            if hleft < params.min_child_weight || hright < params.min_child_weight {
                continue;
            }
            let gain = split_gain(gleft, hleft, gright, hright, params.lambda, params.alpha, params.gamma);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate { gain, feature, threshold, default_left });
            }
        }
    }
    best
}

struct Builder<'a> {
    data: &'a ColumnData<'a>,
    grad: &'a [f64],
    hess: &'a [f64],
    cover: &'a [f64],
    params: &'a TreeParams,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn build(&mut self, members: Vec<usize>, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let g: f64 = members.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = members.iter().map(|&i| self.hess[i]).sum();
        let cover: f64 = members.iter().map(|&i| self.cover[i]).sum();
        let id = self.nodes.len();
        let leaf = TreeNode::Leaf {
            weight: leaf_weight(g, h, self.params.lambda, self.params.alpha),
            cover: Some(cover),
        };
        self.nodes.push(leaf);
        if depth >= self.params.max_depth || members.len() < 2 {
            return id;
        }

        let stats = NodeStats { g, h };
        let (rows, grad, hess, params) = (self.data.rows, self.grad, self.hess, self.params);
        let best = sorted
            .par_iter()
            .enumerate()
            .filter_map(|(j, s)| best_split_for_feature(j, s, members.len(), rows, grad, hess, &stats, params))
            .reduce_with(|a, b| {
                if b.gain > a.gain || (b.gain == a.gain && b.feature < a.feature) {
                    b
                } else {
                    a
                }
            });
        let Some(split) = best else {
            return id;
        };

        let goes_left = |i: usize| {
            let v = rows[i][split.feature];
            if v.is_nan() {
                split.default_left
            } else {
                v < split.threshold
            }
        };
        let mut side = vec![0u8; rows.len()];
        let (mut left_members, mut right_members) = (Vec::new(), Vec::new());
        for &i in &members {
            if goes_left(i) {
                side[i] = 1;
                left_members.push(i);
            } else {
                side[i] = 2;
                right_members.push(i);
            }
        }
        let (mut left_sorted, mut right_sorted) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for s in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = s.into_iter().partition(|&i| side[i] == 1);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        let left = self.build(left_members, left_sorted, depth + 1);
        let right = self.build(right_members, right_sorted, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            default_left: split.default_left,
            cover: Some(cover),
        };
        id
    }
}

/// Grow one tree on the rows in `members` from per-row weighted gradients and
/// hessians. `cover` holds the per-row instance weights recorded as node cover.
pub fn grow_tree(
    data: &ColumnData<'_>,
    members: &[usize],
    grad: &[f64],
    hess: &[f64],
    cover: &[f64],
    params: &TreeParams,
) -> Tree {
    let mut in_node = vec![false; data.rows.len()];
    for &i in members {
        in_node[i] = true;
    }
    let sorted: Vec<Vec<usize>> = data
        .sorted
        .iter()
        .map(|s| s.iter().copied().filter(|&i| in_node[i]).collect())
        .collect();
    let mut builder = Builder { data, grad, hess, cover, params, nodes: Vec::new() };
    builder.build(members.to_vec(), sorted, 0);
    Tree { nodes: builder.nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> TreeParams {
        TreeParams { max_depth: depth, lambda: 1.0, alpha: 0.0, gamma: 0.0, min_child_weight: 0.0 }
    }

    #[test]
    fn leaf_weight_examples() {
        assert_eq!(leaf_weight(2.0, 3.0, 1.0, 0.0), -0.5);
        assert_eq!(leaf_weight(1.5, 3.0, 1.0, 2.0), 0.0);
        assert_eq!(leaf_weight(-2.0, 3.0, 1.0, 2.0), 0.0);
        assert_eq!(leaf_weight(-5.0, 1.0, 1.0, 2.0), 1.5);
    }

    #[test]
    fn split_gain_examples() {
        assert_eq!(split_gain(1.0, 2.0, 1.0, 2.0, 0.0, 0.0, 0.3), -0.3);
        assert_eq!(split_gain(0.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.3), -0.3);
        let (gl, hl, gr, hr, l) = (3.0f64, 2.0, -1.0, 4.0, 1.0);
        let expected = gl * gl / (2.0 * (hl + l)) + gr * gr / (2.0 * (hr + l)) - (gl + gr).powi(2) / (2.0 * (hl + hr + l));
        assert!((split_gain(gl, hl, gr, hr, l, 0.0, 0.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn equal_gradients_give_a_single_leaf() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let data = ColumnData::new(&rows);
        let g = vec![0.5; 10];
        let h = vec![1.0; 10];
        let members: Vec<usize> = (0..10).collect();
        let t = grow_tree(&data, &members, &g, &h, &h, &params(3));
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&rows[0]), -5.0 / 11.0);
    }

    #[test]
    fn toy_split_matches_enumeration() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let g = [1.0, 0.8, -1.2, 0.3];
        let h = [1.0, 0.5, 2.0, 1.0];
        let data = ColumnData::new(&rows);
        let t = grow_tree(&data, &[0, 1, 2, 3], &g, &h, &h, &params(1));
        // brute force over the three cut points
        let mut best = (f64::NEG_INFINITY, 0.0);
        for cut in 1..4 {
            let (gl, hl): (f64, f64) = (g[..cut].iter().sum(), h[..cut].iter().sum());
            let (gr, hr): (f64, f64) = (g[cut..].iter().sum(), h[cut..].iter().sum());
            let gain = split_gain(gl, hl, gr, hr, 1.0, 0.0, 0.0);
            if gain > best.0 {
                best = (gain, cut as f64 + 0.5);
            }
        }
        match &t.nodes[0] {
            TreeNode::Split { threshold, feature, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, best.1);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn separating_binary_feature_gives_depth_one_tree() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![((i * 7) % 13) as f64, (i % 2) as f64]).collect();
        let g: Vec<f64> = rows.iter().map(|r| if r[1] > 0.5 { 1.0 } else { -1.0 }).collect();
        let h = vec![1.0; 40];
        let data = ColumnData::new(&rows);
        let members: Vec<usize> = (0..40).collect();
        let t = grow_tree(&data, &members, &g, &h, &h, &params(3));
        assert_eq!(t.depth(), 1);
        assert!(matches!(t.nodes[0], TreeNode::Split { feature: 1, .. }));
        assert_eq!(t.predict(&[0.0, 1.0]), -20.0 / 21.0);
        assert_eq!(t.predict(&[0.0, 0.0]), 20.0 / 21.0);
    }

    #[test]
    fn missing_values_follow_learned_default() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![if i < 5 { f64::NAN } else { i as f64 }])
            .collect();
        // missing rows behave like the high-value rows
        let g: Vec<f64> = (0..20).map(|i| if !(5..12).contains(&i) { -1.0 } else { 1.0 }).collect();
        let h = vec![1.0; 20];
        let data = ColumnData::new(&rows);
        let members: Vec<usize> = (0..20).collect();
        let t = grow_tree(&data, &members, &g, &h, &h, &params(1));
        match &t.nodes[0] {
            TreeNode::Split { default_left, threshold, .. } => {
                assert!(!default_left);
                assert_eq!(*threshold, 11.5);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(t.predict(&[f64::NAN]), t.predict(&[15.0]));
    }

    #[test]
    fn min_child_weight_blocks_small_children() {
        let rows = vec![vec![1.0], vec![2.0], vec![3.0]];
        let g = [5.0, -1.0, -1.0];
        let h = [0.5, 0.5, 0.5];
        let data = ColumnData::new(&rows);
        let p = TreeParams { min_child_weight: 0.6, ..params(1) };
        let t = grow_tree(&data, &[0, 1, 2], &g, &h, &h, &p);
        assert_eq!(t.nodes.len(), 1);
    }
}
