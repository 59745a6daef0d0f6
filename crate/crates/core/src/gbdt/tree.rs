//! Exact greedy regression trees.
//!
//! Each node tries every midpoint between consecutive distinct values of
//! every feature and keeps the split with the largest SSE reduction,
//! `n_l n_r / n (mean_l - mean_r)^2`. Ties go to the lowest feature index,
//! then the lowest threshold. Rows with `x <= threshold` go left.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Splits whose gain does not exceed this are treated as zero gain.
pub const MIN_SPLIT_GAIN: f64 = 1e-12;
/// Relative gain difference below which two candidate splits count as equal.
pub const GAIN_TIE_RTOL: f64 = 1e-9;

/// Below this many (row, feature) cells per node the scan stays sequential.
const PARALLEL_CELLS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_by(|f| x[f])
    }

    pub(crate) fn predict_by(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Row indices of every feature sorted by value, ties by row index.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(columns: &[Vec<f64>]) -> Self {
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { order }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    targets: &'a [f64],
    params: TreeParams,
    order: Vec<Vec<u32>>,
    rows: Vec<u32>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

/// Fits one tree on column-major features.
pub fn fit_tree(columns: &[Vec<f64>], targets: &[f64], params: TreeParams) -> RegressionTree {
    fit_tree_presorted(columns, &Presorted::new(columns), targets, params)
}

pub fn fit_tree_presorted(
    columns: &[Vec<f64>],
    presorted: &Presorted,
    targets: &[f64],
    params: TreeParams,
) -> RegressionTree {
    let n = targets.len();
    debug_assert!(columns.iter().all(|c| c.len() == n));
    let mut b = Builder {
        columns,
        targets,
        params,
        order: presorted.order.clone(),
        rows: (0..n as u32).collect(),
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        nodes: Vec::new(),
    };
    if n > 0 {
        b.grow(0, n, 0);
    } else {
        b.nodes.push(Node::Leaf { value: 0.0 });
    }
    RegressionTree { nodes: b.nodes }
}

impl Builder<'_> {
    fn grow(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let n = end - start;
        let sum: f64 = self.rows[start..end].iter().map(|&r| self.targets[r as usize]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: sum / n as f64 });
        if depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let best = match self.best_split(start, end, sum) {
            Some(c) if c.gain > MIN_SPLIT_GAIN => c,
            _ => return id,
        };

        let col = &self.columns[best.feature];
        for &r in &self.rows[start..end] {
            self.goes_left[r as usize] = col[r as usize] <= best.threshold;
        }
        let n_left = stable_partition(&mut self.rows[start..end], &self.goes_left, &mut self.scratch);
        let splittable = |m: usize| m >= 2 * self.params.min_samples_leaf.max(1);
        if depth + 1 < self.params.max_depth && (splittable(n_left) || splittable(n - n_left)) {
            for f in 0..self.order.len() {
                stable_partition(&mut self.order[f][start..end], &self.goes_left, &mut self.scratch);
            }
        }
        let mid = start + n_left;
        let left = self.grow(start, mid, depth + 1);
        let right = self.grow(mid, end, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            gain: best.gain,
            left,
            right,
        };
        id
    }

    fn best_split(&self, start: usize, end: usize, total: f64) -> Option<Candidate> {
        let scan = |f: usize| {
            scan_feature(
                &self.columns[f],
                &self.order[f][start..end],
                self.targets,
                total,
                self.params.min_samples_leaf.max(1),
            )
            .map(|(gain, threshold)| Candidate {
                gain,
                feature: f,
                threshold,
            })
        };
        let per_feature: Vec<Option<Candidate>> = if (end - start) * self.order.len() >= PARALLEL_CELLS {
            (0..self.order.len()).into_par_iter().map(scan).collect()
        } else {
            (0..self.order.len()).map(scan).collect()
        };
        // Fixed reduction order keeps parallel and sequential builds identical.
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if best.is_none_or(|b| beats(c.gain, b.gain)) {
                best = Some(c);
            }
        }
        best
    }
}

/// Best `(gain, threshold)` along one presorted feature segment.
fn scan_feature(col: &[f64], order: &[u32], targets: &[f64], total: f64, min_leaf: usize) -> Option<(f64, f64)> {
    let n = order.len();
    let nf = n as f64;
    let mut left_sum = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for pos in 0..n - 1 {
        let r = order[pos] as usize;
        left_sum += targets[r];
        let n_left = pos + 1;
        if n_left < min_leaf {
            continue;
        }
        let n_right = n - n_left;
        if n_right < min_leaf {
            break;
        }
        let v = col[r];
        let next = col[order[pos + 1] as usize];
        if v >= next {
            continue;
        }
        let (nl, nr) = (n_left as f64, n_right as f64);
        let diff = left_sum / nl - (total - left_sum) / nr;
        let gain = nl * nr / nf * diff * diff;
        if best.is_none_or(|(g, _)| beats(gain, g)) {
            best = Some((gain, midpoint(v, next)));
        }
    }
    best
}

/// `gain` improves on `incumbent` by more than rounding noise. Gains within a
/// relative [`GAIN_TIE_RTOL`] are ties and keep the earlier candidate (lower
/// feature, then lower threshold), whatever order the sums were taken in.
pub(crate) fn beats(gain: f64, incumbent: f64) -> bool {
    gain > incumbent + GAIN_TIE_RTOL * incumbent.abs()
}

/// Midpoint that still separates `lo` from `hi` under `x <= t`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

/// Moves rows flagged left to the front, keeping relative order on both sides.
fn stable_partition(seg: &mut [u32], goes_left: &[bool], scratch: &mut Vec<u32>) -> usize {
    scratch.clear();
    let mut w = 0;
    for i in 0..seg.len() {
        let r = seg[i];
        if goes_left[r as usize] {
            seg[w] = r;
            w += 1;
        } else {
            scratch.push(r);
        }
    }
    seg[w..].copy_from_slice(scratch);
    w
}
