//! Independent reference implementations used to check the library.
#![allow(dead_code, clippy::needless_range_loop)]

use mvp_core::gbdt::{Node, RegressionTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues in decreasing order and the matching unit eigenvectors as
/// columns (`vectors[i][k]` is entry `i` of vector `k`).
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = order.iter().map(|&k| a[k][k]).collect();
    let vectors = (0..n).map(|i| order.iter().map(|&k| v[i][k]).collect()).collect();
    (values, vectors)
}

/// Population covariance of row-major data.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / m)
                .collect()
        })
        .collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

fn sse(y: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - m) * (v - m)).sum()
}

/// Exhaustive greedy tree: at every node tries every feature and every
/// midpoint between distinct sorted values, scoring by SSE reduction.
/// Gains within a relative 1e-9 are ties and go to the lowest feature, then
/// the lowest threshold.
pub fn oracle_tree(
    columns: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
) -> OracleNode {
    let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    if depth >= max_depth || rows.len() < 2 * min_leaf.max(1) {
        return OracleNode::Leaf(mean);
    }
    let parent = sse(&ys);
    let mut best: Option<(f64, usize, f64)> = None;
    for (f, col) in columns.iter().enumerate() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = rows.iter().filter(|&&r| col[r] <= t).map(|&r| y[r]).collect();
            let right: Vec<f64> = rows.iter().filter(|&&r| col[r] > t).map(|&r| y[r]).collect();
            if left.len() < min_leaf.max(1) || right.len() < min_leaf.max(1) {
                continue;
            }
            let gain = parent - sse(&left) - sse(&right);
            if best.is_none_or(|(g, _, _)| gain > g + 1e-9 * g.abs()) {
                best = Some((gain, f, t));
            }
        }
    }
    match best {
        Some((gain, f, t)) if gain > 1e-12 => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| columns[f][r] <= t);
            OracleNode::Split {
                feature: f,
                threshold: t,
                left: Box::new(oracle_tree(columns, y, &l, depth + 1, max_depth, min_leaf)),
                right: Box::new(oracle_tree(columns, y, &r, depth + 1, max_depth, min_leaf)),
            }
        }
        _ => OracleNode::Leaf(mean),
    }
}

/// Checks that `tree` has the oracle's shape, features and values.
pub fn same_tree(tree: &RegressionTree, oracle: &OracleNode, tol: f64) -> Result<(), String> {
    fn walk(nodes: &[Node], id: usize, o: &OracleNode, tol: f64) -> Result<(), String> {
        match (&nodes[id], o) {
            (Node::Leaf { value }, OracleNode::Leaf(v)) => {
                if (value - v).abs() <= tol {
                    Ok(())
                } else {
                    Err(format!("leaf {id}: {value} vs oracle {v}"))
                }
            }
            (
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                },
                OracleNode::Split {
                    feature: of,
                    threshold: ot,
                    left: ol,
                    right: or,
                },
            ) => {
                if feature != of || (threshold - ot).abs() > tol {
                    return Err(format!(
                        "node {id}: split ({feature}, {threshold}) vs oracle ({of}, {ot})"
                    ));
                }
                walk(nodes, *left, ol, tol)?;
                walk(nodes, *right, or, tol)
            }
            (n, o) => Err(format!("node {id}: {n:?} vs oracle {o:?}")),
        }
    }
    walk(&tree.nodes, 0, oracle, tol)
}

/// Small dataset with duplicate feature values: `n` rows, 2 features.
pub fn random_tree_data(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns = (0..2)
        .map(|_| (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect())
        .collect();
    let y = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    (columns, y)
}

/// The 8-row, 2-feature fixture (column-major) and its labels.
pub fn eight_rows() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            vec![0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4],
        ],
        vec![1.0, 1.5, 2.5, 2.0, 4.0, 3.5, 6.0, 5.5],
    )
}

/// Central difference of `f` at `x`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
