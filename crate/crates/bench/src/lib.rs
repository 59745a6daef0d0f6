//! Seeded fixtures shared by the benchmarks.

use mvp_core::features::{Block, FeatureKind, FeatureSpec};
use mvp_core::{FeatureGroup, FeatureSchema, FeatureValue, FusedVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Column-major features and a noisy piecewise target.
pub fn regression_columns(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let y = (0..n)
        .map(|i| {
            let s = if columns[0][i] > 0.0 { 1.0 } else { -1.0 };
            s + 0.5 * columns[1 % d][i] + rng.random_range(-0.3..0.3)
        })
        .collect();
    (columns, y)
}

pub fn numeric_schema(d: usize) -> FeatureSchema {
    FeatureSchema {
        features: (0..d)
            .map(|i| FeatureSpec {
                name: format!("x{i}"),
                block: Block::Meta,
                group: FeatureGroup::Metadata,
                kind: FeatureKind::Continuous,
            })
            .collect(),
    }
}

/// Row-major copy of `columns` as model input.
pub fn fused_rows(columns: &[Vec<f64>]) -> Vec<FusedVector> {
    (0..columns[0].len())
        .map(|i| FusedVector {
            values: columns.iter().map(|c| FeatureValue::Num(c[i])).collect(),
        })
        .collect()
}

/// `m` pooled vectors of width `d`.
pub fn pooled_vectors(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        let (c, y) = regression_columns(50, 3, 1);
        assert_eq!((c.len(), c[0].len(), y.len()), (3, 50, 50));
        assert_eq!(fused_rows(&c).len(), 50);
        assert_eq!(numeric_schema(3).len(), 3);
        assert_eq!(pooled_vectors(4, 7, 2)[3].len(), 7);
        assert_eq!(regression_columns(10, 2, 5), regression_columns(10, 2, 5));
    }
}
