// Index loops mirror the matrix formulas they check.
#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use mvp_core::features::{Block, FeatureGroup, FeatureKind, FeatureSpec};
use mvp_core::gbdt::encoder::column_seed;
use mvp_core::gbdt::{
    encode_categorical_fit_transform, fit_gbdt, fit_tree, huber_gradient, huber_loss, importance, split_gains,
    HuberParams, Node, TreeParams,
};
use mvp_core::visual::{pca_fit, pca_transform};
use mvp_core::{FeatureSchema, FeatureValue, FusedVector, GbdtConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn numeric_schema(n: usize) -> FeatureSchema {
    FeatureSchema {
        features: (0..n)
            .map(|i| FeatureSpec {
                name: format!("x{i}"),
                block: if i == 0 { Block::User } else { Block::Meta },
                group: if i == 0 {
                    FeatureGroup::User
                } else {
                    FeatureGroup::Metadata
                },
                kind: FeatureKind::Continuous,
            })
            .collect(),
    }
}

fn fused(columns: &[Vec<f64>]) -> Vec<FusedVector> {
    (0..columns[0].len())
        .map(|i| FusedVector {
            values: columns.iter().map(|c| FeatureValue::Num(c[i])).collect(),
        })
        .collect()
}

#[test]
fn huber_gradient_matches_finite_differences() {
    let p = HuberParams::new(1.0).unwrap();
    for r in [
        -3.0,
        -1.0 - 1e-3,
        -1.0 + 1e-3,
        -0.5,
        0.0,
        0.5,
        1.0 - 1e-3,
        1.0 + 1e-3,
        3.0,
    ] {
        let y = 2.0;
        let yhat = y - r;
        let fd = central_difference(|h| huber_loss(y, h, p).unwrap(), yhat, 1e-6);
        let g = huber_gradient(y, yhat, p).unwrap();
        assert!((g - fd).abs() < 1e-6, "r={r}: {g} vs {fd}");
    }
}

#[test]
fn tree_matches_oracle_on_eight_rows() {
    let (cols, y) = eight_rows();
    for depth in 0..=3 {
        let t = fit_tree(
            &cols,
            &y,
            TreeParams {
                max_depth: depth,
                min_samples_leaf: 1,
            },
        );
        let o = oracle_tree(&cols, &y, &(0..8).collect::<Vec<_>>(), 0, depth, 1);
        same_tree(&t, &o, 1e-12).unwrap();
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn tree_matches_exhaustive_oracle(seed in any::<u64>(), n in 1usize..=10, depth in 0usize..=2, min_leaf in 1usize..=2) {
        let (cols, y) = random_tree_data(seed, n);
        let t = fit_tree(&cols, &y, TreeParams { max_depth: depth, min_samples_leaf: min_leaf });
        let o = oracle_tree(&cols, &y, &(0..n).collect::<Vec<_>>(), 0, depth, min_leaf);
        prop_assert!(same_tree(&t, &o, 1e-12).is_ok(), "{:?}", same_tree(&t, &o, 1e-12));
    }

    #[test]
    fn encoder_matches_direct_definition(
        cats in proptest::collection::vec(0u8..3, 1..25),
        seed in any::<u64>(),
        a in 0.5f64..3.0,
    ) {
        let column: Vec<String> = cats.iter().map(|c| format!("c{c}")).collect();
        let labels: Vec<f64> = (0..column.len()).map(|i| (i as f64 * 1.7).sin() * 4.0).collect();
        let prior = 0.25;
        let (enc, _) = encode_categorical_fit_transform(&column, &labels, seed, a, prior).unwrap();
        let mut perm: Vec<usize> = (0..column.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for (pos, &i) in perm.iter().enumerate() {
            let earlier: Vec<usize> = perm[..pos].iter().copied().filter(|&j| column[j] == column[i]).collect();
            let sum: f64 = earlier.iter().map(|&j| labels[j]).sum();
            let expected = (sum + a * prior) / (earlier.len() as f64 + a);
            prop_assert!((enc[i] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn column_seed_depends_on_name_only() {
    assert_eq!(column_seed(9, "category"), column_seed(9, "category"));
    assert_ne!(column_seed(9, "category"), column_seed(9, "language"));
}

#[test]
fn pca_matches_jacobi_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (m, d) in [(6, 3), (50, 16)] {
        for _ in 0..20 {
            let x = random_matrix(&mut rng, m, d);
            let model = pca_fit(&x, d).unwrap();
            let (values, vectors) = jacobi_eigen(covariance(&x));
            for k in 0..d {
                assert!((model.eigenvalues[k] - values[k].max(0.0)).abs() < 1e-8);
                let w = model.component(k);
                let dot: f64 = (0..d).map(|i| w[i] * vectors[i][k]).sum();
                assert!((dot.abs() - 1.0).abs() < 1e-8, "component {k} of {m}x{d}");
            }
            for a in 0..d {
                for b in 0..d {
                    let dot: f64 = model
                        .component(a)
                        .iter()
                        .zip(model.component(b))
                        .map(|(u, v)| u * v)
                        .sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
            for row in &x {
                let z = pca_transform(&model, row).unwrap();
                for i in 0..d {
                    let back = model.mean[i] + (0..d).map(|k| model.components[i * d + k] * z[k]).sum::<f64>();
                    assert!((back - row[i]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn captured_variance_matches_discarded_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_matrix(&mut rng, 40, 8);
    let model = pca_fit(&x, 3).unwrap();
    let m = x.len() as f64;
    let mut err = 0.0;
    for row in &x {
        let z = pca_transform(&model, row).unwrap();
        for i in 0..8 {
            let back = model.mean[i] + (0..3).map(|k| model.components[i * 3 + k] * z[k]).sum::<f64>();
            err += (back - row[i]).powi(2) / m;
        }
    }
    let kept: f64 = model.eigenvalues.iter().sum();
    assert!((kept - (model.total_variance - err)).abs() < 1e-8);
}

#[test]
fn delta_large_gives_raw_residuals() {
    let (cols, y) = eight_rows();
    let cfg = GbdtConfig {
        n_trees: 1,
        learning_rate: 1.0,
        max_depth: 0,
        min_samples_leaf: 1,
        huber_delta: 1e9,
        ..Default::default()
    };
    let model = fit_gbdt(&fused(&cols), &y, &numeric_schema(2), &cfg).unwrap();
    let base = model.base_score;
    let mean_residual = y.iter().map(|v| v - base).sum::<f64>() / 8.0;
    match model.trees[0].nodes[0] {
        Node::Leaf { value } => assert!((value - mean_residual).abs() < 1e-15),
        _ => panic!("depth 0 tree must be a leaf"),
    }
}

#[test]
fn overfit_model_returns_leaf_mean() {
    let (cols, y) = eight_rows();
    let cfg = GbdtConfig {
        n_trees: 1,
        learning_rate: 1.0,
        max_depth: 10,
        min_samples_leaf: 1,
        huber_delta: 1e6,
        ..Default::default()
    };
    let rows = fused(&cols);
    let model = fit_gbdt(&rows, &y, &numeric_schema(2), &cfg).unwrap();
    for (r, target) in rows.iter().zip(&y) {
        assert!((model.predict(r).unwrap() - target).abs() < 1e-12);
    }
}

#[test]
fn importance_recomputed_from_trees() {
    let (cols, y) = eight_rows();
    let cfg = GbdtConfig {
        n_trees: 20,
        learning_rate: 0.3,
        max_depth: 2,
        min_samples_leaf: 1,
        ..Default::default()
    };
    let model = fit_gbdt(&fused(&cols), &y, &numeric_schema(2), &cfg).unwrap();
    let mut gains = [0.0; 2];
    for t in &model.trees {
        for n in &t.nodes {
            if let Node::Split { feature, gain, .. } = n {
                gains[*feature] += gain;
            }
        }
    }
    assert_eq!(split_gains(&model), gains.to_vec());
    let imp = importance(&model);
    let total = gains[0] + gains[1];
    assert!((imp.share("x0").unwrap() - gains[0] / total).abs() < 1e-12);
    assert!((imp.share("x1").unwrap() - gains[1] / total).abs() < 1e-12);
    let sum: f64 = imp.entries.iter().map(|e| e.share).sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn training_loss_non_increasing_on_fixture() {
    let (cols, y) = eight_rows();
    let cfg = GbdtConfig {
        n_trees: 200,
        learning_rate: 0.05,
        max_depth: 2,
        min_samples_leaf: 1,
        ..Default::default()
    };
    let model = fit_gbdt(&fused(&cols), &y, &numeric_schema(2), &cfg).unwrap();
    assert_eq!(model.train_loss.len(), 201);
    for w in model.train_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
    }
}
