//! Gradient-boosted regression trees under Huber loss.
//!
//! The model starts from the median label and adds `learning_rate` times a
//! regression tree fitted to the clipped residuals (the negative Huber
//! gradient) at every round. Leaves hold plain means of those residuals.
//! Categorical columns are turned into numbers with ordered target
//! statistics (see [`encoder`]) before any tree is grown.

pub mod encoder;
pub mod loss;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Block, FeatureGroup, FeatureKind, FeatureSchema, FeatureValue, FusedVector};
use crate::preprocess::median;

pub use encoder::{encode_categorical_fit_transform, CategoricalEncoder};
pub use loss::{huber_gradient, huber_loss, mean_huber_loss, pseudo_residuals, HuberParams};
pub use tree::{fit_tree, Node, Presorted, RegressionTree, TreeParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Huber transition point, in label units.
    pub huber_delta: f64,
    /// Pseudo-count `a` of the categorical prior.
    pub prior_weight: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_trees: 500,
            learning_rate: 0.05,
            max_depth: 6,
            min_samples_leaf: 8,
            huber_delta: 1.0,
            prior_weight: 1.0,
            seed: 42,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        HuberParams::new(self.huber_delta)?;
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.prior_weight > 0.0) {
            return Err(Error::InvalidArgument("prior_weight must be positive".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub config: GbdtConfig,
    pub base_score: f64,
    pub learning_rate: f64,
    pub huber: HuberParams,
    pub trees: Vec<RegressionTree>,
    pub encoder: CategoricalEncoder,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    /// Mean training Huber loss before the first round and after each round.
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

/// Column-major numeric matrix in schema order plus the fitted encoder.
fn encode_training(
    rows: &[FusedVector],
    labels: &[f64],
    schema: &FeatureSchema,
    config: &GbdtConfig,
) -> Result<(Vec<Vec<f64>>, CategoricalEncoder)> {
    let prior = labels.iter().sum::<f64>() / labels.len() as f64;
    let mut encoder = CategoricalEncoder::new(prior, config.prior_weight);
    let mut columns = Vec::with_capacity(schema.len());
    for (j, spec) in schema.features.iter().enumerate() {
        match spec.kind {
            FeatureKind::Continuous => {
                let mut col = Vec::with_capacity(rows.len());
                for (i, row) in rows.iter().enumerate() {
                    match row.values[j] {
                        FeatureValue::Num(v) if v.is_finite() => col.push(v),
                        FeatureValue::Num(v) => {
                            return Err(Error::Data(format!(
                                "row {i}: feature `{}` is {v}; impute before training",
                                spec.name
                            )))
                        }
                        FeatureValue::Cat(_) => return Err(kind_mismatch(i, &spec.name)),
                    }
                }
                columns.push(col);
            }
            FeatureKind::Categorical => {
                let cats = rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| match &row.values[j] {
                        FeatureValue::Cat(s) => Ok(s.clone()),
                        FeatureValue::Num(_) => Err(kind_mismatch(i, &spec.name)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                columns.push(encoder.fit_column(&spec.name, &cats, labels, config.seed)?);
            }
        }
    }
    Ok((columns, encoder))
}

fn kind_mismatch(row: usize, name: &str) -> Error {
    Error::SchemaMismatch(format!("row {row}: wrong value kind for feature `{name}`"))
}

fn check_rows(rows: &[FusedVector], schema: &FeatureSchema) -> Result<()> {
    match rows.iter().position(|r| r.values.len() != schema.len()) {
        Some(i) => Err(Error::SchemaMismatch(format!(
            "row {i} has {} features, schema has {}",
            rows[i].values.len(),
            schema.len()
        ))),
        None => Ok(()),
    }
}

/// Fits a boosted ensemble of `config.n_trees` trees.
pub fn fit_gbdt(
    rows: &[FusedVector],
    labels: &[f64],
    schema: &FeatureSchema,
    config: &GbdtConfig,
) -> Result<GbdtModel> {
    config.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "boosting needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    if labels.iter().any(|y| !y.is_finite()) {
        return Err(Error::Data("non-finite training label".into()));
    }
    check_rows(rows, schema)?;
    let huber = HuberParams::new(config.huber_delta)?;
    let (columns, encoder) = encode_training(rows, labels, schema, config)?;
    let presorted = Presorted::new(&columns);

    let base_score = median(labels).expect("non-empty labels");
    let mut predictions = vec![base_score; labels.len()];
    let mut train_loss = Vec::with_capacity(config.n_trees + 1);
    train_loss.push(mean_huber_loss(labels, &predictions, huber));
    let mut trees = Vec::with_capacity(config.n_trees);
    for _ in 0..config.n_trees {
        let targets = pseudo_residuals(labels, &predictions, huber);
        let tree = tree::fit_tree_presorted(&columns, &presorted, &targets, config.tree_params());
        for (i, p) in predictions.iter_mut().enumerate() {
            *p += config.learning_rate * tree.predict_by(|f| columns[f][i]);
        }
        train_loss.push(mean_huber_loss(labels, &predictions, huber));
        trees.push(tree);
    }
    Ok(GbdtModel {
        config: config.clone(),
        base_score,
        learning_rate: config.learning_rate,
        huber,
        trees,
        encoder,
        schema: schema.clone(),
        schema_hash: schema.hash(),
        train_loss,
    })
}

impl GbdtModel {
    /// Numeric feature vector as seen by the trees.
    pub fn encode(&self, x: &FusedVector) -> Result<Vec<f64>> {
        if x.values.len() != self.schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "model expects {} features, got {}",
                self.schema.len(),
                x.values.len()
            )));
        }
        self.schema
            .features
            .iter()
            .zip(&x.values)
            .map(|(spec, v)| match (spec.kind, v) {
                (FeatureKind::Continuous, FeatureValue::Num(v)) => Ok(*v),
                (FeatureKind::Categorical, FeatureValue::Cat(c)) => self.encoder.transform(&spec.name, c),
                _ => Err(kind_mismatch(0, &spec.name)),
            })
            .collect()
    }

    /// `base_score + learning_rate * sum of tree outputs`.
    pub fn predict(&self, x: &FusedVector) -> Result<f64> {
        let encoded = self.encode(x)?;
        Ok(self.predict_encoded(&encoded))
    }

    pub fn predict_encoded(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict(model: &GbdtModel, x: &FusedVector) -> Result<f64> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub block: Block,
    pub group: FeatureGroup,
    pub share: f64,
}

/// Normalized split-gain share per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub entries: Vec<ImportanceEntry>,
    /// No tree in the model has a split; every share is zero.
    pub no_splits: bool,
}

impl FeatureImportance {
    /// Shares summed over features of each block.
    pub fn by_block(&self) -> Vec<(Block, f64)> {
        Block::ALL
            .iter()
            .map(|&b| {
                (
                    b,
                    self.entries
                        .iter()
                        .filter(|e| e.block == b)
                        .fold(0.0, |acc, e| acc + e.share),
                )
            })
            .collect()
    }

    pub fn by_group(&self) -> Vec<(FeatureGroup, f64)> {
        FeatureGroup::ALL
            .iter()
            .map(|&g| {
                (
                    g,
                    self.entries
                        .iter()
                        .filter(|e| e.group == g)
                        .fold(0.0, |acc, e| acc + e.share),
                )
            })
            .collect()
    }

    pub fn share(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.share)
    }

    /// Entries sorted by decreasing share (stable for ties).
    pub fn ranked(&self) -> Vec<&ImportanceEntry> {
        let mut v: Vec<&ImportanceEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| b.share.total_cmp(&a.share));
        v
    }

    /// Mean of several importances, matched by feature name. A feature absent
    /// from some items (their schemas differ) counts as zero share there.
    pub fn average(items: &[FeatureImportance]) -> Option<FeatureImportance> {
        items.first()?;
        let with_splits: Vec<&FeatureImportance> = items.iter().filter(|i| !i.no_splits).collect();
        let mut entries: Vec<ImportanceEntry> = Vec::new();
        let mut index: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
        for item in items {
            for e in &item.entries {
                if !index.contains_key(e.feature.as_str()) {
                    index.insert(e.feature.as_str(), entries.len());
                    entries.push(ImportanceEntry {
                        share: 0.0,
                        ..e.clone()
                    });
                }
            }
        }
        if !with_splits.is_empty() {
            let m = with_splits.len() as f64;
            for item in &with_splits {
                for e in &item.entries {
                    entries[index[e.feature.as_str()]].share += e.share / m;
                }
            }
        }
        Some(FeatureImportance {
            entries,
            no_splits: with_splits.is_empty(),
        })
    }
}

/// Raw summed split gain per feature index.
pub fn split_gains(model: &GbdtModel) -> Vec<f64> {
    let mut gains = vec![0.0; model.schema.len()];
    for tree in &model.trees {
        for node in &tree.nodes {
            if let Node::Split { feature, gain, .. } = node {
                gains[*feature] += gain;
            }
        }
    }
    gains
}

pub fn importance(model: &GbdtModel) -> FeatureImportance {
    let gains = split_gains(model);
    let total: f64 = gains.iter().sum();
    let no_splits = total <= 0.0;
    let entries = model
        .schema
        .features
        .iter()
        .zip(&gains)
        .map(|(spec, g)| ImportanceEntry {
            feature: spec.name.clone(),
            block: spec.block,
            group: spec.group,
            share: if no_splits { 0.0 } else { g / total },
        })
        .collect();
    FeatureImportance { entries, no_splits }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::features::FeatureSpec;

    /// Schema of `n` continuous metadata columns named `f0..`.
    pub(crate) fn numeric_schema(n: usize) -> FeatureSchema {
        FeatureSchema {
            features: (0..n)
                .map(|i| FeatureSpec {
                    name: format!("f{i}"),
                    block: Block::Meta,
                    group: FeatureGroup::Metadata,
                    kind: FeatureKind::Continuous,
                })
                .collect(),
        }
    }

    pub(crate) fn rows(x: &[Vec<f64>]) -> Vec<FusedVector> {
        x.iter()
            .map(|r| FusedVector {
                values: r.iter().map(|&v| FeatureValue::Num(v)).collect(),
            })
            .collect()
    }

    fn cfg(n_trees: usize, lr: f64, depth: usize, leaf: usize, delta: f64) -> GbdtConfig {
        GbdtConfig {
            n_trees,
            learning_rate: lr,
            max_depth: depth,
            min_samples_leaf: leaf,
            huber_delta: delta,
            ..Default::default()
        }
    }

    #[test]
    fn zero_trees_predicts_median() {
        let x = rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let m = fit_gbdt(
            &x,
            &[5.0, 1.0, 3.0, 9.0, 2.0],
            &numeric_schema(1),
            &cfg(0, 0.1, 3, 1, 1.0),
        )
        .unwrap();
        assert_eq!(m.base_score, 3.0);
        assert_eq!(m.predict(&x[0]).unwrap(), 3.0);
    }

    #[test]
    fn one_stump_step_trace() {
        let x = rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let m = fit_gbdt(&x, &[1.0, 2.0, 3.0], &numeric_schema(1), &cfg(1, 1.0, 0, 1, 1e6)).unwrap();
        for r in &x {
            assert_eq!(m.predict(r).unwrap(), 2.0);
        }
    }

    #[test]
    fn loss_decreases_on_tiny_set() {
        let x = rows(&(0..8).map(|i| vec![i as f64, (i * 3 % 5) as f64]).collect::<Vec<_>>());
        let y = [1.0, 2.5, 2.0, 4.0, 3.5, 6.0, 5.0, 9.0];
        let m = fit_gbdt(&x, &y, &numeric_schema(2), &cfg(50, 0.1, 2, 1, 1.0)).unwrap();
        assert!(m.train_loss.last().unwrap() < &m.train_loss[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let x = rows(&[vec![0.0]]);
        assert!(fit_gbdt(&x, &[1.0], &numeric_schema(1), &GbdtConfig::default()).is_err());
        let x = rows(&[vec![0.0], vec![1.0]]);
        assert!(fit_gbdt(&x, &[1.0, 2.0], &numeric_schema(2), &GbdtConfig::default()).is_err());
        let m = fit_gbdt(&x, &[1.0, 2.0], &numeric_schema(1), &cfg(1, 0.1, 1, 1, 1.0)).unwrap();
        assert!(matches!(
            m.predict(&rows(&[vec![1.0, 2.0]])[0]),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip_predicts_identically() {
        let x = rows(
            &(0..20)
                .map(|i| vec![(i as f64 * 0.37).sin(), i as f64])
                .collect::<Vec<_>>(),
        );
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 0.1).cos() * 3.0 + 1.0 / 3.0).collect();
        let m = fit_gbdt(&x, &y, &numeric_schema(2), &cfg(30, 0.1, 3, 2, 1.0)).unwrap();
        let back = GbdtModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for r in &x {
            assert_eq!(m.predict(r).unwrap().to_bits(), back.predict(r).unwrap().to_bits());
        }
    }

    #[test]
    fn importance_single_split_and_unused() {
        let x = rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![8.0, 0.0], vec![9.0, 0.0]]);
        let m = fit_gbdt(&x, &[0.0, 0.0, 1.0, 1.0], &numeric_schema(2), &cfg(1, 1.0, 1, 1, 10.0)).unwrap();
        let imp = importance(&m);
        assert_eq!(imp.share("f0"), Some(1.0));
        assert_eq!(imp.share("f1"), Some(0.0));
        assert!(!imp.no_splits);
    }

    #[test]
    fn importance_without_splits() {
        let x = rows(&[vec![1.0], vec![2.0]]);
        let m = fit_gbdt(&x, &[3.0, 3.0], &numeric_schema(1), &cfg(3, 0.1, 2, 1, 1.0)).unwrap();
        let imp = importance(&m);
        assert!(imp.no_splits);
        assert!(imp.entries.iter().all(|e| e.share == 0.0));
    }

    #[test]
    fn average_aligns_by_name() {
        let a = rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![8.0, 0.0], vec![9.0, 0.0]]);
        let wide = fit_gbdt(&a, &[0.0, 0.0, 1.0, 1.0], &numeric_schema(2), &cfg(1, 1.0, 1, 1, 10.0)).unwrap();
        let mut narrow_schema = numeric_schema(1);
        narrow_schema.features[0].name = "g0".into();
        let b = rows(&[vec![1.0], vec![2.0], vec![8.0], vec![9.0]]);
        let narrow = fit_gbdt(&b, &[0.0, 0.0, 1.0, 1.0], &narrow_schema, &cfg(1, 1.0, 1, 1, 10.0)).unwrap();
        let avg = FeatureImportance::average(&[importance(&wide), importance(&narrow)]).unwrap();
        assert_eq!(avg.share("f0"), Some(0.5));
        assert_eq!(avg.share("f1"), Some(0.0));
        assert_eq!(avg.share("g0"), Some(0.5));
        let total: f64 = avg.entries.iter().map(|e| e.share).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn categorical_columns_are_encoded() {
        use crate::features::FeatureSpec;
        let schema = FeatureSchema {
            features: vec![FeatureSpec {
                name: "cat".into(),
                block: Block::Meta,
                group: FeatureGroup::Metadata,
                kind: FeatureKind::Categorical,
            }],
        };
        let cats = ["a", "a", "a", "b", "b", "b", "a", "b"];
        let y = [1.0, 1.1, 0.9, 5.0, 5.2, 4.8, 1.0, 5.0];
        let x: Vec<FusedVector> = cats
            .iter()
            .map(|c| FusedVector {
                values: vec![FeatureValue::Cat(c.to_string())],
            })
            .collect();
        let m = fit_gbdt(&x, &y, &schema, &cfg(100, 0.1, 2, 1, 1.0)).unwrap();
        let pa = m.predict(&x[0]).unwrap();
        let pb = m.predict(&x[3]).unwrap();
        assert!(pb - pa > 2.0, "{pa} {pb}");
        let unseen = FusedVector {
            values: vec![FeatureValue::Cat("zzz".into())],
        };
        assert!(m.predict(&unseen).is_ok());
        let wrong_kind = FusedVector {
            values: vec![FeatureValue::Num(1.0)],
        };
        assert!(m.predict(&wrong_kind).is_err());
    }
}
