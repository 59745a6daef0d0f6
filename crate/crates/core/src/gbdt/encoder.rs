//! Ordered target statistics for categorical columns.
//!
//! Training rows are visited in a seeded random order; each row is encoded
//! with the label statistics of the same-category rows visited before it,
//! `(sum + a * P) / (count + a)`. Unseen data uses statistics over all
//! training rows. Unseen categories map to the prior `P`.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::fnv1a64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEncoding {
    pub seed: u64,
    /// Category -> (label sum, count) over all training rows.
    pub stats: BTreeMap<String, (f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    /// Global mean training label.
    pub prior: f64,
    pub prior_weight: f64,
    pub columns: IndexMap<String, ColumnEncoding>,
}

/// Per-column permutation seed, derived from the column name so removing
/// other columns leaves it unchanged.
pub fn column_seed(seed: u64, column: &str) -> u64 {
    seed ^ fnv1a64(column.as_bytes())
}

pub fn encode_categorical_fit_transform(
    column: &[String],
    labels: &[f64],
    seed: u64,
    prior_weight: f64,
    prior: f64,
) -> Result<(Vec<f64>, ColumnEncoding)> {
    if column.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "categorical column has {} rows but {} labels",
            column.len(),
            labels.len()
        )));
    }
    if !(prior_weight > 0.0) {
        return Err(Error::InvalidArgument("prior weight must be positive".into()));
    }
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut running: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    let mut encoded = vec![0.0; column.len()];
    for &i in &order {
        let e = running.entry(column[i].as_str()).or_insert((0.0, 0));
        encoded[i] = (e.0 + prior_weight * prior) / (e.1 as f64 + prior_weight);
        e.0 += labels[i];
        e.1 += 1;
    }
    let stats = running.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    Ok((encoded, ColumnEncoding { seed, stats }))
}

impl CategoricalEncoder {
    pub fn new(prior: f64, prior_weight: f64) -> Self {
        CategoricalEncoder {
            prior,
            prior_weight,
            columns: IndexMap::new(),
        }
    }

    /// Fits one column and returns its ordered encodings.
    pub fn fit_column(&mut self, name: &str, column: &[String], labels: &[f64], seed: u64) -> Result<Vec<f64>> {
        let (encoded, enc) =
            encode_categorical_fit_transform(column, labels, column_seed(seed, name), self.prior_weight, self.prior)?;
        self.columns.insert(name.to_string(), enc);
        Ok(encoded)
    }

    /// Encoding applied to data not seen during training.
    pub fn transform(&self, name: &str, category: &str) -> Result<f64> {
        let enc = self
            .columns
            .get(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("no encoder for column `{name}`")))?;
        Ok(match enc.stats.get(category) {
            Some(&(sum, count)) => (sum + self.prior_weight * self.prior) / (count as f64 + self.prior_weight),
            None => self.prior,
        })
    }
}
