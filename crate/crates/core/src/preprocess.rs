//! Numeric hygiene fitted on training rows: log transforms, imputation,
//! IQR bounds, label outlier removal, winsorizing and z-scoring.
//!
//! Missing continuous values travel through matrices as `NaN` until
//! [`impute`] replaces them with the training median.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledExample;
use crate::error::{Error, Result};

/// Sentinel category for missing categorical cells.
pub const UNKNOWN_CATEGORY: &str = "unknown";

/// `ln(1 + x)` for non-negative `x`.
pub fn log1p_transform(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("log1p_transform needs x >= 0, got {x}")));
    }
    Ok(x.ln_1p())
}

/// Defaults used to fill missing values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImputationPolicy;

impl ImputationPolicy {
    /// Missing counts become 0 (before any log transform).
    pub fn count(&self, v: Option<u64>) -> f64 {
        v.map_or(0.0, |c| c as f64)
    }

    pub fn continuous(&self, v: Option<f64>, train_median: f64) -> f64 {
        match v {
            Some(x) if !x.is_nan() => x,
            _ => train_median,
        }
    }

    pub fn categorical(&self, v: Option<&str>) -> String {
        match v {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => UNKNOWN_CATEGORY.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqrBounds {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IqrBounds {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }
}

/// Linear interpolation at fractional position `p * (n - 1)` of a sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(quantile_sorted(&sorted, 0.5))
}

pub fn iqr_bounds(values: &[f64]) -> Result<IqrBounds> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("iqr_bounds of an empty sample".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("iqr_bounds of non-finite data".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(IqrBounds {
        q1,
        q3,
        iqr,
        lower: q1 - 1.5 * iqr,
        upper: q3 + 1.5 * iqr,
    })
}

/// Splits `items` into those whose label lies inside `bounds` and the rest,
/// preserving order.
pub fn partition_by_bounds<T>(items: Vec<T>, bounds: &IqrBounds, label: impl Fn(&T) -> f64) -> (Vec<T>, Vec<T>) {
    items.into_iter().partition(|x| bounds.contains(label(x)))
}

/// Drops examples whose label falls outside the IQR fences of the given set.
pub fn filter_label_outliers(
    examples: Vec<LabeledExample>,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>, IqrBounds)> {
    if examples.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "label outlier filtering needs at least 4 examples, got {}",
            examples.len()
        )));
    }
    let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();
    let bounds = iqr_bounds(&labels)?;
    let (kept, dropped) = partition_by_bounds(examples, &bounds, |e| e.label);
    Ok((kept, dropped, bounds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousStats {
    pub median: f64,
    pub bounds: IqrBounds,
    /// Mean and population std of the imputed, winsorized column.
    pub mean: f64,
    pub std: f64,
    pub constant: bool,
}

/// Per-column statistics fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub continuous: IndexMap<String, ContinuousStats>,
    pub categorical: IndexMap<String, Vec<String>>,
    /// Clip values into the IQR fences; off when outlier handling is disabled.
    #[serde(default = "yes")]
    pub winsorize: bool,
}

fn yes() -> bool {
    true
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ColumnStats {
    /// Fits medians on observed values, IQR bounds on the imputed column and
    /// mean/std on the imputed, clipped column. `NaN` marks a missing cell.
    pub fn fit(names: &[String], rows: &[Vec<f64>]) -> Result<Self> {
        Self::fit_with(names, rows, true)
    }

    /// [`ColumnStats::fit`]; with `winsorize` off the fences are still
    /// recorded but mean/std come from the unclipped column.
    pub fn fit_with(names: &[String], rows: &[Vec<f64>], winsorize: bool) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("cannot fit column stats on zero rows".into()));
        }
        check_width(rows, names.len())?;
        let mut continuous = IndexMap::with_capacity(names.len());
        let mut column = Vec::with_capacity(rows.len());
        for (j, name) in names.iter().enumerate() {
            column.clear();
            column.extend(rows.iter().map(|r| r[j]).filter(|v| !v.is_nan()));
            let med = median(&column).unwrap_or(0.0);
            column.clear();
            column.extend(rows.iter().map(|r| if r[j].is_nan() { med } else { r[j] }));
            let bounds = iqr_bounds(&column)?;
            if winsorize {
                for v in column.iter_mut() {
                    *v = bounds.clip(*v);
                }
            }
            let (mean, std) = mean_std(&column);
            continuous.insert(
                name.clone(),
                ContinuousStats {
                    median: med,
                    bounds,
                    mean,
                    std,
                    constant: std == 0.0,
                },
            );
        }
        Ok(ColumnStats {
            continuous,
            categorical: IndexMap::new(),
            winsorize,
        })
    }

    /// Records the observed vocabulary of a categorical column.
    pub fn observe_categorical(&mut self, name: &str, values: impl IntoIterator<Item = String>) {
        let mut vocab: Vec<String> = values.into_iter().collect();
        vocab.sort();
        vocab.dedup();
        self.categorical.insert(name.to_string(), vocab);
    }

    pub fn n_continuous(&self) -> usize {
        self.continuous.len()
    }
}

fn check_width(rows: &[Vec<f64>], width: usize) -> Result<()> {
    match rows.iter().position(|r| r.len() != width) {
        Some(i) => Err(Error::SchemaMismatch(format!(
            "row {i} has {} columns, stats expect {width}",
            rows[i].len()
        ))),
        None => Ok(()),
    }
}

/// Replaces `NaN` cells with the column's training median.
pub fn impute(rows: &mut [Vec<f64>], stats: &ColumnStats) -> Result<()> {
    check_width(rows, stats.n_continuous())?;
    for row in rows.iter_mut() {
        for (v, s) in row.iter_mut().zip(stats.continuous.values()) {
            if v.is_nan() {
                *v = s.median;
            }
        }
    }
    Ok(())
}

/// Clips every value into its column's IQR fences (no-op when the stats
/// were fitted without winsorizing).
pub fn winsorize_features(rows: &mut [Vec<f64>], stats: &ColumnStats) -> Result<()> {
    check_width(rows, stats.n_continuous())?;
    if !stats.winsorize {
        return Ok(());
    }
    for row in rows.iter_mut() {
        for (v, s) in row.iter_mut().zip(stats.continuous.values()) {
            *v = s.bounds.clip(*v);
        }
    }
    Ok(())
}

/// `(x - mean) / std` per column; constant columns map to 0.
pub fn zscore_apply(stats: &ColumnStats, rows: &mut [Vec<f64>]) -> Result<()> {
    check_width(rows, stats.n_continuous())?;
    for row in rows.iter_mut() {
        for (v, s) in row.iter_mut().zip(stats.continuous.values()) {
            *v = if s.constant { 0.0 } else { (*v - s.mean) / s.std };
        }
    }
    Ok(())
}

/// Fits [`ColumnStats`] on `rows` and z-scores them in place.
pub fn zscore_fit_apply(names: &[String], rows: &mut [Vec<f64>]) -> Result<ColumnStats> {
    let stats = ColumnStats::fit(names, rows)?;
    zscore_apply(&stats, rows)?;
    Ok(stats)
}

/// The full training-side transform: impute, winsorize, z-score.
pub fn fit_transform(names: &[String], rows: &mut [Vec<f64>]) -> Result<ColumnStats> {
    fit_transform_with(names, rows, true)
}

/// [`fit_transform`] with feature winsorizing switchable.
pub fn fit_transform_with(names: &[String], rows: &mut [Vec<f64>], winsorize: bool) -> Result<ColumnStats> {
    let stats = ColumnStats::fit_with(names, rows, winsorize)?;
    transform(&stats, rows)?;
    Ok(stats)
}

pub fn transform(stats: &ColumnStats, rows: &mut [Vec<f64>]) -> Result<()> {
    impute(rows, stats)?;
    winsorize_features(rows, stats)?;
    zscore_apply(stats, rows)
}
