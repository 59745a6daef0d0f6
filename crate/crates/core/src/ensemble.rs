//! K-fold training, fold-averaged prediction, MAPE, ablations and
//! label/prediction histograms.

use std::io::Write;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::features::FeatureGroup;
use crate::gbdt::{importance, FeatureImportance, ImportanceEntry};
use crate::pipeline::{fit_fold, FittedPipeline, PipelineConfig, PooledVideos};

/// Labels with `|y|` below this are left out of MAPE.
pub const MAPE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold id of each row.
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    /// Row indices of fold `f`, ascending.
    pub fn validation(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == f).collect()
    }

    /// Row indices outside fold `f`, ascending.
    pub fn training(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Seeded shuffle of `0..n` cut into `k` contiguous chunks; the first
/// `n % k` folds get one extra row.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("K must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    let (base, extra) = (n / k, n % k);
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &i in &order[pos..pos + size] {
            fold_of[i] = f;
        }
        pos += size;
    }
    Ok(FoldAssignment { k, fold_of, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapeSummary {
    pub mape: f64,
    /// Rows that entered the mean.
    pub n: usize,
    pub excluded_near_zero: usize,
}

/// Mean of `|y - yhat| / |y|` over rows with `|y| >= 1e-6`.
pub fn mape_summary(y: &[f64], yhat: &[f64]) -> Result<MapeSummary> {
    if y.len() != yhat.len() {
        return Err(Error::InvalidArgument(format!(
            "{} labels but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    let mut total = 0.0;
    let mut n = 0;
    for (&a, &p) in y.iter().zip(yhat) {
        if a.abs() >= MAPE_GUARD {
            total += (a - p).abs() / a.abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::MapeUndefined);
    }
    Ok(MapeSummary {
        mape: total / n as f64,
        n,
        excluded_near_zero: y.len() - n,
    })
}

pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    mape_summary(y, yhat).map(|s| s.mape)
}

/// K fold models, each with its own fitted preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: PipelineConfig,
    pub members: Vec<FittedPipeline>,
}

impl EnsembleModel {
    pub fn new(config: PipelineConfig, members: Vec<FittedPipeline>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("an ensemble needs at least one member".into()));
        }
        let mut folds: Vec<usize> = members.iter().map(|m| m.fold).collect();
        folds.sort_unstable();
        folds.dedup();
        if folds.len() != members.len() {
            return Err(Error::InvalidArgument("duplicate fold ids in ensemble".into()));
        }
        Ok(EnsembleModel { config, members })
    }

    /// Mean of the member predictions.
    pub fn predict(&self, ex: &LabeledExample, pooled: Option<&[f64]>, text: Option<&[f32]>) -> Result<f64> {
        let preds = self
            .members
            .iter()
            .map(|m| m.predict(ex, pooled, text))
            .collect::<Result<Vec<_>>>()?;
        Ok(predict_ensemble(&preds))
    }

    pub fn predict_dataset(&self, ds: &Dataset, pooled: &PooledVideos) -> Result<Vec<f64>> {
        (0..ds.len())
            .into_par_iter()
            .map(|i| {
                let id = ds.examples[i].post.post_id.as_str();
                self.predict(
                    &ds.examples[i],
                    pooled.vectors.get(id).map(Vec::as_slice),
                    ds.text.get(id).map(Vec::as_slice),
                )
            })
            .collect()
    }

    /// Member importances averaged feature by feature.
    pub fn importance(&self) -> FeatureImportance {
        let items: Vec<FeatureImportance> = self.members.iter().map(|m| importance(&m.model)).collect();
        FeatureImportance::average(&items).expect("non-empty ensemble")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Arithmetic mean of member outputs.
pub fn predict_ensemble(member_predictions: &[f64]) -> f64 {
    member_predictions.iter().sum::<f64>() / member_predictions.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_dropped_outliers: usize,
    pub n_validation: usize,
    pub validation_mape: f64,
    /// MAPE of predicting the training-fold mean label.
    pub baseline_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    /// Each row predicted by the member that did not train on it.
    pub oof_predictions: Vec<f64>,
    pub oof_mape: MapeSummary,
    pub baseline_oof_mape: MapeSummary,
    pub assignment: FoldAssignment,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub ensemble: EnsembleModel,
    pub report: CvReport,
}

fn fit_members(
    ds: &Dataset,
    pooled: &PooledVideos,
    assignment: &FoldAssignment,
    config: &PipelineConfig,
) -> Result<Vec<FittedPipeline>> {
    (0..assignment.k)
        .into_par_iter()
        .map(|f| fit_fold(ds, pooled, &assignment.training(f), f, config))
        .collect()
}

/// Trains one pipeline per fold and scores each on its held-out fold.
pub fn train_cv(ds: &Dataset, config: &PipelineConfig) -> Result<CvOutcome> {
    let pooled = PooledVideos::from_dataset(ds)?;
    train_cv_with(ds, &pooled, config, None)
}

/// [`train_cv`] with precomputed pooled videos and optionally a fixed assignment.
pub fn train_cv_with(
    ds: &Dataset,
    pooled: &PooledVideos,
    config: &PipelineConfig,
    assignment: Option<&FoldAssignment>,
) -> Result<CvOutcome> {
    config.validate()?;
    let assignment = match assignment {
        Some(a) => {
            if a.fold_of.len() != ds.len() {
                return Err(Error::InvalidArgument("fold assignment does not match dataset".into()));
            }
            a.clone()
        }
        None => kfold_split(ds.len(), config.k_folds, config.seed)?,
    };
    let members = fit_members(ds, pooled, &assignment, config)?;
    let labels = ds.labels();
    let mut oof = vec![f64::NAN; ds.len()];
    let mut baseline = vec![f64::NAN; ds.len()];
    let mut folds = Vec::with_capacity(assignment.k);
    for member in &members {
        let f = member.fold;
        let val = assignment.validation(f);
        let train = assignment.training(f);
        let mean = train.iter().map(|&i| labels[i]).sum::<f64>() / train.len() as f64;
        let preds = val
            .par_iter()
            .map(|&i| member.predict_in(ds, pooled, i))
            .collect::<Result<Vec<_>>>()?;
        let y: Vec<f64> = val.iter().map(|&i| labels[i]).collect();
        for (&i, &p) in val.iter().zip(&preds) {
            oof[i] = p;
            baseline[i] = mean;
        }
        let validation_mape = mape(&y, &preds)?;
        log::info!("fold {f}: validation MAPE {validation_mape:.5}");
        folds.push(FoldReport {
            fold: f,
            n_train: member.n_train,
            n_dropped_outliers: member.n_dropped_outliers,
            n_validation: val.len(),
            validation_mape,
            baseline_mape: mape(&y, &vec![mean; y.len()])?,
        });
    }
    let report = CvReport {
        folds,
        oof_mape: mape_summary(&labels, &oof)?,
        baseline_oof_mape: mape_summary(&labels, &baseline)?,
        oof_predictions: oof,
        assignment,
    };
    Ok(CvOutcome {
        ensemble: EnsembleModel::new(config.clone(), members)?,
        report,
    })
}

/// Row switches accepted by [`ablation_run`] besides the feature groups.
pub const OUTLIER_REMOVAL: &str = "outlier_removal";
pub const KFOLD_ENSEMBLE: &str = "kfold_ensemble";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Group(FeatureGroup),
    OutlierRemoval,
    KfoldEnsemble,
}

impl Ablation {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            OUTLIER_REMOVAL => Ok(Ablation::OutlierRemoval),
            KFOLD_ENSEMBLE => Ok(Ablation::KfoldEnsemble),
            other => other
                .parse::<FeatureGroup>()
                .map(Ablation::Group)
                .map_err(|_| Error::InvalidArgument(format!("unknown ablation group `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Group(g) => g.name(),
            Ablation::OutlierRemoval => OUTLIER_REMOVAL,
            Ablation::KfoldEnsemble => KFOLD_ENSEMBLE,
        }
    }

    /// Every ablation row in table order.
    pub fn all() -> Vec<Ablation> {
        let mut v: Vec<Ablation> = FeatureGroup::ALL.iter().map(|&g| Ablation::Group(g)).collect();
        v.push(Ablation::OutlierRemoval);
        v.push(Ablation::KfoldEnsemble);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `full` or `w/o <group>`.
    pub configuration: String,
    pub mape: f64,
    pub delta_vs_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// Requested rows that could not run, with the reason.
    pub skipped: Vec<(String, String)>,
    pub n_train: usize,
    pub n_test: usize,
}

impl AblationReport {
    pub fn mape_of(&self, configuration: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.configuration == configuration)
            .map(|r| r.mape)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["configuration", "mape", "delta_vs_full"])?;
        for r in &self.rows {
            out.write_record([r.configuration.clone(), r.mape.to_string(), r.delta_vs_full.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Seeded split of `0..n` into `(train, test)` with `test_share` of the rows
/// in the test part, both sorted.
pub fn holdout_split(n: usize, test_share: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_test = ((n as f64) * test_share).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "holdout of {test_share} leaves an empty side for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x0005_eed0_fa11));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Retrains with each listed group removed and scores every configuration on
/// one shared 80/20 holdout. All rows share the fold assignment and seeds.
/// `w/o kfold_ensemble` is a single model fitted on the whole training part.
pub fn ablation_run(ds: &Dataset, config: &PipelineConfig, groups: &[String]) -> Result<AblationReport> {
    config.validate()?;
    let ablations = groups.iter().map(|g| Ablation::parse(g)).collect::<Result<Vec<_>>>()?;
    let pooled = PooledVideos::from_dataset(ds)?;
    let (train_idx, test_idx) = holdout_split(ds.len(), 0.2, config.seed)?;
    let train = ds.subset(&train_idx);
    let test = ds.subset(&test_idx);
    let y_test = test.labels();
    let assignment = kfold_split(train.len(), config.k_folds, config.seed)?;

    let score = |cfg: &PipelineConfig| -> Result<f64> {
        let cv = train_cv_with(&train, &pooled, cfg, Some(&assignment))?;
        mape(&y_test, &cv.ensemble.predict_dataset(&test, &pooled)?)
    };

    let full = score(config)?;
    log::info!("ablation full: {full:.5}");
    let mut rows = vec![AblationRow {
        configuration: "full".into(),
        mape: full,
        delta_vs_full: 0.0,
    }];
    let mut skipped = Vec::new();
    for ab in ablations {
        let m = match ab {
            Ablation::Group(g) => {
                let present = config.has_group(g)
                    && match g {
                        FeatureGroup::VideoEmbedding => ds.video_dim.is_some(),
                        FeatureGroup::TextEmbedding => ds.text_dim.is_some(),
                        _ => true,
                    };
                if !present {
                    log::warn!("skipping ablation `{}`: group not in the schema", g);
                    skipped.push((g.name().to_string(), "group not in the schema".to_string()));
                    continue;
                }
                score(&config.without_group(g))?
            }
            Ablation::OutlierRemoval => {
                let mut cfg = config.clone();
                cfg.outlier_removal = false;
                score(&cfg)?
            }
            Ablation::KfoldEnsemble => {
                let all: Vec<usize> = (0..train.len()).collect();
                let single = fit_fold(&train, &pooled, &all, 0, config)?;
                let preds = (0..test.len())
                    .map(|i| single.predict_in(&test, &pooled, i))
                    .collect::<Result<Vec<_>>>()?;
                mape(&y_test, &preds)?
            }
        };
        log::info!("ablation w/o {}: {m:.5}", ab.name());
        rows.push(AblationRow {
            configuration: format!("w/o {}", ab.name()),
            mape: m,
            delta_vs_full: m - full,
        });
    }
    Ok(AblationReport {
        rows,
        skipped,
        n_train: train.len(),
        n_test: test.len(),
    })
}

/// Label and prediction histograms over shared bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    /// `n_bins + 1` edges from the minimum to the maximum of both series.
    pub edges: Vec<f64>,
    pub label_counts: Vec<usize>,
    pub prediction_counts: Vec<usize>,
}

pub fn distribution_summary(y: &[f64], yhat: &[f64], n_bins: usize) -> Result<Histograms> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    if y.is_empty() || yhat.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in histogram input".into()));
    }
    let lo = y.iter().chain(yhat).copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().chain(yhat).copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|b| if b == n_bins { hi } else { lo + width * b as f64 })
        .collect();
    let bin = |v: f64| -> usize {
        if width == 0.0 {
            0
        } else {
            (((v - lo) / width) as usize).min(n_bins - 1)
        }
    };
    let count = |s: &[f64]| {
        let mut c = vec![0; n_bins];
        for &v in s {
            c[bin(v)] += 1;
        }
        c
    };
    Ok(Histograms {
        label_counts: count(y),
        prediction_counts: count(yhat),
        edges,
    })
}

impl Histograms {
    /// One row per bin: `bin_lo,bin_hi,labels,predictions`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["bin_lo", "bin_hi", "labels", "predictions"])?;
        for b in 0..self.label_counts.len() {
            out.write_record([
                self.edges[b].to_string(),
                self.edges[b + 1].to_string(),
                self.label_counts[b].to_string(),
                self.prediction_counts[b].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mape: f64,
    pub n: usize,
    pub excluded_near_zero: usize,
    #[serde(default)]
    pub ablation: IndexMap<String, f64>,
    #[serde(default)]
    pub importance: Vec<ImportanceEntry>,
    pub histograms: Histograms,
}

impl MetricsReport {
    pub fn from_predictions(y: &[f64], yhat: &[f64], n_bins: usize) -> Result<Self> {
        let s = mape_summary(y, yhat)?;
        Ok(MetricsReport {
            mape: s.mape,
            n: s.n,
            excluded_near_zero: s.excluded_near_zero,
            ablation: IndexMap::new(),
            importance: Vec::new(),
            histograms: distribution_summary(y, yhat, n_bins)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kfold_sizes() {
        assert_eq!(kfold_split(10, 5, 1).unwrap().sizes(), vec![2; 5]);
        assert_eq!(kfold_split(7, 5, 1).unwrap().sizes(), vec![2, 2, 1, 1, 1]);
        assert_eq!(kfold_split(7, 5, 9).unwrap(), kfold_split(7, 5, 9).unwrap());
        assert!(kfold_split(4, 5, 0).is_err());
        assert!(kfold_split(4, 1, 0).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[1.0, 2.0, 4.0], &[1.0, 1.0, 5.0]).unwrap(), 0.25);
        assert_eq!(mape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        let s = mape_summary(&[0.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((s.mape, s.n, s.excluded_near_zero), (0.5, 1, 1));
        assert!(matches!(mape(&[0.0], &[1.0]), Err(Error::MapeUndefined)));
        assert!(mape(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ensemble_mean() {
        assert_eq!(predict_ensemble(&[1.0, 3.0]), 2.0);
        assert_eq!(predict_ensemble(&[1.0, 2.0, 3.0, 4.0, 5.0]), 3.0);
        assert_eq!(predict_ensemble(&[0.7; 5]), 0.7);
    }

    #[test]
    fn histogram_example() {
        let h = distribution_summary(&[1.0, 1.0, 9.0], &[1.0, 9.0, 9.0], 2).unwrap();
        assert_eq!(h.edges, vec![1.0, 5.0, 9.0]);
        assert_eq!(h.label_counts, vec![2, 1]);
        assert_eq!(h.prediction_counts, vec![1, 2]);
        assert!(distribution_summary(&[], &[], 2).is_err());
        assert!(distribution_summary(&[1.0], &[1.0], 1).is_err());
        let flat = distribution_summary(&[2.0, 2.0], &[2.0], 3).unwrap();
        assert_eq!(flat.label_counts, vec![2, 0, 0]);
    }

    #[test]
    fn ablation_names() {
        assert_eq!(Ablation::parse("user").unwrap(), Ablation::Group(FeatureGroup::User));
        assert_eq!(Ablation::parse("kfold_ensemble").unwrap(), Ablation::KfoldEnsemble);
        assert!(Ablation::parse("colour").is_err());
        assert_eq!(Ablation::all().len(), 8);
    }

    #[test]
    fn holdout_is_partition() {
        let (a, b) = holdout_split(10, 0.2, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let mut all = [a, b].concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn kfold_partition_law(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let a = kfold_split(n, k, seed).unwrap();
            let sizes = a.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut seen = vec![false; n];
            for f in 0..k {
                for i in a.validation(f) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
        }

        #[test]
        fn mape_scale_invariant(
            pairs in proptest::collection::vec((0.1f64..100.0, -50f64..50.0), 1..40),
            c in 0.01f64..100.0,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let a = mape(&y, &yh).unwrap();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let yhs: Vec<f64> = yh.iter().map(|v| v * c).collect();
            let b = mape(&ys, &yhs).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn histogram_conserves_counts(
            y in proptest::collection::vec(-1e3f64..1e3, 1..60),
            yh in proptest::collection::vec(-1e3f64..1e3, 1..60),
            bins in 2usize..50,
        ) {
            let h = distribution_summary(&y, &yh, bins).unwrap();
            prop_assert_eq!(h.label_counts.iter().sum::<usize>(), y.len());
            prop_assert_eq!(h.prediction_counts.iter().sum::<usize>(), yh.len());
            prop_assert_eq!(h.edges.len(), bins + 1);
        }
    }
}
