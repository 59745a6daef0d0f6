//! One fold's worth of fitted state: every transform that looks at labels
//! or feature distributions is fitted on that fold's training rows only,
//! then reused unchanged for validation and inference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::features::{
    fuse, meta_block, metadata_features, user_features, Block, FeatureGroup, FeatureKind, FeatureSchema, FeatureValue,
    FusedVector, TagPopularityTable,
};
use crate::gbdt::{fit_gbdt, GbdtConfig, GbdtModel};
use crate::preprocess::{self, iqr_bounds, median, ColumnStats, ImputationPolicy, IqrBounds};
use crate::visual::{average_pool, pca_fit_target, pca_transform, PcaModel, PcaTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_folds: usize,
    /// Seeds the fold shuffle and the ablation holdout split.
    pub seed: u64,
    pub pca: PcaTarget,
    /// IQR handling: drop training-label outliers and winsorize features.
    pub outlier_removal: bool,
    pub feature_groups: Vec<FeatureGroup>,
    /// Reject posts with missing embeddings at join time.
    pub strict_join: bool,
    /// Pseudo-count for the tag popularity table.
    pub tag_smoothing: f64,
    pub histogram_bins: usize,
    pub gbdt: GbdtConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_folds: 5,
            seed: 42,
            pca: PcaTarget::default(),
            outlier_removal: true,
            feature_groups: FeatureGroup::ALL.to_vec(),
            strict_join: false,
            tag_smoothing: 0.0,
            histogram_bins: 40,
            gbdt: GbdtConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::InvalidArgument(format!(
                "k_folds must be >= 2, got {}",
                self.k_folds
            )));
        }
        if self.histogram_bins < 2 {
            return Err(Error::InvalidArgument("histogram_bins must be >= 2".into()));
        }
        if !(self.tag_smoothing >= 0.0) {
            return Err(Error::InvalidArgument("tag_smoothing must be >= 0".into()));
        }
        self.gbdt.validate()
    }

    pub fn has_group(&self, g: FeatureGroup) -> bool {
        self.feature_groups.contains(&g)
    }

    pub fn without_group(&self, g: FeatureGroup) -> Self {
        let mut c = self.clone();
        c.feature_groups.retain(|&x| x != g);
        c
    }
}

/// Average-pooled video vectors keyed by post id, computed once per dataset.
#[derive(Debug, Clone, Default)]
pub struct PooledVideos {
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PooledVideos {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let mut vectors = HashMap::with_capacity(ds.video.len());
        for (id, frames) in &ds.video {
            vectors.insert(id.clone(), average_pool(frames)?);
        }
        Ok(PooledVideos { vectors })
    }
}

/// Fitted preprocessing plus the boosted model for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub fold: usize,
    pub schema: FeatureSchema,
    pub label_bounds: Option<IqrBounds>,
    pub n_train: usize,
    pub n_dropped_outliers: usize,
    pub pca: Option<PcaModel>,
    pub tags: Option<TagPopularityTable>,
    /// Fill value for a missing historical mean popularity.
    pub history_median: f64,
    pub stats: ColumnStats,
    pub model: GbdtModel,
}

enum TagMode {
    /// Training row: the row's own label is left out of its tags' means.
    LeaveOut(f64),
    Full,
}

struct RowBuilder<'a> {
    schema: &'a FeatureSchema,
    pca: Option<&'a PcaModel>,
    tags: Option<&'a TagPopularityTable>,
    history_median: f64,
}

impl RowBuilder<'_> {
    fn raw_row(
        &self,
        ex: &LabeledExample,
        pooled: Option<&[f64]>,
        text: Option<&[f32]>,
        tag_mode: TagMode,
    ) -> Result<FusedVector> {
        let mut parts = Vec::with_capacity(3);
        if let Some(pca) = self.pca {
            // A missing video sits at the PCA mean.
            let v = match pooled {
                Some(p) => pca_transform(pca, p)?,
                None => vec![0.0; pca.d_out],
            };
            parts.push((Block::Visual, v.into_iter().map(FeatureValue::Num).collect()));
        }
        if self.schema.has_group(FeatureGroup::User) {
            let u = user_features(&ex.user, &ImputationPolicy, self.history_median);
            parts.push((Block::User, u.to_vec().into_iter().map(FeatureValue::Num).collect()));
        }
        let tag_mean = match (self.tags, tag_mode) {
            (Some(t), TagMode::LeaveOut(y)) => t.mean_popularity_excluding(&ex.post.tags, y),
            (Some(t), TagMode::Full) => t.mean_popularity(&ex.post.tags),
            (None, _) => f64::NAN,
        };
        let meta = metadata_features(&ex.post, tag_mean)?;
        parts.push((Block::Meta, meta_block(self.schema, &meta, text)?));
        fuse(parts, self.schema)
    }
}

fn continuous_matrix(rows: &[FusedVector], idx: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| idx.iter().map(|&j| r.values[j].as_num().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn write_back(rows: &mut [FusedVector], idx: &[usize], matrix: &[Vec<f64>]) {
    for (row, m) in rows.iter_mut().zip(matrix) {
        for (&j, &v) in idx.iter().zip(m) {
            row.values[j] = FeatureValue::Num(v);
        }
    }
}

/// Fits one fold on `train` (indices into `ds`).
pub fn fit_fold(
    ds: &Dataset,
    pooled: &PooledVideos,
    train: &[usize],
    fold: usize,
    config: &PipelineConfig,
) -> Result<FittedPipeline> {
    let (kept, label_bounds) = if config.outlier_removal && train.len() >= 4 {
        let labels: Vec<f64> = train.iter().map(|&i| ds.examples[i].label).collect();
        let b = iqr_bounds(&labels)?;
        let kept: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&i| b.contains(ds.examples[i].label))
            .collect();
        (kept, Some(b))
    } else {
        (train.to_vec(), None)
    };
    if kept.len() < 2 {
        return Err(Error::Data(format!(
            "fold {fold} has {} training rows after outlier filtering",
            kept.len()
        )));
    }
    let n_dropped_outliers = train.len() - kept.len();
    let labels: Vec<f64> = kept.iter().map(|&i| ds.examples[i].label).collect();

    let pca = if config.has_group(FeatureGroup::VideoEmbedding) {
        let vecs: Vec<Vec<f64>> = kept
            .iter()
            .filter_map(|&i| pooled.vectors.get(&ds.examples[i].post.post_id).cloned())
            .collect();
        if vecs.len() < 2 {
            None
        } else {
            Some(pca_fit_target(&vecs, config.pca)?)
        }
    } else {
        None
    };

    let tags = config.has_group(FeatureGroup::TagPopularity).then(|| {
        TagPopularityTable::fit(
            kept.iter()
                .map(|&i| (ds.examples[i].post.tags.as_slice(), ds.examples[i].label)),
            config.tag_smoothing,
        )
    });

    let history: Vec<f64> = kept
        .iter()
        .filter_map(|&i| ds.examples[i].user.historical_mean_popularity)
        .filter(|v| v.is_finite())
        .collect();
    let history_median = median(&history)
        .or_else(|| median(&labels))
        .expect("at least two training rows");

    let text_dim = if config.has_group(FeatureGroup::TextEmbedding) {
        ds.text_dim
    } else {
        None
    };
    let schema = FeatureSchema::build(pca.as_ref().map(|p| p.d_out), text_dim, &config.feature_groups);
    if schema.is_empty() {
        return Err(Error::InvalidArgument("no features left in the schema".into()));
    }
    let builder = RowBuilder {
        schema: &schema,
        pca: pca.as_ref(),
        tags: tags.as_ref(),
        history_median,
    };
    let mut rows = kept
        .iter()
        .map(|&i| {
            let ex = &ds.examples[i];
            let id = ex.post.post_id.as_str();
            builder.raw_row(
                ex,
                pooled.vectors.get(id).map(Vec::as_slice),
                ds.text.get(id).map(Vec::as_slice),
                TagMode::LeaveOut(ex.label),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let cont = schema.indices_of_kind(FeatureKind::Continuous);
    let names: Vec<String> = cont.iter().map(|&j| schema.features[j].name.clone()).collect();
    let mut matrix = continuous_matrix(&rows, &cont);
    let mut stats = preprocess::fit_transform_with(&names, &mut matrix, config.outlier_removal)?;
    write_back(&mut rows, &cont, &matrix);
    for j in schema.indices_of_kind(FeatureKind::Categorical) {
        stats.observe_categorical(
            &schema.features[j].name,
            rows.iter().filter_map(|r| r.values[j].as_cat().map(str::to_string)),
        );
    }

    let model = fit_gbdt(&rows, &labels, &schema, &config.gbdt)?;
    Ok(FittedPipeline {
        fold,
        schema,
        label_bounds,
        n_train: kept.len(),
        n_dropped_outliers,
        pca,
        tags,
        history_median,
        stats,
        model,
    })
}

impl FittedPipeline {
    /// The model-ready feature vector of one example under this fold's transforms.
    pub fn features(&self, ex: &LabeledExample, pooled: Option<&[f64]>, text: Option<&[f32]>) -> Result<FusedVector> {
        if let (Some(p), Some(v)) = (&self.pca, pooled) {
            if v.len() != p.d_in {
                return Err(Error::SchemaMismatch(format!(
                    "video embedding has {} dims, model expects {}",
                    v.len(),
                    p.d_in
                )));
            }
        }
        let builder = RowBuilder {
            schema: &self.schema,
            pca: self.pca.as_ref(),
            tags: self.tags.as_ref(),
            history_median: self.history_median,
        };
        let mut row = builder.raw_row(ex, pooled, text, TagMode::Full)?;
        let cont = self.schema.indices_of_kind(FeatureKind::Continuous);
        let mut matrix = continuous_matrix(std::slice::from_ref(&row), &cont);
        preprocess::transform(&self.stats, &mut matrix)?;
        write_back(std::slice::from_mut(&mut row), &cont, &matrix);
        Ok(row)
    }

    pub fn predict(&self, ex: &LabeledExample, pooled: Option<&[f64]>, text: Option<&[f32]>) -> Result<f64> {
        self.model.predict(&self.features(ex, pooled, text)?)
    }

    /// Predicts example `i` of `ds`, using `pooled` for its video.
    pub fn predict_in(&self, ds: &Dataset, pooled: &PooledVideos, i: usize) -> Result<f64> {
        let ex = &ds.examples[i];
        let id = ex.post.post_id.as_str();
        self.predict(
            ex,
            pooled.vectors.get(id).map(Vec::as_slice),
            ds.text.get(id).map(Vec::as_slice),
        )
    }
}
