//! Context features (user, temporal, text statistics, tag popularity,
//! metadata) and the fused feature vector `[visual; user; meta]`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{fnv1a64, PostRecord, UserProfile};
use crate::error::{Error, Result};
use crate::preprocess::{log1p_transform, ImputationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Visual,
    User,
    Meta,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Visual, Block::User, Block::Meta];

    pub fn name(self) -> &'static str {
        match self {
            Block::Visual => "visual",
            Block::User => "user",
            Block::Meta => "meta",
        }
    }
}

/// Feature groups that can be removed as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    VideoEmbedding,
    TextEmbedding,
    TagPopularity,
    Metadata,
    Temporal,
    User,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 6] = [
        FeatureGroup::VideoEmbedding,
        FeatureGroup::TextEmbedding,
        FeatureGroup::TagPopularity,
        FeatureGroup::Metadata,
        FeatureGroup::Temporal,
        FeatureGroup::User,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::VideoEmbedding => "video_embedding",
            FeatureGroup::TextEmbedding => "text_embedding",
            FeatureGroup::TagPopularity => "tag_popularity",
            FeatureGroup::Metadata => "metadata",
            FeatureGroup::Temporal => "temporal",
            FeatureGroup::User => "user",
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature group `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub block: Block,
    pub group: FeatureGroup,
    pub kind: FeatureKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub block: Block,
    pub offset: usize,
    pub len: usize,
}

/// Ordered feature layout of the fused vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

const USER_FEATURES: [&str; 8] = [
    "log_follower_count",
    "log_following_count",
    "log_video_count",
    "log_like_count",
    "log_digg_count",
    "log_heart_count",
    "log_friend_count",
    "historical_mean_popularity",
];

const META_CONTINUOUS: [&str; 7] = [
    "duration_s",
    "width_px",
    "height_px",
    "aspect_ratio",
    "caption_chars",
    "caption_tokens",
    "suggested_words_len",
];

const META_CATEGORICAL: [&str; 5] = ["category", "language", "location", "video_format", "music_id"];

impl FeatureSchema {
    /// Canonical layout for the enabled groups. `visual_dim` and `text_dim`
    /// are the PCA output width and the text embedding width, when present.
    pub fn build(visual_dim: Option<usize>, text_dim: Option<usize>, groups: &[FeatureGroup]) -> Self {
        let on = |g: FeatureGroup| groups.contains(&g);
        let mut features = Vec::new();
        let mut push = |name: String, block, group, kind| {
            features.push(FeatureSpec {
                name,
                block,
                group,
                kind,
            })
        };
        use FeatureKind::*;
        if let (Some(d), true) = (visual_dim, on(FeatureGroup::VideoEmbedding)) {
            for k in 0..d {
                push(
                    format!("pca_{k}"),
                    Block::Visual,
                    FeatureGroup::VideoEmbedding,
                    Continuous,
                );
            }
        }
        if on(FeatureGroup::User) {
            for name in USER_FEATURES {
                push(name.into(), Block::User, FeatureGroup::User, Continuous);
            }
        }
        if on(FeatureGroup::Metadata) {
            for name in META_CONTINUOUS {
                push(name.into(), Block::Meta, FeatureGroup::Metadata, Continuous);
            }
        }
        if on(FeatureGroup::TagPopularity) {
            push(
                "tag_mean_popularity".into(),
                Block::Meta,
                FeatureGroup::TagPopularity,
                Continuous,
            );
        }
        if let (Some(d), true) = (text_dim, on(FeatureGroup::TextEmbedding)) {
            for k in 0..d {
                push(
                    format!("text_emb_{k}"),
                    Block::Meta,
                    FeatureGroup::TextEmbedding,
                    Continuous,
                );
            }
        }
        if on(FeatureGroup::Metadata) {
            for name in META_CATEGORICAL {
                push(name.into(), Block::Meta, FeatureGroup::Metadata, Categorical);
            }
        }
        if on(FeatureGroup::Temporal) {
            for name in ["hour_of_day", "day_of_week"] {
                push(name.into(), Block::Meta, FeatureGroup::Temporal, Categorical);
            }
        }
        FeatureSchema { features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn has_group(&self, group: FeatureGroup) -> bool {
        self.features.iter().any(|f| f.group == group)
    }

    pub fn indices_of_kind(&self, kind: FeatureKind) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.features[i].kind == kind).collect()
    }

    pub fn block_features(&self, block: Block) -> impl Iterator<Item = &FeatureSpec> {
        self.features.iter().filter(move |f| f.block == block)
    }

    /// Contiguous span of each block, in fused order.
    pub fn spans(&self) -> Vec<Span> {
        let mut spans = Vec::new();
        let mut offset = 0;
        for block in Block::ALL {
            let len = self.block_features(block).count();
            spans.push(Span { block, offset, len });
            offset += len;
        }
        spans
    }

    /// Stable fingerprint of names, blocks, groups and kinds.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&self.features).expect("schema serializes");
        format!("{:016x}", fnv1a64(&canonical))
    }
}

/// One cell of the fused vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Num(f64),
    Cat(String),
}

impl FeatureValue {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            FeatureValue::Num(v) => Some(*v),
            FeatureValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            FeatureValue::Cat(s) => Some(s),
            FeatureValue::Num(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedVector {
    pub values: Vec<FeatureValue>,
}

/// Concatenates blocks in the canonical visual, user, meta order, whatever
/// order they are supplied in.
pub fn fuse(parts: Vec<(Block, Vec<FeatureValue>)>, schema: &FeatureSchema) -> Result<FusedVector> {
    let mut slots: [Option<Vec<FeatureValue>>; 3] = [None, None, None];
    for (block, values) in parts {
        let slot = &mut slots[block as usize];
        if slot.is_some() {
            return Err(Error::SchemaMismatch(format!("block {block:?} supplied twice")));
        }
        *slot = Some(values);
    }
    let mut values = Vec::with_capacity(schema.len());
    for span in schema.spans() {
        let block = slots[span.block as usize].take().unwrap_or_default();
        if block.len() != span.len {
            return Err(Error::SchemaMismatch(format!(
                "block {:?} has {} values, schema expects {}",
                span.block,
                block.len(),
                span.len
            )));
        }
        values.extend(block);
    }
    Ok(FusedVector { values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    /// `ln(1 + count)` in [`UserProfile::counts`] order.
    pub log_counts: [f64; 7],
    pub historical_mean_popularity: f64,
}

impl UserFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_counts.to_vec();
        v.push(self.historical_mean_popularity);
        v
    }
}

pub fn user_features(profile: &UserProfile, policy: &ImputationPolicy, train_median: f64) -> UserFeatures {
    let mut log_counts = [0.0; 7];
    for (slot, count) in log_counts.iter_mut().zip(profile.counts()) {
        *slot = log1p_transform(policy.count(count)).expect("counts are non-negative");
    }
    UserFeatures {
        log_counts,
        historical_mean_popularity: policy.continuous(profile.historical_mean_popularity, train_median),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TemporalFeatures {
    pub hour_of_day: u8,
    /// Monday = 0.
    pub day_of_week: u8,
}

pub fn temporal_encode(post_timestamp: i64) -> Result<TemporalFeatures> {
    if post_timestamp < 0 {
        return Err(Error::InvalidArgument(format!(
            "negative post_timestamp {post_timestamp}"
        )));
    }
    let days = post_timestamp / 86_400;
    Ok(TemporalFeatures {
        hour_of_day: ((post_timestamp % 86_400) / 3600) as u8,
        // 1970-01-01 was a Thursday (3 with Monday = 0).
        day_of_week: ((days + 3) % 7) as u8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextStats {
    pub caption_chars: usize,
    pub caption_tokens: usize,
    pub suggested_words_len: usize,
}

/// Lowercased tokens split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn text_stats(caption: &str, suggested_keywords: &[String]) -> TextStats {
    TextStats {
        caption_chars: caption.chars().count(),
        caption_tokens: tokenize(caption).len(),
        suggested_words_len: suggested_keywords.len(),
    }
}

/// Mean training label per tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagPopularityTable {
    pub tags: BTreeMap<String, (f64, usize)>,
    pub global_mean: f64,
    /// Pseudo-count pulling rare tags towards the global mean. 0 = plain mean.
    pub smoothing: f64,
}

impl TagPopularityTable {
    /// Builds the table from `(tags, label)` pairs of training rows.
    pub fn fit<'a>(rows: impl IntoIterator<Item = (&'a [String], f64)>, smoothing: f64) -> Self {
        let mut tags: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        let mut n = 0usize;
        for (row_tags, label) in rows {
            total += label;
            n += 1;
            for tag in dedup(row_tags) {
                let e = tags.entry(tag.clone()).or_insert((0.0, 0));
                e.0 += label;
                e.1 += 1;
            }
        }
        TagPopularityTable {
            tags,
            global_mean: if n == 0 { 0.0 } else { total / n as f64 },
            smoothing,
        }
    }

    fn tag_mean(&self, sum: f64, count: usize) -> Option<f64> {
        let denom = count as f64 + self.smoothing;
        if count == 0 || denom <= 0.0 {
            None
        } else {
            Some((sum + self.smoothing * self.global_mean) / denom)
        }
    }

    /// Mean over the post's tags of each tag's mean label; unseen tags and
    /// empty lists fall back to the global mean.
    pub fn mean_popularity(&self, tags: &[String]) -> f64 {
        self.mean_with(tags, None)
    }

    /// Same, with one training row's own label removed from every tag it
    /// carries, so a training row never sees its own target.
    pub fn mean_popularity_excluding(&self, tags: &[String], own_label: f64) -> f64 {
        self.mean_with(tags, Some(own_label))
    }

    fn mean_with(&self, tags: &[String], own: Option<f64>) -> f64 {
        let tags = dedup(tags);
        if tags.is_empty() {
            return self.global_mean;
        }
        let total: f64 = tags
            .iter()
            .map(|t| {
                let value = self.tags.get(*t).and_then(|&(sum, count)| match own {
                    Some(y) if count > 0 => self.tag_mean(sum - y, count - 1),
                    _ => self.tag_mean(sum, count),
                });
                value.unwrap_or(self.global_mean)
            })
            .sum();
        total / tags.len() as f64
    }
}

fn dedup(tags: &[String]) -> Vec<&String> {
    let mut seen = std::collections::HashSet::new();
    tags.iter().filter(|t| seen.insert(t.as_str())).collect()
}

/// Metadata inputs of the meta block. Missing continuous values are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaFeatures {
    pub duration_s: Option<f64>,
    pub width_px: Option<f64>,
    pub height_px: Option<f64>,
    pub aspect_ratio: Option<f64>,
    pub text: TextStats,
    pub tag_mean_popularity: f64,
    pub category: String,
    pub language: String,
    pub location: String,
    pub video_format: String,
    pub music_id: String,
    pub temporal: TemporalFeatures,
}

pub fn metadata_features(post: &PostRecord, tag_mean_popularity: f64) -> Result<MetaFeatures> {
    let policy = ImputationPolicy;
    if post.height_px == Some(0) || post.width_px == Some(0) {
        return Err(Error::Data(format!(
            "post `{}` has a zero frame dimension",
            post.post_id
        )));
    }
    let aspect_ratio = match (post.width_px, post.height_px) {
        (Some(w), Some(h)) => Some(f64::from(w) / f64::from(h)),
        _ => None,
    };
    Ok(MetaFeatures {
        duration_s: post.duration_s,
        width_px: post.width_px.map(f64::from),
        height_px: post.height_px.map(f64::from),
        aspect_ratio,
        text: text_stats(&post.caption, &post.suggested_keywords),
        tag_mean_popularity,
        category: policy.categorical(post.category.as_deref()),
        language: policy.categorical(post.language.as_deref()),
        location: policy.categorical(post.location.as_deref()),
        video_format: policy.categorical(post.video_format.as_deref()),
        music_id: policy.categorical(post.music_id.as_deref()),
        temporal: temporal_encode(post.post_timestamp)?,
    })
}

impl MetaFeatures {
    /// Value of a named meta feature; missing continuous values are `NaN`.
    pub fn value(&self, name: &str) -> Option<FeatureValue> {
        let num = |v: Option<f64>| Some(FeatureValue::Num(v.unwrap_or(f64::NAN)));
        let cat = |s: &str| Some(FeatureValue::Cat(s.to_string()));
        match name {
            "duration_s" => num(self.duration_s),
            "width_px" => num(self.width_px),
            "height_px" => num(self.height_px),
            "aspect_ratio" => num(self.aspect_ratio),
            "caption_chars" => num(Some(self.text.caption_chars as f64)),
            "caption_tokens" => num(Some(self.text.caption_tokens as f64)),
            "suggested_words_len" => num(Some(self.text.suggested_words_len as f64)),
            "tag_mean_popularity" => num(Some(self.tag_mean_popularity)),
            "category" => cat(&self.category),
            "language" => cat(&self.language),
            "location" => cat(&self.location),
            "video_format" => cat(&self.video_format),
            "music_id" => cat(&self.music_id),
            "hour_of_day" => cat(&self.temporal.hour_of_day.to_string()),
            "day_of_week" => cat(&self.temporal.day_of_week.to_string()),
            _ => None,
        }
    }
}

/// Builds the meta block for `schema`; `text` supplies `text_emb_*` values.
pub fn meta_block(schema: &FeatureSchema, meta: &MetaFeatures, text: Option<&[f32]>) -> Result<Vec<FeatureValue>> {
    schema
        .block_features(Block::Meta)
        .map(|f| {
            if let Some(k) = f.name.strip_prefix("text_emb_") {
                let k: usize = k.parse().map_err(|_| Error::SchemaMismatch(f.name.clone()))?;
                return Ok(FeatureValue::Num(
                    text.and_then(|t| t.get(k)).map_or(f64::NAN, |&v| f64::from(v)),
                ));
            }
            meta.value(&f.name)
                .ok_or_else(|| Error::SchemaMismatch(format!("unknown meta feature `{}`", f.name)))
        })
        .collect()
}
