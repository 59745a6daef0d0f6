//! Post/user tables, frame embeddings and the popularity label.

mod embedding;
mod tables;

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embedding::{
    fnv1a64, load_embeddings, sidecar_path, write_embeddings_binary, write_embeddings_csv, EmbeddingKind,
    EmbeddingMatrix,
};
pub use tables::{load_posts, load_users, write_posts_csv, write_users_csv, TableFormat, POST_COLUMNS, USER_COLUMNS};

/// Stand-in view count used when a post has zero views, so the label stays finite.
pub const ZERO_VIEWS_SUBSTITUTE: f64 = 0.5;

/// One social post as ingested. Categorical fields are `None` when the cell was empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub user_id: String,
    pub raw_views: u64,
    pub days_since_publish: f64,
    /// Seconds since the Unix epoch, UTC.
    pub post_timestamp: i64,
    pub category: Option<String>,
    pub language: Option<String>,
    pub location: Option<String>,
    pub video_format: Option<String>,
    pub music_id: Option<String>,
    pub duration_s: Option<f64>,
    pub width_px: Option<u32>,
    pub height_px: Option<u32>,
    pub caption: String,
    pub suggested_keywords: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub follower_count: Option<u64>,
    pub following_count: Option<u64>,
    pub video_count: Option<u64>,
    pub like_count: Option<u64>,
    pub digg_count: Option<u64>,
    pub heart_count: Option<u64>,
    pub friend_count: Option<u64>,
    /// Same units as the popularity label.
    pub historical_mean_popularity: Option<f64>,
}

impl UserProfile {
    /// A profile with every field missing, used when a post references an unknown user.
    pub fn missing(user_id: &str) -> Self {
        UserProfile {
            user_id: user_id.to_string(),
            ..Default::default()
        }
    }

    /// Counts in a fixed order: followers, following, videos, likes, diggs, hearts, friends.
    pub fn counts(&self) -> [Option<u64>; 7] {
        [
            self.follower_count,
            self.following_count,
            self.video_count,
            self.like_count,
            self.digg_count,
            self.heart_count,
            self.friend_count,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub post: PostRecord,
    pub user: UserProfile,
    pub label: f64,
    /// The post's user was absent from the user table.
    pub user_missing: bool,
    /// The post had zero views and the label used [`ZERO_VIEWS_SUBSTITUTE`].
    pub zero_views: bool,
}

/// Normalized popularity `s = log2(r / d) + 1`, with `r = 0` replaced by
/// [`ZERO_VIEWS_SUBSTITUTE`].
pub fn compute_label(raw_views: u64, days_since_publish: f64) -> Result<f64> {
    if !(days_since_publish > 0.0) || !days_since_publish.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-positive days_since_publish: {days_since_publish}"
        )));
    }
    let views = if raw_views == 0 {
        ZERO_VIEWS_SUBSTITUTE
    } else {
        raw_views as f64
    };
    Ok((views / days_since_publish).log2() + 1.0)
}

/// Frame embeddings of one video, `n_frames x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub dim: usize,
    pub values: Vec<f32>,
}

impl Frames {
    pub fn n_frames(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JoinOptions {
    /// Reject posts whose embeddings are missing instead of imputing them later.
    pub strict: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JoinWarnings {
    pub missing_user: usize,
    pub missing_video: usize,
    pub missing_text: usize,
    pub orphan_embedding_ids: usize,
    pub zero_views: usize,
}

/// Joined, labeled examples plus per-post embedding views.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub video: HashMap<String, Frames>,
    pub video_dim: Option<usize>,
    pub text: HashMap<String, Vec<f32>>,
    pub text_dim: Option<usize>,
    pub warnings: JoinWarnings,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// A dataset restricted to the given example indices, embeddings shared by id.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let examples: Vec<LabeledExample> = indices.iter().map(|&i| self.examples[i].clone()).collect();
        let ids: std::collections::HashSet<&str> = examples.iter().map(|e| e.post.post_id.as_str()).collect();
        Dataset {
            video: self
                .video
                .iter()
                .filter(|(k, _)| ids.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            text: self
                .text
                .iter()
                .filter(|(k, _)| ids.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            video_dim: self.video_dim,
            text_dim: self.text_dim,
            warnings: self.warnings.clone(),
            examples,
        }
    }
}

fn group_frames(matrix: &EmbeddingMatrix) -> IndexMap<&str, Vec<usize>> {
    let mut groups: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for (row, id) in matrix.ids.iter().enumerate() {
        groups.entry(id.as_str()).or_default().push(row);
    }
    groups
}

/// Pairs posts with users and embeddings.
///
/// Returns the dataset together with one error per rejected post. Posts are
/// only rejected in strict mode (missing embedding) so
/// `examples + rejected == posts` always holds.
pub fn join_partition(
    posts: &[PostRecord],
    users: &[UserProfile],
    video: Option<&EmbeddingMatrix>,
    text: Option<&EmbeddingMatrix>,
    options: JoinOptions,
) -> Result<(Dataset, Vec<Error>)> {
    let user_index: HashMap<&str, &UserProfile> = users.iter().map(|u| (u.user_id.as_str(), u)).collect();
    let post_ids: std::collections::HashSet<&str> = posts.iter().map(|p| p.post_id.as_str()).collect();

    let mut ds = Dataset::default();

    if let Some(m) = video {
        ds.video_dim = Some(m.cols);
        for (id, rows) in group_frames(m) {
            if !post_ids.contains(id) {
                ds.warnings.orphan_embedding_ids += 1;
                continue;
            }
            let mut values = Vec::with_capacity(rows.len() * m.cols);
            for r in rows {
                values.extend_from_slice(m.row(r));
            }
            ds.video.insert(id.to_string(), Frames { dim: m.cols, values });
        }
    }
    if let Some(m) = text {
        ds.text_dim = Some(m.cols);
        for (id, rows) in group_frames(m) {
            if !post_ids.contains(id) {
                ds.warnings.orphan_embedding_ids += 1;
                continue;
            }
            if rows.len() != 1 {
                return Err(Error::Data(format!(
                    "text embedding for post `{id}` has {} rows, expected 1",
                    rows.len()
                )));
            }
            ds.text.insert(id.to_string(), m.row(rows[0]).to_vec());
        }
    }

    let mut rejected = Vec::new();
    for post in posts {
        if video.is_some() && !ds.video.contains_key(&post.post_id) {
            if options.strict {
                rejected.push(Error::MissingEmbedding {
                    kind: "video",
                    post_id: post.post_id.clone(),
                });
                continue;
            }
            ds.warnings.missing_video += 1;
        }
        if text.is_some() && !ds.text.contains_key(&post.post_id) {
            if options.strict {
                rejected.push(Error::MissingEmbedding {
                    kind: "text",
                    post_id: post.post_id.clone(),
                });
                continue;
            }
            ds.warnings.missing_text += 1;
        }
        let label = compute_label(post.raw_views, post.days_since_publish)?;
        let zero_views = post.raw_views == 0;
        if zero_views {
            ds.warnings.zero_views += 1;
        }
        let (user, user_missing) = match user_index.get(post.user_id.as_str()) {
            Some(u) => ((*u).clone(), false),
            None => {
                ds.warnings.missing_user += 1;
                (UserProfile::missing(&post.user_id), true)
            }
        };
        ds.examples.push(LabeledExample {
            post: post.clone(),
            user,
            label,
            user_missing,
            zero_views,
        });
    }
    if ds.warnings.missing_user > 0 {
        log::warn!(
            "{} posts reference unknown users; using all-missing profiles",
            ds.warnings.missing_user
        );
    }
    Ok((ds, rejected))
}

/// Joins posts, users and embeddings. In strict mode the first post without
/// an embedding is reported as an error.
pub fn join(
    posts: &[PostRecord],
    users: &[UserProfile],
    video: Option<&EmbeddingMatrix>,
    text: Option<&EmbeddingMatrix>,
    options: JoinOptions,
) -> Result<Dataset> {
    let (ds, mut rejected) = join_partition(posts, users, video, text, options)?;
    if rejected.is_empty() {
        Ok(ds)
    } else {
        Err(rejected.swap_remove(0))
    }
}
