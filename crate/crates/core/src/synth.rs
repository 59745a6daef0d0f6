//! Seeded synthetic data with the shape of a short-video platform: a few
//! thousand users with long-tailed activity, frame embeddings, and a label
//! built from known per-group effects so every feature group has a planted,
//! removable contribution.
//!
//! `s = intercept + w_u*q + w_v*visual + w_t*tag + w_tau*hour + w_m*duration + noise`
//!
//! where every effect except `q` is standardized to unit variance. Raw
//! views are reconstructed from `s`, so the label formula is the forward path.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal, Zipf};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    compute_label, join, write_embeddings_binary, write_posts_csv, write_users_csv, Dataset, EmbeddingKind,
    EmbeddingMatrix, JoinOptions, PostRecord, UserProfile,
};
use crate::error::{Error, Result};
use crate::preprocess::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalWeights {
    pub user: f64,
    pub visual: f64,
    pub tag: f64,
    pub temporal: f64,
    pub metadata: f64,
}

impl Default for SignalWeights {
    fn default() -> Self {
        SignalWeights {
            user: 1.5,
            visual: 0.5,
            tag: 0.4,
            temporal: 0.3,
            metadata: 0.3,
        }
    }
}

impl SignalWeights {
    pub fn zero() -> Self {
        SignalWeights {
            user: 0.0,
            visual: 0.0,
            tag: 0.0,
            temporal: 0.0,
            metadata: 0.0,
        }
    }

    fn all(&self) -> [f64; 5] {
        [self.user, self.visual, self.tag, self.temporal, self.metadata]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_posts: usize,
    pub n_users: usize,
    pub n_categories: usize,
    pub n_tags: usize,
    pub embedding_dim: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Exponent of the per-user post-count power law.
    pub power_law_exponent: f64,
    pub max_posts_per_user: usize,
    pub weights: SignalWeights,
    pub noise_std: f64,
    pub intercept: f64,
    /// Share of posts whose label is pushed up by 10 to 15.
    pub outlier_fraction: f64,
    /// Share of optional cells left empty.
    pub missing_rate: f64,
    /// Rank of the frame-embedding signal.
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_posts: 6000,
            n_users: 4500,
            n_categories: 120,
            n_tags: 40_000,
            embedding_dim: 256,
            frames_min: 4,
            frames_max: 16,
            power_law_exponent: 1.8,
            max_posts_per_user: 200,
            weights: SignalWeights::default(),
            noise_std: 0.5,
            intercept: 8.0,
            outlier_fraction: 0.0,
            missing_rate: 0.02,
            latent_dim: 16,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_users == 0 || self.n_posts < self.n_users {
            return bad(format!(
                "need n_posts >= n_users >= 1 (every user posts at least once), got {} posts for {} users",
                self.n_posts, self.n_users
            ));
        }
        if self.max_posts_per_user == 0 || self.n_posts > self.n_users * self.max_posts_per_user {
            return bad(format!(
                "{} posts cannot fit {} users capped at {} posts",
                self.n_posts, self.n_users, self.max_posts_per_user
            ));
        }
        if self.weights.all().iter().any(|w| !(*w >= 0.0)) || !(self.noise_std >= 0.0) {
            return bad("signal weights and noise_std must be >= 0".into());
        }
        if self.n_categories == 0 || self.n_tags == 0 || self.embedding_dim == 0 || self.latent_dim == 0 {
            return bad("category, tag, embedding and latent sizes must be >= 1".into());
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return bad(format!("bad frame range {}..={}", self.frames_min, self.frames_max));
        }
        if !(self.power_law_exponent > 1.0) {
            return bad("power_law_exponent must be > 1".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) || !(0.0..=1.0).contains(&self.missing_rate) {
            return bad("outlier_fraction and missing_rate must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// Generative record of one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub post_id: String,
    pub label: f64,
    pub user_quality: f64,
    pub visual: f64,
    pub tag: f64,
    pub temporal: f64,
    pub metadata: f64,
    pub noise: f64,
    pub outlier_shift: f64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub config: SynthConfig,
    pub posts: Vec<PostRecord>,
    pub users: Vec<UserProfile>,
    /// One row per frame, ids repeated.
    pub video: EmbeddingMatrix,
    pub truth: Vec<TruthRow>,
}

/// File names written by [`SynthData::write`].
pub const POSTS_FILE: &str = "posts.csv";
pub const USERS_FILE: &str = "users.csv";
pub const VIDEO_FILE: &str = "video_embeddings.emb";
pub const TRUTH_FILE: &str = "truth.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub posts: PathBuf,
    pub users: PathBuf,
    pub video: PathBuf,
    pub truth: PathBuf,
}

impl SynthPaths {
    pub fn in_dir(dir: &Path) -> Self {
        SynthPaths {
            posts: dir.join(POSTS_FILE),
            users: dir.join(USERS_FILE),
            video: dir.join(VIDEO_FILE),
            truth: dir.join(TRUTH_FILE),
        }
    }
}

impl SynthData {
    pub fn to_dataset(&self) -> Result<Dataset> {
        join(
            &self.posts,
            &self.users,
            Some(&self.video),
            None,
            JoinOptions::default(),
        )
    }

    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths::in_dir(dir);
        write_posts_csv(&paths.posts, &self.posts)?;
        write_users_csv(&paths.users, &self.users)?;
        write_embeddings_binary(&paths.video, &self.video)?;
        let file = File::create(&paths.truth).map_err(|e| Error::io(&paths.truth, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        for row in &self.truth {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(&paths.truth, e))?;
        Ok(paths)
    }
}

/// Unadjusted per-user draws from the truncated power law.
pub fn power_law_draws(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let zipf = Zipf::new(config.max_posts_per_user as f64, config.power_law_exponent)
        .map_err(|e| Error::InvalidArgument(format!("power law: {e}")))?;
    Ok((0..config.n_users).map(|_| zipf.sample(rng) as usize).collect())
}

/// Per-user post counts: power-law draws truncated to `[1, cap]`, then
/// adjusted to sum to `n_posts`. Surplus posts are thinned uniformly over
/// each user's posts beyond the first; a shortfall is filled preferentially.
pub fn post_counts(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let cap = config.max_posts_per_user;
    let mut counts = power_law_draws(config, rng)?;
    let total: usize = counts.iter().sum();
    if total > config.n_posts {
        let mut extra: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(u, &c)| std::iter::repeat_n(u, c - 1))
            .collect();
        let keep = config.n_posts - config.n_users;
        let (chosen, _) = extra.partial_shuffle(rng, keep);
        let mut thinned = vec![1; config.n_users];
        for &u in chosen.iter() {
            thinned[u] += 1;
        }
        counts = thinned;
    } else {
        let mut missing = config.n_posts - total;
        while missing > 0 {
            let weights: Vec<(usize, usize)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c < cap)
                .map(|(u, &c)| (u, c))
                .collect();
            let &(u, _) = weights
                .choose_weighted(rng, |&(_, c)| c as f64)
                .map_err(|e| Error::InvalidArgument(format!("cannot place posts: {e}")))?;
            counts[u] += 1;
            missing -= 1;
        }
    }
    Ok(counts)
}

const LANGUAGES: [&str; 8] = ["en", "es", "pt", "id", "ja", "ko", "fr", "de"];
const LOCATIONS: [&str; 10] = ["US", "BR", "ID", "JP", "KR", "MX", "FR", "DE", "GB", "IN"];
const FORMATS: [(&str, u32, u32); 3] = [
    ("vertical", 1080, 1920),
    ("horizontal", 1920, 1080),
    ("square", 1080, 1080),
];
const START_TS: i64 = 1_672_531_200;
const DURATION_RANGE: (f64, f64) = (5.0, 180.0);

fn lognormal_count(rng: &mut ChaCha8Rng, mu: f64, sigma: f64) -> u64 {
    LogNormal::new(mu, sigma).expect("valid sigma").sample(rng).round() as u64
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n).map(|_| format!("w{}", rng.random_range(0..300))).collect()
}

/// Generates a dataset. Identical configs give identical output.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let counts = post_counts(config, &mut rng)?;
    let maybe = |rng: &mut ChaCha8Rng| rng.random::<f64>() >= config.missing_rate;

    let quality: Vec<f64> = (0..config.n_users).map(|_| rng.sample(StandardNormal)).collect();
    let mut users = Vec::with_capacity(config.n_users);
    for (u, (&q, &c)) in quality.iter().zip(&counts).enumerate() {
        let mut p = UserProfile {
            user_id: format!("u{u:05}"),
            follower_count: Some(lognormal_count(&mut rng, 6.0 + 1.2 * q, 0.8)),
            following_count: Some(lognormal_count(&mut rng, 5.0 + 0.2 * q, 1.0)),
            video_count: Some(c as u64 + lognormal_count(&mut rng, 2.5, 1.0)),
            like_count: Some(lognormal_count(&mut rng, 8.0 + 1.4 * q, 1.0)),
            digg_count: Some(lognormal_count(&mut rng, 4.0 + 0.3 * q, 1.2)),
            heart_count: Some(lognormal_count(&mut rng, 8.5 + 1.3 * q, 0.9)),
            friend_count: Some(lognormal_count(&mut rng, 3.0 + 0.4 * q, 1.0)),
            historical_mean_popularity: Some(
                config.intercept + config.weights.user * q + 0.5 * rng.sample::<f64, _>(StandardNormal),
            ),
        };
        for slot in [
            &mut p.follower_count,
            &mut p.following_count,
            &mut p.like_count,
            &mut p.digg_count,
            &mut p.heart_count,
            &mut p.friend_count,
        ] {
            if !maybe(&mut rng) {
                *slot = None;
            }
        }
        if !maybe(&mut rng) {
            p.historical_mean_popularity = None;
        }
        users.push(p);
    }

    let mut owner: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(u, &c)| std::iter::repeat_n(u, c))
        .collect();
    owner.shuffle(&mut rng);

    let dim = config.embedding_dim;
    let latent = config.latent_dim;
    let mixing: Vec<f64> = (0..dim * latent).map(|_| rng.sample(StandardNormal)).collect();
    let mut direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|x| *x /= norm);
    let tag_effect: Vec<f64> = (0..config.n_tags).map(|_| rng.sample(StandardNormal)).collect();
    let tag_zipf = Zipf::new(config.n_tags as f64, 1.05).expect("valid tag law");
    let cat_zipf = Zipf::new(config.n_categories as f64, 1.0).expect("valid category law");
    let music_zipf = Zipf::new(2000.0, 1.2).expect("valid music law");
    let frame_noise = Normal::new(0.0, 0.3).expect("valid std");

    let n = config.n_posts;
    let mut posts = Vec::with_capacity(n);
    let mut ids = Vec::new();
    let mut values: Vec<f32> = Vec::new();
    let (mut visual, mut tag, mut temporal, mut metadata) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (i, &u) in owner.iter().enumerate() {
        let post_id = format!("p{i:06}");
        let z: Vec<f64> = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
        let content: Vec<f64> = (0..dim)
            .map(|r| (0..latent).map(|k| mixing[r * latent + k] * z[k]).sum())
            .collect();
        let n_frames = rng.random_range(config.frames_min..=config.frames_max);
        let mut pooled = vec![0.0; dim];
        for _ in 0..n_frames {
            for (r, c) in content.iter().enumerate() {
                let v = (c + frame_noise.sample(&mut rng)) as f32;
                pooled[r] += f64::from(v) / n_frames as f64;
                values.push(v);
            }
            ids.push(post_id.clone());
        }
        visual.push(direction.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>());

        let n_post_tags = rng.random_range(1..=4);
        let mut tags: Vec<usize> = (0..n_post_tags)
            .map(|_| tag_zipf.sample(&mut rng) as usize - 1)
            .collect();
        tags.sort_unstable();
        tags.dedup();
        tag.push(tags.iter().map(|&t| tag_effect[t]).sum::<f64>() / tags.len() as f64);

        let post_timestamp = START_TS + rng.random_range(0..365 * 86_400);
        let hour = ((post_timestamp % 86_400) / 3600) as f64;
        temporal.push(std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * (hour - 6.0) / 24.0).sin());

        let (lo, hi) = (DURATION_RANGE.0.ln(), DURATION_RANGE.1.ln());
        let log_duration = rng.random_range(lo..hi);
        metadata.push((log_duration - (lo + hi) / 2.0) / ((hi - lo) / 12f64.sqrt()));
        let duration = (log_duration.exp() * 10.0).round() / 10.0;

        let (format, w, h) = *FORMATS.choose(&mut rng).expect("non-empty");
        let n_words = rng.random_range(3..=15);
        let n_keywords = rng.random_range(0..=5);
        let category = format!("cat{:03}", cat_zipf.sample(&mut rng) as usize);
        let music = format!("m{:04}", music_zipf.sample(&mut rng) as usize);
        let location = *LOCATIONS.choose(&mut rng).expect("non-empty");
        let language = *LANGUAGES.choose(&mut rng).expect("non-empty");
        let keep = [maybe(&mut rng), maybe(&mut rng), maybe(&mut rng)];
        posts.push(PostRecord {
            post_id,
            user_id: users[u].user_id.clone(),
            raw_views: 0,
            days_since_publish: rng.random_range(1.0..365.0),
            post_timestamp,
            category: Some(category),
            language: Some(language.to_string()),
            location: keep[0].then(|| location.to_string()),
            video_format: Some(format.to_string()),
            music_id: keep[1].then_some(music),
            duration_s: keep[2].then_some(duration),
            width_px: Some(w),
            height_px: Some(h),
            caption: words(&mut rng, n_words).join(" "),
            suggested_keywords: words(&mut rng, n_keywords),
            tags: tags.iter().map(|t| format!("tag{t}")).collect(),
        });
    }
    standardize(&mut visual);
    standardize(&mut tag);

    let mut outlier = vec![false; n];
    let n_out = (config.outlier_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_out] {
        outlier[i] = true;
    }

    let w = config.weights;
    let mut truth = Vec::with_capacity(n);
    for (i, post) in posts.iter_mut().enumerate() {
        let q = quality[owner[i]];
        let noise = config.noise_std * rng.sample::<f64, _>(StandardNormal);
        let shift = if outlier[i] { rng.random_range(10.0..15.0) } else { 0.0 };
        let s = config.intercept
            + w.user * q
            + w.visual * visual[i]
            + w.tag * tag[i]
            + w.temporal * temporal[i]
            + w.metadata * metadata[i]
            + noise
            + shift;
        let (views, days) = views_for_label(s, post.days_since_publish)?;
        post.raw_views = views;
        post.days_since_publish = days;
        let label = compute_label(views, days)?;
        debug_assert!((label - s).abs() < 1e-9);
        truth.push(TruthRow {
            post_id: post.post_id.clone(),
            label,
            user_quality: q,
            visual: visual[i],
            tag: tag[i],
            temporal: temporal[i],
            metadata: metadata[i],
            noise,
            outlier_shift: shift,
        });
    }

    let video = EmbeddingMatrix::new(EmbeddingKind::VideoFrames, ids, dim, values)?;
    Ok(SynthData {
        config: config.clone(),
        posts,
        users,
        video,
        truth,
    })
}

/// Integer views and adjusted days with `log2(views / days) + 1 == s`:
/// views are rounded from `d * 2^(s-1)` and the days recomputed from them.
pub fn views_for_label(s: f64, days: f64) -> Result<(u64, f64)> {
    let rate = (s - 1.0).exp2();
    let raw = days * rate;
    if !raw.is_finite() || raw > 1e15 {
        return Err(Error::InvalidArgument(format!(
            "label {s} gives an unrepresentable view count"
        )));
    }
    let views = (raw.round() as u64).max(1);
    Ok((views, views as f64 / rate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub n_posts: usize,
    pub n_users: usize,
    /// Users per post count.
    pub post_count_histogram: BTreeMap<usize, usize>,
    pub max_post_count: usize,
    pub label_mean: f64,
    pub label_std: f64,
    /// Q1, median, Q3.
    pub label_quartiles: [f64; 3],
    /// Maximum-likelihood power-law exponent of the post counts.
    pub power_law_exponent: f64,
}

/// Post counts per user, in `users` order.
pub fn user_post_counts(posts: &[PostRecord], users: &[UserProfile]) -> Vec<usize> {
    let mut by_id: BTreeMap<&str, usize> = users.iter().map(|u| (u.user_id.as_str(), 0)).collect();
    for p in posts {
        if let Some(c) = by_id.get_mut(p.user_id.as_str()) {
            *c += 1;
        }
    }
    users.iter().map(|u| by_id[u.user_id.as_str()]).collect()
}

pub fn describe(posts: &[PostRecord], users: &[UserProfile], max_count: usize) -> Result<SynthSummary> {
    let counts = user_post_counts(posts, users);
    let mut hist = BTreeMap::new();
    for &c in &counts {
        *hist.entry(c).or_insert(0) += 1;
    }
    let mut labels = posts
        .iter()
        .map(|p| compute_label(p.raw_views, p.days_since_publish))
        .collect::<Result<Vec<_>>>()?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no posts to describe".into()));
    }
    let n = labels.len() as f64;
    let mean = labels.iter().sum::<f64>() / n;
    let std = (labels.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    labels.sort_by(f64::total_cmp);
    let positive: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    Ok(SynthSummary {
        n_posts: posts.len(),
        n_users: users.len(),
        max_post_count: counts.iter().copied().max().unwrap_or(0),
        post_count_histogram: hist,
        label_mean: mean,
        label_std: std,
        label_quartiles: [
            quantile_sorted(&labels, 0.25),
            quantile_sorted(&labels, 0.5),
            quantile_sorted(&labels, 0.75),
        ],
        power_law_exponent: fit_power_law_exponent(&positive, max_count.max(1)),
    })
}

/// Maximum-likelihood exponent of a discrete power law on `[1, max]`.
///
/// Solves `E_alpha[ln k] = mean(ln c)` by bisection; the left side is
/// decreasing in `alpha`.
pub fn fit_power_law_exponent(counts: &[usize], max: usize) -> f64 {
    if counts.is_empty() {
        return f64::NAN;
    }
    let target = counts.iter().map(|&c| (c as f64).ln()).sum::<f64>() / counts.len() as f64;
    let expected_log = |alpha: f64| {
        let (mut z, mut s) = (0.0, 0.0);
        for k in 1..=max {
            let w = (k as f64).powf(-alpha);
            z += w;
            s += w * (k as f64).ln();
        }
        s / z
    };
    let (mut lo, mut hi) = (1e-6, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_log(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Writes a config summary to `w` as pretty JSON.
pub fn write_summary<W: Write>(summary: &SynthSummary, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w).map_err(|e| Error::io("<summary>", e))
}
