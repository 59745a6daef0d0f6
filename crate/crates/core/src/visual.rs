//! Video features: average-pool frame embeddings, then project the centered
//! pooled vector onto the leading principal axes, `W^T (mean(v_i) - mu)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Frames;
use crate::error::{Error, Result};

/// Default number of retained components.
pub const DEFAULT_PCA_DIM: usize = 64;

/// How many components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaTarget {
    Components(usize),
    /// Smallest number of components whose eigenvalues reach this share of
    /// the total variance.
    ExplainedVariance(f64),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::Components(DEFAULT_PCA_DIM)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub d_in: usize,
    pub d_out: usize,
    pub mean: Vec<f64>,
    /// `d_in x d_out`, row-major, orthonormal columns.
    pub components: Vec<f64>,
    /// Non-increasing, one per retained component.
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn component(&self, k: usize) -> Vec<f64> {
        (0..self.d_in).map(|i| self.components[i * self.d_out + k]).collect()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance <= 0.0 {
            1.0
        } else {
            self.eigenvalues.iter().sum::<f64>() / self.total_variance
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeature {
    pub post_id: String,
    pub vector: Vec<f64>,
}

/// Elementwise mean over a video's frames.
pub fn average_pool(frames: &Frames) -> Result<Vec<f64>> {
    let n = frames.n_frames();
    if n == 0 {
        return Err(Error::Data("cannot pool a video with zero frames".into()));
    }
    let mut acc = vec![0.0f64; frames.dim];
    for i in 0..n {
        for (a, &v) in acc.iter_mut().zip(frames.frame(i)) {
            *a += f64::from(v);
        }
    }
    let inv = n as f64;
    for a in acc.iter_mut() {
        *a /= inv;
    }
    Ok(acc)
}

/// Applies the sign rule: the largest-magnitude entry of every column is
/// positive, ties resolved towards the lowest row index.
fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Eigen-decomposition of the sample covariance, sorted by decreasing
/// eigenvalue (stable for ties) with signs fixed.
fn covariance_eigen(pooled: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let m = pooled.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least 2 rows, got {m}")));
    }
    let d = pooled[0].len();
    if d == 0 || pooled.iter().any(|r| r.len() != d) {
        return Err(Error::SchemaMismatch("PCA rows must share a non-zero width".into()));
    }
    let mut mean = vec![0.0; d];
    for row in pooled {
        for (a, v) in mean.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in mean.iter_mut() {
        *a /= m as f64;
    }
    let centered = DMatrix::from_fn(m, d, |i, j| pooled[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / m as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order
        .iter()
        .map(|&k| {
            let v = eig.eigenvalues[k];
            if v < 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut vectors = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
    fix_signs(&mut vectors);
    Ok((mean, values, vectors))
}

/// Fits PCA on pooled per-video vectors and keeps `d_out` components.
pub fn pca_fit(pooled: &[Vec<f64>], d_out: usize) -> Result<PcaModel> {
    let (mean, values, vectors) = covariance_eigen(pooled)?;
    let d_in = mean.len();
    let max = d_in.min(pooled.len());
    if d_out == 0 || d_out > max {
        return Err(Error::InvalidArgument(format!(
            "d_out must be in 1..={max}, got {d_out}"
        )));
    }
    Ok(build_model(mean, &values, &vectors, d_out))
}

/// Fits PCA with either a fixed dimension (clamped to what the data allows)
/// or an explained-variance target.
pub fn pca_fit_target(pooled: &[Vec<f64>], target: PcaTarget) -> Result<PcaModel> {
    let (mean, values, vectors) = covariance_eigen(pooled)?;
    let max = mean.len().min(pooled.len());
    let d_out = match target {
        PcaTarget::Components(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument("PCA dimension must be >= 1".into()));
            }
            k.min(max)
        }
        PcaTarget::ExplainedVariance(ratio) => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "explained variance ratio must be in (0, 1], got {ratio}"
                )));
            }
            let total: f64 = values.iter().sum();
            let mut acc = 0.0;
            let mut k = 0;
            while k < max {
                acc += values[k];
                k += 1;
                if total <= 0.0 || acc >= ratio * total {
                    break;
                }
            }
            k
        }
    };
    Ok(build_model(mean, &values, &vectors, d_out))
}

fn build_model(mean: Vec<f64>, values: &[f64], vectors: &DMatrix<f64>, d_out: usize) -> PcaModel {
    let d_in = mean.len();
    let mut components = Vec::with_capacity(d_in * d_out);
    for i in 0..d_in {
        for k in 0..d_out {
            components.push(vectors[(i, k)]);
        }
    }
    PcaModel {
        d_in,
        d_out,
        mean,
        components,
        eigenvalues: values[..d_out].to_vec(),
        total_variance: values.iter().sum(),
    }
}

/// `W^T (x - mu)`.
pub fn pca_transform(model: &PcaModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.d_in {
        return Err(Error::SchemaMismatch(format!(
            "PCA expects {} inputs, got {}",
            model.d_in,
            x.len()
        )));
    }
    let mut out = vec![0.0; model.d_out];
    for (i, (&xi, &mi)) in x.iter().zip(&model.mean).enumerate() {
        let c = xi - mi;
        let row = &model.components[i * model.d_out..(i + 1) * model.d_out];
        for (o, w) in out.iter_mut().zip(row) {
            *o += w * c;
        }
    }
    Ok(out)
}

pub fn video_feature(model: &PcaModel, post_id: &str, frames: &Frames) -> Result<VideoFeature> {
    let pooled = average_pool(frames)?;
    Ok(VideoFeature {
        post_id: post_id.to_string(),
        vector: pca_transform(model, &pooled)?,
    })
}
