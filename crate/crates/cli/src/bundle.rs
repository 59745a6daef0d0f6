//! The saved model: the fold ensemble plus what it expects of its inputs.

use std::path::Path;

use mvp_core::features::FeatureGroup;
use mvp_core::{Dataset, EnsembleModel, Error};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const BUNDLE_FORMAT: &str = "mvp-ensemble";
pub const BUNDLE_VERSION: u32 = 1;

/// Raw embedding widths the model was trained on; `None` when unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub video_dim: Option<usize>,
    pub text_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub inputs: InputDims,
    pub ensemble: EnsembleModel,
}

/// Combined hash of every member's feature schema.
pub fn ensemble_schema_hash(ensemble: &EnsembleModel) -> String {
    let mut hashes: Vec<String> = ensemble.members.iter().map(|m| m.schema.hash()).collect();
    hashes.dedup();
    hashes.join("+")
}

impl ModelBundle {
    pub fn new(ensemble: EnsembleModel) -> Self {
        let video_dim = ensemble.members.iter().find_map(|m| m.pca.as_ref().map(|p| p.d_in));
        let text_dim = ensemble.members.iter().find_map(|m| {
            m.schema.has_group(FeatureGroup::TextEmbedding).then(|| {
                m.schema
                    .features
                    .iter()
                    .filter(|f| f.group == FeatureGroup::TextEmbedding)
                    .count()
            })
        });
        ModelBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            schema_hash: ensemble_schema_hash(&ensemble),
            inputs: InputDims { video_dim, text_dim },
            ensemble,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn from_json(s: &str) -> CliResult<Self> {
        let b: ModelBundle = serde_json::from_str(s).map_err(|e| CliError::Core(e.into()))?;
        if b.format != BUNDLE_FORMAT || b.version != BUNDLE_VERSION {
            return Err(Error::SchemaMismatch(format!("unsupported model bundle {} v{}", b.format, b.version)).into());
        }
        let actual = ensemble_schema_hash(&b.ensemble);
        if actual != b.schema_hash {
            return Err(Error::SchemaMismatch(format!(
                "bundle records schema {} but its members hash to {actual}",
                b.schema_hash
            ))
            .into());
        }
        Ok(b)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Rejects data whose embeddings do not have the widths the model needs.
    pub fn check_inputs(&self, ds: &Dataset) -> CliResult<()> {
        let check = |what: &str, want: Option<usize>, have: Option<usize>| -> CliResult<()> {
            match (want, have) {
                (Some(w), Some(h)) if w != h => Err(Error::SchemaMismatch(format!(
                    "{what} embeddings have {h} dims, model was trained on {w}"
                ))
                .into()),
                (Some(w), None) => Err(Error::SchemaMismatch(format!(
                    "model was trained on {w}-dim {what} embeddings but none were supplied"
                ))
                .into()),
                _ => Ok(()),
            }
        };
        check("video", self.inputs.video_dim, ds.video_dim)?;
        check("text", self.inputs.text_dim, ds.text_dim)
    }
}
