//! The JSON run configuration. Every field has a default, unknown keys are
//! rejected, and command-line flags are applied on top.

use std::fs;
use std::path::{Path, PathBuf};

use mvp_core::ensemble::Ablation;
use mvp_core::{PipelineConfig, SynthConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub posts: Option<PathBuf>,
    pub users: Option<PathBuf>,
    pub video_embeddings: Option<PathBuf>,
    pub text_embeddings: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            posts: None,
            users: None,
            video_embeddings: None,
            text_embeddings: None,
            out_dir: PathBuf::from("mvp-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// When set, overrides `pipeline.seed`, `pipeline.gbdt.seed` and `synth.seed`.
    pub seed: Option<u64>,
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
    /// Rows of the ablation table, in order.
    pub ablation_groups: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            seed: None,
            pipeline: PipelineConfig::default(),
            synth: SynthConfig::default(),
            ablation_groups: Ablation::all().iter().map(|a| a.name().to_string()).collect(),
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> CliResult<Self> {
        serde_json::from_str(s).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pushes the top-level seed into every seeded component.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.pipeline.seed = s;
            self.pipeline.gbdt.seed = s;
            self.synth.seed = s;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.pipeline.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.synth.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for g in &self.ablation_groups {
            Ablation::parse(g).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// The seed every component actually runs with.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(self.pipeline.seed)
    }

    /// SHA-256 of the canonical JSON with the output directory blanked, so
    /// identical runs into different directories share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&bytes))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
