use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sedmamba_core::complexity::DEFAULT_REFERENCE_LEN;
use sedmamba_core::data::{
    load_annotated_dataset, load_manifest_dataset, synth_generate, Dataset, SplitFile, SynthConfig,
};
use sedmamba_core::model::ModelConfig;
use sedmamba_core::train::TrainConfig;
use sedmamba_core::{Error, Result};

/// One JSON document shared by every subcommand. Sections irrelevant to a
/// command are carried through untouched so the resolved copy written next
/// to the outputs reproduces the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, overrides both `train.seed` and `data.synth.seed`.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub complexity: ComplexityConfig,
}

/// Where training/evaluation sequences come from, in priority order:
/// `manifest`, then `split_file` + `embeddings_dir` + `annotations`, then
/// an in-memory dataset generated from `synth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub native_rate: f64,
    pub sample_rate: f64,
    pub synth: SynthConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            manifest: None,
            split_file: None,
            embeddings_dir: None,
            annotations: None,
            native_rate: 60.0,
            sample_rate: 5.0,
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Final,
    Best,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: EvalSplit,
    pub weights: Weights,
    pub write_probabilities: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: EvalSplit::Test,
            weights: Weights::Final,
            write_probabilities: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityConfig {
    pub reference_len: usize,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            reference_len: DEFAULT_REFERENCE_LEN,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Apply command-line overrides and propagate the top-level seed.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.train.seed = s;
            self.data.synth.seed = s;
        }
        if out.is_some() {
            self.output_dir = out;
        }
        Ok(self)
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.output_dir.as_deref().ok_or_else(|| {
            Error::Config("no output directory: pass --out or set output_dir".into())
        })
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let path = dir.join("resolved_config.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        if let Some(m) = &d.manifest {
            return load_manifest_dataset(m);
        }
        if let Some(split) = &d.split_file {
            let need = |p: &Option<PathBuf>, what: &str| {
                p.clone().ok_or_else(|| {
                    Error::Config(format!("data.split_file is set but data.{what} is missing"))
                })
            };
            let emb = need(&d.embeddings_dir, "embeddings_dir")?;
            let ann = need(&d.annotations, "annotations")?;
            let split = SplitFile::load(split)?;
            return load_annotated_dataset(&split, &emb, &ann, d.native_rate, d.sample_rate);
        }
        Ok(Dataset::from_synth(synth_generate(&d.synth)?))
    }
}
