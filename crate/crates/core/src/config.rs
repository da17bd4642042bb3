//! The JSON experiment record driving `domforge pipeline`. Unknown keys are
//! rejected and every value is checked before any stage runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Source;
use crate::error::{Error, Result};
use crate::mlm::{MaskingConfig, SplitSpec, DEFAULT_CREATED_AT};
use crate::selection::{SelectionKind, SelectionStrategy, DEFAULT_KEEP_FRACTION, DEFAULT_REFERENCE_VOCAB_SIZE};
use crate::vocab::OverlapMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub path: PathBuf,
    #[serde(default = "default_source")]
    pub source: Source,
}

fn default_source() -> Source {
    Source::Other
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub strategy: SelectionKind,
    pub keep_fraction: f64,
    pub reference_vocab_size: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            strategy: SelectionKind::Full,
            keep_fraction: DEFAULT_KEEP_FRACTION,
            reference_vocab_size: DEFAULT_REFERENCE_VOCAB_SIZE,
        }
    }
}

impl SelectionConfig {
    pub fn strategy(&self) -> Result<SelectionStrategy> {
        SelectionStrategy::new(self.strategy, self.keep_fraction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabConfig {
    /// Size of the top-ranked vocabularies compared for overlap.
    pub top_n: usize,
    pub overlap_mode: OverlapMode,
    /// Number of tokens appended to the base vocabulary.
    pub augment_k: usize,
    /// Lowercase before ranking augmentation candidates. Off by default since
    /// tokenizer vocabularies are case-sensitive.
    pub lowercase_augment: bool,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            top_n: 10_000,
            overlap_mode: OverlapMode::Jaccard,
            augment_k: 235,
            lowercase_augment: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskPreviewConfig {
    pub mask_probability: f64,
    pub replace_mask_fraction: f64,
    pub replace_random_fraction: f64,
    pub keep_fraction: f64,
    pub seed: u64,
    /// Sequences rendered in the human-readable preview.
    pub preview_sequences: usize,
    /// Maximum sequence length including the boundary tokens.
    pub max_length: usize,
}

impl Default for MaskPreviewConfig {
    fn default() -> Self {
        let m = MaskingConfig::default();
        MaskPreviewConfig {
            mask_probability: m.mask_probability,
            replace_mask_fraction: m.replace_mask_fraction,
            replace_random_fraction: m.replace_random_fraction,
            keep_fraction: m.keep_fraction,
            seed: 0,
            preview_sequences: 3,
            max_length: 128,
        }
    }
}

impl MaskPreviewConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_length < 3 {
            return Err(Error::invalid("max_length must be at least 3"));
        }
        let probe = MaskingConfig {
            mask_probability: self.mask_probability,
            replace_mask_fraction: self.replace_mask_fraction,
            replace_random_fraction: self.replace_random_fraction,
            keep_fraction: self.keep_fraction,
            vocab_size: 8,
            ..Default::default()
        };
        probe.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<InputSpec>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub base_vocab: Option<PathBuf>,
    /// Downstream task examples used to build the similarity reference.
    #[serde(default)]
    pub task: Option<PathBuf>,
    /// General-domain corpus (JSONL) whose vocabulary is compared for overlap.
    #[serde(default)]
    pub overlap_reference: Option<PathBuf>,
    #[serde(default = "yes")]
    pub dedupe: bool,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub masking: MaskPreviewConfig,
    /// Timestamp recorded in manifests.
    #[serde(default = "default_created_at")]
    pub created_at: String,
}

fn yes() -> bool {
    true
}

fn default_created_at() -> String {
    DEFAULT_CREATED_AT.to_string()
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative_to(dir);
        }
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for input in &mut self.inputs {
            fix(&mut input.path);
        }
        fix(&mut self.out_dir);
        for p in [&mut self.base_vocab, &mut self.task, &mut self.overlap_reference]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::invalid("config: at least one input is required"));
        }
        let strategy = self.selection.strategy()?;
        if strategy.kind.needs_task() && self.task.is_none() {
            return Err(Error::invalid(format!(
                "config: strategy '{}' requires a task file",
                strategy.kind
            )));
        }
        if self.selection.reference_vocab_size == 0 {
            return Err(Error::invalid("config: reference_vocab_size must be at least 1"));
        }
        if self.vocab.top_n == 0 {
            return Err(Error::invalid("config: vocab.top_n must be at least 1"));
        }
        self.split.validate()?;
        self.masking.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"inputs":[{"path":"a.jsonl","source":"news"}],"out_dir":"out"}"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = PipelineConfig::from_json(MINIMAL).unwrap();
        assert!(cfg.dedupe);
        assert_eq!(cfg.selection.keep_fraction, 0.7);
        assert_eq!(cfg.vocab.augment_k, 235);
        assert_eq!(cfg.split.train_fraction, 0.8);
        assert_eq!(cfg.masking.mask_probability, 0.15);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let json = r#"{"inputs":[],"out_dir":"o","bogus":1}"#;
        assert!(PipelineConfig::from_json(json).unwrap_err().is_usage());
        let nested = r#"{"inputs":[{"path":"a"}],"out_dir":"o","split":{"seed":1,"ratio":0.5}}"#;
        assert!(PipelineConfig::from_json(nested).is_err());
    }

    #[test]
    fn sim_without_task_invalid() {
        let json = r#"{"inputs":[{"path":"a"}],"out_dir":"o","selection":{"strategy":"sim"}}"#;
        let cfg = PipelineConfig::from_json(json).unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("task"));
    }

    #[test]
    fn relative_paths_resolve() {
        let mut cfg = PipelineConfig::from_json(MINIMAL).unwrap();
        cfg.resolve_relative_to(Path::new("/data/exp"));
        assert_eq!(cfg.inputs[0].path, Path::new("/data/exp/a.jsonl"));
        assert_eq!(cfg.out_dir, Path::new("/data/exp/out"));
    }
}
