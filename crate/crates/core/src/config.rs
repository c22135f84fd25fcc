//! One JSON document configuring every pipeline stage.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapt::{FinetuneConfig, ProjectionMode};
use crate::assign::PoolConfig;
use crate::datagen::GenConfig;
use crate::error::{Error, Result};
use crate::eval::Condition;
use crate::protomodel::ModelConfig;
use crate::ssl::SslConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssignConfig {
    /// Slots per label (`M`).
    pub per_label: usize,
    pub balance: bool,
    pub pool: PoolConfig,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            per_label: 2,
            balance: true,
            pool: PoolConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub mode: ProjectionMode,
    /// Skip grounding the supervised source bank before transfer.
    pub no_proj: bool,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            mode: ProjectionMode::LabelSupervised,
            no_proj: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Inverse L2 strength.
    pub c: f64,
    /// Labeled target samples used by the single-path stages; `null` uses
    /// the whole training split.
    pub train_size: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            c: 0.0005,
            train_size: None,
        }
    }
}

/// Supervised prototype training on the pretraining corpus's motif labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub finetune: FinetuneConfig,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            finetune: FinetuneConfig {
                max_epochs: 10,
                ..FinetuneConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub conditions: Vec<Condition>,
    /// Nested training subset sizes, largest first.
    pub sizes: Vec<usize>,
    /// Extra seeds beyond `--seed`; each regenerates data and pretrains.
    pub extra_seeds: Vec<u64>,
    pub bootstrap: usize,
    pub source: SourceConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            conditions: Condition::ALL.to_vec(),
            sizes: vec![1024, 512, 256, 128, 64],
            extra_seeds: Vec::new(),
            bootstrap: 1000,
            source: SourceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub prototypes: usize,
    pub labels: usize,
    pub per_label: usize,
    pub samples: usize,
    pub dim: usize,
    pub replicates: usize,
    pub pool: PoolConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            prototypes: 1000,
            labels: 12,
            per_label: 14,
            samples: 10000,
            dim: 32,
            replicates: 5,
            pool: PoolConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub gen: GenConfig,
    pub model: ModelConfig,
    pub pretrain: SslConfig,
    pub assign: AssignConfig,
    pub finetune: FinetuneConfig,
    pub project: ProjectConfig,
    pub probe: ProbeConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
}

fn bad<T>(path: &str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        path: path.into(),
        msg: msg.into(),
    })
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Slot capacity is checked against the model only; the supervised
    /// source bank is sized from it.
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate("finetune")?;
        self.eval.source.finetune.validate("eval.source.finetune")?;
        let m = &self.model;
        if m.hidden == 0 || m.embed_dim == 0 {
            return bad("model.hidden", "layer widths must be >= 1");
        }
        if m.num_prototypes < 2 {
            return bad("model.num_prototypes", "need at least 2 prototypes");
        }
        if self.assign.per_label == 0 {
            return bad("assign.per_label", "must be >= 1");
        }
        let slots = self.gen.labels * self.assign.per_label;
        if slots > m.num_prototypes {
            return Err(Error::Capacity {
                labels: self.gen.labels,
                per_label: self.assign.per_label,
                slots,
                prototypes: m.num_prototypes,
            });
        }
        if !(self.probe.c > 0.0) {
            return bad("probe.c", "must be > 0");
        }
        if let Some(n) = self.probe.train_size {
            if n < self.gen.labels || n > self.gen.train {
                return bad("probe.train_size", format!("must be in {}..={}", self.gen.labels, self.gen.train));
            }
        }
        if self.eval.sizes.is_empty() {
            return bad("eval.sizes", "at least one size");
        }
        if self.eval.sizes.windows(2).any(|w| w[0] <= w[1]) {
            return bad("eval.sizes", "must be strictly descending");
        }
        if self.eval.sizes[0] > self.gen.train || *self.eval.sizes.last().unwrap() < self.gen.labels {
            return bad("eval.sizes", format!("sizes must lie in {}..={}", self.gen.labels, self.gen.train));
        }
        if self.eval.bootstrap == 0 {
            return bad("eval.bootstrap", "must be >= 1");
        }
        let b = &self.bench;
        if b.labels * b.per_label > b.prototypes {
            return Err(Error::Capacity {
                labels: b.labels,
                per_label: b.per_label,
                slots: b.labels * b.per_label,
                prototypes: b.prototypes,
            });
        }
        if b.samples < 2 || b.dim == 0 || b.replicates == 0 {
            return bad("bench", "samples >= 2, dim >= 1 and replicates >= 1 required");
        }
        Ok(())
    }

    /// Slots per label of the supervised source bank.
    pub fn source_per_label(&self, source_labels: usize) -> usize {
        (self.model.num_prototypes / source_labels.max(1)).max(1)
    }
}
