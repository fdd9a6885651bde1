//! Run configuration file shared by all subcommands.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::DecoderConfig;
use crate::error::{Error, Result};
use crate::training::{EmbrConfig, ToyTaskSpec, TrainConfig};

/// Decoder to benchmark: a preset name or an explicit config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenchDecoder {
    Preset(String),
    Custom { name: String, config: DecoderConfig },
}

impl BenchDecoder {
    pub fn resolve(&self) -> Result<(String, DecoderConfig)> {
        match self {
            BenchDecoder::Preset(name) => Ok((name.clone(), DecoderConfig::preset(name)?)),
            BenchDecoder::Custom { name, config } => {
                config.validate()?;
                Ok((name.clone(), config.clone()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub runs: usize,
    /// Untimed runs before measuring; `None` means a tenth of `runs`.
    pub warmup: Option<usize>,
    pub seed: u64,
    /// Free-form label of the machine or core the numbers come from.
    pub core_label: String,
    pub decoders: Vec<BenchDecoder>,
    /// Decoder the speedups are measured against.
    pub baseline: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            runs: 10_000,
            warmup: None,
            seed: 0,
            core_label: "cpu".into(),
            decoders: ["LSTM", "Concat2Emb", "Stateless1Emb", "ReducedSmall"]
                .into_iter()
                .map(|n| BenchDecoder::Preset(n.into()))
                .collect(),
            baseline: "LSTM".into(),
        }
    }
}

/// All sections of a run configuration; every section is optional.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub decoder: DecoderConfig,
    pub task: ToyTaskSpec,
    pub train: TrainConfig,
    pub embr: EmbrConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Schema { path, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Checks every section; the first failure names its section.
    pub fn validate(&self) -> Result<()> {
        let tag = |section: &'static str| {
            move |e: Error| match e {
                Error::Config(m) => Error::Schema { path: section.into(), message: m },
                other => other,
            }
        };
        self.decoder.validate().map_err(tag("decoder"))?;
        self.task.validate().map_err(tag("task"))?;
        self.train.validate().map_err(tag("train"))?;
        if self.decoder.vocab_size != self.task.vocab_size {
            return Err(Error::Schema {
                path: "task.vocab_size".into(),
                message: format!(
                    "task vocab_size {} differs from decoder vocab_size {}",
                    self.task.vocab_size, self.decoder.vocab_size
                ),
            });
        }
        if self.embr.beam_width == 0 || self.embr.batch_size == 0 {
            return Err(Error::Schema {
                path: "embr".into(),
                message: "beam_width and batch_size must be positive".into(),
            });
        }
        if self.bench.runs == 0 {
            return Err(Error::Schema { path: "bench.runs".into(), message: "runs must be positive".into() });
        }
        for (i, d) in self.bench.decoders.iter().enumerate() {
            d.resolve().map_err(|e| Error::Schema { path: format!("bench.decoders[{i}]"), message: e.to_string() })?;
        }
        Ok(())
    }
}
