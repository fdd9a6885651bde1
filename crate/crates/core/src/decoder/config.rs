use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction-network architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Multi-head position-vector averaging of the last N embeddings, followed
    /// by a projection, LayerNorm and Swish.
    Reduced,
    /// Embedding of the single previous label.
    Stateless1Emb,
    /// Concatenated embeddings of the two previous labels.
    Concat2Emb,
    /// Stacked projected LSTM over the full label history.
    #[serde(rename = "LSTM")]
    Lstm,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Reduced => "Reduced",
            Variant::Stateless1Emb => "Stateless1Emb",
            Variant::Concat2Emb => "Concat2Emb",
            Variant::Lstm => "LSTM",
        }
    }

    /// Whether the prediction output depends only on the last `history` labels.
    pub fn has_finite_context(self) -> bool {
        !matches!(self, Variant::Lstm)
    }
}

/// Hyperparameters of a transducer decoder (prediction + joint network).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub variant: Variant,
    /// Number of non-blank output tokens. Blank is output index `vocab_size`.
    pub vocab_size: usize,
    /// Embedding dimension.
    pub embed_dim: usize,
    /// Width of the joint network's last hidden layer.
    pub joint_dim: usize,
    /// Width of the encoder frames fed to the joint network.
    pub encoder_dim: usize,
    /// Number of previous non-blank labels conditioning the prediction network.
    pub history: usize,
    /// Number of position-vector heads (Reduced only).
    pub heads: usize,
    /// Share the embedding matrix with the non-blank rows of the output layer.
    pub tied: bool,
    /// Train the position vectors instead of keeping them at their random init.
    pub position_trainable: bool,
    pub lstm_layers: usize,
    pub lstm_units: usize,
    pub lstm_proj: usize,
    pub max_symbols_per_frame: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::toy()
    }
}

/// Full-size reference presets, largest first.
pub const PRESET_NAMES: [&str; 5] =
    ["LSTM", "ReducedLarge", "Concat2Emb", "Stateless1Emb", "ReducedSmall"];

impl DecoderConfig {
    /// Small Reduced decoder used by the synthetic task.
    pub fn toy() -> Self {
        Self {
            variant: Variant::Reduced,
            vocab_size: 6,
            embed_dim: 16,
            joint_dim: 16,
            encoder_dim: 16,
            history: 3,
            heads: 2,
            tied: true,
            position_trainable: false,
            lstm_layers: 1,
            lstm_units: 16,
            lstm_proj: 16,
            max_symbols_per_frame: 10,
        }
    }

    /// Full-scale decoder definitions with a 4096-token vocabulary and a
    /// 512-wide encoder output.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            variant: Variant::Reduced,
            vocab_size: 4096,
            embed_dim: 320,
            joint_dim: 320,
            encoder_dim: 512,
            history: 5,
            heads: 4,
            tied: true,
            position_trainable: false,
            lstm_layers: 0,
            lstm_units: 0,
            lstm_proj: 0,
            max_symbols_per_frame: 10,
        };
        let cfg = match name {
            "ReducedSmall" => base,
            "ReducedLarge" => Self { embed_dim: 1280, joint_dim: 1280, history: 2, ..base },
            "Stateless1Emb" => Self {
                variant: Variant::Stateless1Emb,
                embed_dim: 640,
                joint_dim: 640,
                history: 1,
                heads: 1,
                tied: false,
                ..base
            },
            "Concat2Emb" => Self {
                variant: Variant::Concat2Emb,
                embed_dim: 640,
                joint_dim: 640,
                history: 2,
                heads: 1,
                tied: false,
                ..base
            },
            "LSTM" => Self {
                variant: Variant::Lstm,
                embed_dim: 128,
                joint_dim: 640,
                history: 1,
                heads: 1,
                tied: false,
                lstm_layers: 2,
                lstm_units: 2048,
                lstm_proj: 640,
                ..base
            },
            other => return Err(Error::Config(format!("unknown decoder preset `{other}`"))),
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.vocab_size < 2 {
            return fail(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.embed_dim == 0 || self.joint_dim == 0 || self.encoder_dim == 0 {
            return fail("embed_dim, joint_dim and encoder_dim must be positive".into());
        }
        if self.history == 0 {
            return fail("history must be >= 1".into());
        }
        if self.heads == 0 {
            return fail("heads must be >= 1".into());
        }
        if self.max_symbols_per_frame == 0 {
            return fail("max_symbols_per_frame must be >= 1".into());
        }
        if self.tied && self.embed_dim != self.joint_dim {
            return fail(format!(
                "tied decoder needs embed_dim == joint_dim, got {} and {}",
                self.embed_dim, self.joint_dim
            ));
        }
        match self.variant {
            Variant::Stateless1Emb if self.history != 1 => {
                fail(format!("Stateless1Emb needs history 1, got {}", self.history))
            }
            Variant::Concat2Emb if self.history != 2 => {
                fail(format!("Concat2Emb needs history 2, got {}", self.history))
            }
            Variant::Lstm
                if self.lstm_layers == 0 || self.lstm_units == 0 || self.lstm_proj == 0 =>
            {
                fail("LSTM needs positive lstm_layers, lstm_units and lstm_proj".into())
            }
            _ => Ok(()),
        }
    }

    /// Embedding-table id of the start-of-utterance pad token.
    #[inline]
    pub fn pad_id(&self) -> usize {
        self.vocab_size
    }

    /// Output index of the blank symbol.
    #[inline]
    pub fn blank_id(&self) -> usize {
        self.vocab_size
    }

    /// Number of output logits, vocabulary plus blank.
    #[inline]
    pub fn num_outputs(&self) -> usize {
        self.vocab_size + 1
    }

    /// Dimension of the prediction network output `g_u`.
    pub fn prediction_dim(&self) -> usize {
        match self.variant {
            Variant::Reduced | Variant::Stateless1Emb => self.embed_dim,
            Variant::Concat2Emb => 2 * self.embed_dim,
            Variant::Lstm => self.lstm_proj,
        }
    }
}
