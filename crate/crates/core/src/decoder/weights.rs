use std::collections::BTreeMap;

use serde::Serialize;

use super::config::{DecoderConfig, Variant};
use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};

/// How a tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Gaussian(f64),
    Zeros,
    Ones,
}

/// Static description of one named tensor of a decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
    pub trainable: bool,
    /// Entries that count as parameters (the embedding's pad row does not).
    pub params: usize,
}

impl TensorSpec {
    fn new(name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Self {
        Self { name: name.into(), rows, cols, init, trainable: true, params: rows * cols }
    }
}

fn inv_sqrt(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Every tensor of a decoder in canonical order.
pub fn tensor_specs(cfg: &DecoderConfig) -> Vec<TensorSpec> {
    let d_e = cfg.embed_dim;
    let d_h = cfg.joint_dim;
    let mut specs = Vec::new();

    let mut emb = TensorSpec::new("embedding", cfg.vocab_size + 1, d_e, Init::Gaussian(inv_sqrt(d_e)));
    emb.params = cfg.vocab_size * d_e;
    specs.push(emb);

    match cfg.variant {
        Variant::Reduced => {
            let mut pos = TensorSpec::new(
                "position",
                cfg.heads * cfg.history,
                d_e,
                Init::Gaussian(inv_sqrt(d_e)),
            );
            pos.trainable = cfg.position_trainable;
            specs.push(pos);
            specs.push(TensorSpec::new("proj.weight", d_e, d_e, Init::Gaussian(inv_sqrt(d_e))));
            specs.push(TensorSpec::new("proj.bias", 1, d_e, Init::Gaussian(inv_sqrt(d_e))));
            specs.push(TensorSpec::new("ln.gamma", 1, d_e, Init::Ones));
            specs.push(TensorSpec::new("ln.beta", 1, d_e, Init::Zeros));
        }
        Variant::Lstm => {
            let gates = 4 * cfg.lstm_units;
            for layer in 0..cfg.lstm_layers {
                let input_dim = if layer == 0 { d_e } else { cfg.lstm_proj };
                specs.push(TensorSpec::new(
                    format!("lstm.{layer}.input"),
                    input_dim,
                    gates,
                    Init::Gaussian(inv_sqrt(input_dim)),
                ));
                specs.push(TensorSpec::new(
                    format!("lstm.{layer}.recurrent"),
                    cfg.lstm_proj,
                    gates,
                    Init::Gaussian(inv_sqrt(cfg.lstm_proj)),
                ));
                specs.push(TensorSpec::new(format!("lstm.{layer}.bias"), 1, gates, Init::Zeros));
                specs.push(TensorSpec::new(
                    format!("lstm.{layer}.projection"),
                    cfg.lstm_units,
                    cfg.lstm_proj,
                    Init::Gaussian(inv_sqrt(cfg.lstm_units)),
                ));
            }
        }
        Variant::Stateless1Emb | Variant::Concat2Emb => {}
    }

    let pred_dim = cfg.prediction_dim();
    specs.push(TensorSpec::new("joint.enc", cfg.encoder_dim, d_h, Init::Gaussian(inv_sqrt(cfg.encoder_dim))));
    specs.push(TensorSpec::new("joint.pred", pred_dim, d_h, Init::Gaussian(inv_sqrt(pred_dim))));
    specs.push(TensorSpec::new("joint.bias", 1, d_h, Init::Zeros));
    if !cfg.tied {
        specs.push(TensorSpec::new("out.tokens", cfg.vocab_size, d_h, Init::Gaussian(inv_sqrt(d_h))));
    }
    specs.push(TensorSpec::new("out.blank", 1, d_h, Init::Gaussian(inv_sqrt(d_h))));
    specs.push(TensorSpec::new("out.bias", 1, cfg.num_outputs(), Init::Zeros));
    specs
}

/// Weights of one projected LSTM layer. Gates are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Matrix,
    pub projection: Matrix,
}

/// Non-blank rows of the output layer.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputTokens {
    /// Aliased to the embedding matrix: token `v` uses embedding row `v`.
    Tied,
    /// Independent `|V| × d_h` matrix, one row per token.
    Untied(Matrix),
}

/// All decoder parameters.
///
/// Absent tensors for a variant are stored as empty matrices. The same type
/// doubles as a gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    /// `(|V| + 1) × d_e`; the last row is the start pad and stays zero.
    pub embedding: Matrix,
    /// `(H·N) × d_e`; row `h·N + n` is head `h`'s vector for history slot `n`.
    pub position: Matrix,
    pub proj_weight: Matrix,
    pub proj_bias: Matrix,
    pub ln_gamma: Matrix,
    pub ln_beta: Matrix,
    pub lstm: Vec<LstmLayer>,
    pub joint_enc: Matrix,
    pub joint_pred: Matrix,
    pub joint_bias: Matrix,
    pub out_tokens: OutputTokens,
    pub out_blank: Matrix,
    pub out_bias: Matrix,
}

fn empty() -> Matrix {
    Matrix::zeros(0, 0)
}

impl ModelWeights {
    /// Assembles weights from named tensors, checking every shape against `cfg`.
    pub fn from_tensors(cfg: &DecoderConfig, mut tensors: BTreeMap<String, Matrix>) -> Result<Self> {
        let specs = tensor_specs(cfg);
        let mut take = |name: &str| -> Result<Matrix> {
            let spec = specs
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| Error::Validation(format!("tensor `{name}` not used by this config")))?;
            let m = tensors
                .remove(name)
                .ok_or_else(|| Error::Validation(format!("missing tensor `{name}`")))?;
            if m.rows() != spec.rows || m.cols() != spec.cols {
                return Err(Error::Validation(format!(
                    "tensor `{name}` is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    spec.rows,
                    spec.cols
                )));
            }
            Ok(m)
        };

        let embedding = take("embedding")?;
        let (position, proj_weight, proj_bias, ln_gamma, ln_beta) = if cfg.variant == Variant::Reduced {
            (take("position")?, take("proj.weight")?, take("proj.bias")?, take("ln.gamma")?, take("ln.beta")?)
        } else {
            (empty(), empty(), empty(), empty(), empty())
        };
        let mut lstm = Vec::new();
        if cfg.variant == Variant::Lstm {
            for l in 0..cfg.lstm_layers {
                lstm.push(LstmLayer {
                    input: take(&format!("lstm.{l}.input"))?,
                    recurrent: take(&format!("lstm.{l}.recurrent"))?,
                    bias: take(&format!("lstm.{l}.bias"))?,
                    projection: take(&format!("lstm.{l}.projection"))?,
                });
            }
        }
        let joint_enc = take("joint.enc")?;
        let joint_pred = take("joint.pred")?;
        let joint_bias = take("joint.bias")?;
        let out_tokens =
            if cfg.tied { OutputTokens::Tied } else { OutputTokens::Untied(take("out.tokens")?) };
        let out_blank = take("out.blank")?;
        let out_bias = take("out.bias")?;
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Validation(format!("unexpected tensor `{extra}`")));
        }
        Ok(Self {
            embedding,
            position,
            proj_weight,
            proj_bias,
            ln_gamma,
            ln_beta,
            lstm,
            joint_enc,
            joint_pred,
            joint_bias,
            out_tokens,
            out_blank,
            out_bias,
        })
    }

    /// Random initialization; deterministic in `seed`. The pad row is zeroed.
    pub fn init(cfg: &DecoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SeededRng::new(seed);
        let tensors = tensor_specs(cfg)
            .into_iter()
            .map(|s| {
                let m = match s.init {
                    Init::Gaussian(std) => rng.gaussian_matrix(s.rows, s.cols, std),
                    Init::Zeros => Matrix::zeros(s.rows, s.cols),
                    Init::Ones => {
                        let mut m = Matrix::zeros(s.rows, s.cols);
                        m.fill(1.0);
                        m
                    }
                };
                (s.name, m)
            })
            .collect();
        let mut w = Self::from_tensors(cfg, tensors)?;
        w.embedding.row_mut(cfg.pad_id()).fill(0.0);
        Ok(w)
    }

    /// All-zero weights with the shapes required by `cfg`.
    pub fn zeros(cfg: &DecoderConfig) -> Self {
        let tensors = tensor_specs(cfg)
            .into_iter()
            .map(|s| (s.name, Matrix::zeros(s.rows, s.cols)))
            .collect();
        Self::from_tensors(cfg, tensors).expect("specs agree with themselves")
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, m| m.fill(0.0));
        z
    }

    pub fn is_tied(&self) -> bool {
        matches!(self.out_tokens, OutputTokens::Tied)
    }

    /// Output-layer row for non-blank token `v`.
    #[inline]
    pub fn token_row(&self, v: usize) -> &[f64] {
        match &self.out_tokens {
            OutputTokens::Tied => self.embedding.row(v),
            OutputTokens::Untied(m) => m.row(v),
        }
    }

    #[inline]
    pub fn token_row_mut(&mut self, v: usize) -> &mut [f64] {
        match &mut self.out_tokens {
            OutputTokens::Tied => self.embedding.row_mut(v),
            OutputTokens::Untied(m) => m.row_mut(v),
        }
    }

    /// Present tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![("embedding".into(), &self.embedding)];
        if !self.position.is_empty() || !self.proj_weight.is_empty() {
            out.push(("position".into(), &self.position));
            out.push(("proj.weight".into(), &self.proj_weight));
            out.push(("proj.bias".into(), &self.proj_bias));
            out.push(("ln.gamma".into(), &self.ln_gamma));
            out.push(("ln.beta".into(), &self.ln_beta));
        }
        for (l, layer) in self.lstm.iter().enumerate() {
            out.push((format!("lstm.{l}.input"), &layer.input));
            out.push((format!("lstm.{l}.recurrent"), &layer.recurrent));
            out.push((format!("lstm.{l}.bias"), &layer.bias));
            out.push((format!("lstm.{l}.projection"), &layer.projection));
        }
        out.push(("joint.enc".into(), &self.joint_enc));
        out.push(("joint.pred".into(), &self.joint_pred));
        out.push(("joint.bias".into(), &self.joint_bias));
        if let OutputTokens::Untied(m) = &self.out_tokens {
            out.push(("out.tokens".into(), m));
        }
        out.push(("out.blank".into(), &self.out_blank));
        out.push(("out.bias".into(), &self.out_bias));
        out
    }

    /// Visits present tensors mutably, in canonical order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut Matrix)) {
        f("embedding", &mut self.embedding);
        if !self.position.is_empty() || !self.proj_weight.is_empty() {
            f("position", &mut self.position);
            f("proj.weight", &mut self.proj_weight);
            f("proj.bias", &mut self.proj_bias);
            f("ln.gamma", &mut self.ln_gamma);
            f("ln.beta", &mut self.ln_beta);
        }
        for (l, layer) in self.lstm.iter_mut().enumerate() {
            f(&format!("lstm.{l}.input"), &mut layer.input);
            f(&format!("lstm.{l}.recurrent"), &mut layer.recurrent);
            f(&format!("lstm.{l}.bias"), &mut layer.bias);
            f(&format!("lstm.{l}.projection"), &mut layer.projection);
        }
        f("joint.enc", &mut self.joint_enc);
        f("joint.pred", &mut self.joint_pred);
        f("joint.bias", &mut self.joint_bias);
        if let OutputTokens::Untied(m) = &mut self.out_tokens {
            f("out.tokens", m);
        }
        f("out.blank", &mut self.out_blank);
        f("out.bias", &mut self.out_bias);
    }

    /// Visits pairs of matching tensors of `self` and `other` (same layout).
    pub fn zip_mut(&mut self, other: &ModelWeights, mut f: impl FnMut(&str, &mut Matrix, &Matrix)) {
        let theirs = other.tensors();
        let mut i = 0;
        self.for_each_mut(|name, m| {
            let (oname, o) = &theirs[i];
            assert_eq!(name, oname, "weight layouts differ");
            f(name, m, o);
            i += 1;
        });
        assert_eq!(i, theirs.len(), "weight layouts differ");
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ModelWeights, scale: f64) {
        self.zip_mut(other, |_, a, b| crate::math::axpy(scale, b.data(), a.data_mut()));
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|(_, m)| m.data()).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    /// Checks shapes against `cfg`, the pad row and finiteness.
    pub fn validate(&self, cfg: &DecoderConfig) -> Result<()> {
        cfg.validate()?;
        if self.is_tied() != cfg.tied {
            return Err(Error::Validation("tying of weights disagrees with config".into()));
        }
        let specs = tensor_specs(cfg);
        let present = self.tensors();
        if specs.len() != present.len() {
            return Err(Error::Validation(format!(
                "expected {} tensors, found {}",
                specs.len(),
                present.len()
            )));
        }
        for (spec, (name, m)) in specs.iter().zip(&present) {
            if spec.name != *name || spec.rows != m.rows() || spec.cols != m.cols() {
                return Err(Error::Validation(format!(
                    "tensor `{name}` {}x{} does not match `{}` {}x{}",
                    m.rows(),
                    m.cols(),
                    spec.name,
                    spec.rows,
                    spec.cols
                )));
            }
            if !m.is_finite() {
                return Err(Error::Validation(format!("tensor `{name}` has non-finite entries")));
            }
        }
        if self.embedding.row(cfg.pad_id()).iter().any(|&v| v != 0.0) {
            return Err(Error::Validation("pad embedding row must be zero".into()));
        }
        Ok(())
    }
}

/// Parameter count of one tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TensorCount {
    pub name: String,
    pub shape: [usize; 2],
    pub params: usize,
    pub trainable: bool,
}

/// Per-tensor parameter breakdown of a decoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub tensors: Vec<TensorCount>,
    pub total: usize,
}

/// Exact parameter count of a decoder; the pad row is excluded and frozen
/// position vectors are included (they are stored with the model).
pub fn param_count(cfg: &DecoderConfig) -> ParamCount {
    let tensors: Vec<TensorCount> = tensor_specs(cfg)
        .into_iter()
        .map(|s| TensorCount { shape: [s.rows, s.cols], params: s.params, trainable: s.trainable, name: s.name })
        .collect();
    let total = tensors.iter().map(|t| t.params).sum();
    ParamCount { tensors, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::config::PRESET_NAMES;

    #[test]
    fn tying_saves_exactly_dh_times_vocab() {
        for name in ["ReducedSmall", "ReducedLarge"] {
            let tied = DecoderConfig::preset(name).unwrap();
            let untied = DecoderConfig { tied: false, ..tied.clone() };
            let diff = param_count(&untied).total - param_count(&tied).total;
            assert_eq!(diff, tied.joint_dim * tied.vocab_size);
        }
        let toy = DecoderConfig::toy();
        let untied = DecoderConfig { tied: false, ..toy.clone() };
        assert_eq!(
            param_count(&untied).total - param_count(&toy).total,
            toy.joint_dim * toy.vocab_size
        );
    }

    #[test]
    fn preset_sizes_are_ordered() {
        let totals: Vec<usize> =
            PRESET_NAMES.iter().map(|n| param_count(&DecoderConfig::preset(n).unwrap()).total).collect();
        assert!(totals.windows(2).all(|w| w[0] > w[1]), "{totals:?}");
        let small = *totals.last().unwrap() as f64;
        assert!((small / 1.9e6 - 1.0).abs() <= 0.15, "{small}");
    }

    #[test]
    fn init_is_deterministic_and_pads_zero() {
        let cfg = DecoderConfig::toy();
        let a = ModelWeights::init(&cfg, 9).unwrap();
        let b = ModelWeights::init(&cfg, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.embedding.row(cfg.pad_id()).iter().all(|&v| v == 0.0));
        a.validate(&cfg).unwrap();
        assert_ne!(a, ModelWeights::init(&cfg, 10).unwrap());
    }

    #[test]
    fn position_std_matches_init_scale() {
        let cfg = DecoderConfig { history: 5, heads: 4, ..DecoderConfig::preset("ReducedSmall").unwrap() };
        let cfg = DecoderConfig { vocab_size: 8, ..cfg };
        let w = ModelWeights::init(&cfg, 1).unwrap();
        let d = w.position.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
        let target = 1.0 / 320f64.sqrt();
        assert!((std / target - 1.0).abs() < 0.2, "{std} vs {target}");
    }

    #[test]
    fn tied_token_rows_alias_embedding() {
        let cfg = DecoderConfig::toy();
        let mut w = ModelWeights::init(&cfg, 2).unwrap();
        w.embedding.row_mut(3)[0] = 42.0;
        assert_eq!(w.token_row(3)[0], 42.0);
        w.token_row_mut(1)[2] = -7.0;
        assert_eq!(w.embedding.get(1, 2), -7.0);
    }

    #[test]
    fn from_tensors_rejects_bad_shapes() {
        let cfg = DecoderConfig::toy();
        let w = ModelWeights::zeros(&cfg);
        let mut map: BTreeMap<String, Matrix> =
            w.tensors().into_iter().map(|(n, m)| (n, m.clone())).collect();
        map.insert("joint.bias".into(), Matrix::zeros(1, 3));
        assert!(matches!(ModelWeights::from_tensors(&cfg, map), Err(Error::Validation(_))));
    }
}
