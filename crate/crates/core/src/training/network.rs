//! Toy encoder, joint evaluation over the whole lattice and the matching
//! backward pass into every trainable tensor.

use super::loss::{transducer_loss, TransducerLoss};
use crate::decode::EncoderFrames;
use crate::decoder::{DecoderModel, ModelWeights, PredictionCache};
use crate::error::{Error, Result};
use crate::math::{add_assign, outer_acc, Matrix, SeededRng};

/// Per-frame affine map from features to encoder frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyEncoder {
    /// `d_feat × d_enc`
    pub weight: Matrix,
    /// `1 × d_enc`
    pub bias: Matrix,
}

impl ToyEncoder {
    pub fn zeros(feature_dim: usize, encoder_dim: usize) -> Self {
        Self { weight: Matrix::zeros(feature_dim, encoder_dim), bias: Matrix::zeros(1, encoder_dim) }
    }

    /// Gaussian weights with standard deviation `1/sqrt(d_feat)`, zero bias.
    pub fn init(feature_dim: usize, encoder_dim: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let std = 1.0 / (feature_dim.max(1) as f64).sqrt();
        Self { weight: rng.gaussian_matrix(feature_dim, encoder_dim, std), bias: Matrix::zeros(1, encoder_dim) }
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn encoder_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn encode(&self, features: &Matrix) -> Result<EncoderFrames> {
        if features.cols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "features have {} dims, encoder expects {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        let mut frames = Matrix::zeros(features.rows(), self.encoder_dim());
        for t in 0..features.rows() {
            let row = frames.row_mut(t);
            row.copy_from_slice(self.bias.row(0));
            crate::math::vec_mat_acc(features.row(t), &self.weight, row);
        }
        EncoderFrames::new(frames)
    }

    /// Accumulates parameter gradients into `grads` given `∂L/∂frames`.
    pub fn backward(&self, features: &Matrix, d_frames: &Matrix, grads: &mut ToyEncoder) {
        for t in 0..features.rows() {
            outer_acc(&mut grads.weight, features.row(t), d_frames.row(t));
            add_assign(grads.bias.row_mut(0), d_frames.row(t));
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.feature_dim(), self.encoder_dim())
    }

    pub fn add_scaled(&mut self, other: &ToyEncoder, scale: f64) {
        crate::math::axpy(scale, other.weight.data(), self.weight.data_mut());
        crate::math::axpy(scale, other.bias.data(), self.bias.data_mut());
    }

    pub fn squared_norm(&self) -> f64 {
        self.weight.data().iter().chain(self.bias.data()).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.is_finite()
    }
}

/// Toy encoder plus decoder: the unit that gets trained.
#[derive(Clone, Debug, PartialEq)]
pub struct Transducer {
    pub encoder: ToyEncoder,
    pub decoder: DecoderModel,
}

/// Gradient buffer matching a [`Transducer`].
#[derive(Clone, Debug, PartialEq)]
pub struct TransducerGrads {
    pub encoder: ToyEncoder,
    pub decoder: ModelWeights,
}

impl TransducerGrads {
    pub fn zeros_for(model: &Transducer) -> Self {
        Self { encoder: model.encoder.zeros_like(), decoder: model.decoder.weights.zeros_like() }
    }

    pub fn add_scaled(&mut self, other: &TransducerGrads, scale: f64) {
        self.encoder.add_scaled(&other.encoder, scale);
        self.decoder.add_scaled(&other.decoder, scale);
    }

    pub fn squared_norm(&self) -> f64 {
        self.encoder.squared_norm() + self.decoder.squared_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.encoder.is_finite() && self.decoder.is_finite()
    }
}

impl Transducer {
    pub fn new(encoder: ToyEncoder, decoder: DecoderModel) -> Result<Self> {
        if encoder.encoder_dim() != decoder.config.encoder_dim {
            return Err(Error::Shape(format!(
                "encoder emits {} dims, decoder expects {}",
                encoder.encoder_dim(),
                decoder.config.encoder_dim
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn encode(&self, features: &Matrix) -> Result<EncoderFrames> {
        self.encoder.encode(features)
    }

    /// `−log P(labels | features)` and its gradient, scaled by `scale` and
    /// added into `grads`.
    pub fn accumulate_gradient(
        &self,
        features: &Matrix,
        labels: &[usize],
        scale: f64,
        grads: &mut TransducerGrads,
    ) -> Result<f64> {
        let enc = self.encode(features)?;
        let fwd = LatticeForward::run(&self.decoder, &enc, labels)?;
        let mut out = transducer_loss(&fwd.logits, labels)?;
        if scale != 1.0 {
            for m in &mut out.d_logits {
                m.scale(scale);
            }
        }
        let d_frames = backprop_decoder(&self.decoder, &fwd, &out.d_logits, &mut grads.decoder)?;
        self.encoder.backward(features, &d_frames, &mut grads.encoder);
        Ok(out.loss)
    }

    /// `−log P(labels | features)` without gradients.
    pub fn loss(&self, features: &Matrix, labels: &[usize]) -> Result<f64> {
        let enc = self.encode(features)?;
        Ok(sequence_loss(&self.decoder, &enc, labels)?.loss)
    }
}

/// Activations of the joint network at every lattice node.
#[derive(Clone, Debug)]
pub struct LatticeForward {
    pub frames: Matrix,
    pub enc_proj: Vec<Vec<f64>>,
    pub pred_outputs: Vec<Vec<f64>>,
    pub pred_proj: Vec<Vec<f64>>,
    pub pred_cache: PredictionCache,
    /// `hidden[t][u]`
    pub hidden: Vec<Vec<Vec<f64>>>,
    /// `logits[t]` is `(U+1) × (|V|+1)`.
    pub logits: Vec<Matrix>,
}

impl LatticeForward {
    pub fn run(model: &DecoderModel, enc: &EncoderFrames, labels: &[usize]) -> Result<Self> {
        let (pred_outputs, pred_cache) = model.predict_sequence(labels)?;
        let pred_proj = pred_outputs.iter().map(|g| model.project_prediction(g)).collect::<Result<Vec<_>>>()?;
        let enc_proj = (0..enc.len()).map(|t| model.project_encoder(enc.frame(t))).collect::<Result<Vec<_>>>()?;
        let outputs = model.config.num_outputs();
        let mut hidden = Vec::with_capacity(enc.len());
        let mut logits = Vec::with_capacity(enc.len());
        for a in &enc_proj {
            let mut hs = Vec::with_capacity(pred_proj.len());
            let mut m = Matrix::zeros(pred_proj.len(), outputs);
            for (u, b) in pred_proj.iter().enumerate() {
                let h = model.joint_hidden(a, b);
                m.row_mut(u).copy_from_slice(&model.output_logits(&h));
                hs.push(h);
            }
            hidden.push(hs);
            logits.push(m);
        }
        Ok(Self { frames: enc.matrix().clone(), enc_proj, pred_outputs, pred_proj, pred_cache, hidden, logits })
    }
}

/// Transducer loss of `labels` for a decoder on given encoder frames.
pub fn sequence_loss(model: &DecoderModel, enc: &EncoderFrames, labels: &[usize]) -> Result<TransducerLoss> {
    let fwd = LatticeForward::run(model, enc, labels)?;
    transducer_loss(&fwd.logits, labels)
}

/// Chains `∂L/∂logits` through the joint and prediction networks, adding
/// into `grads`. Returns `∂L/∂frames`.
pub fn backprop_decoder(
    model: &DecoderModel,
    fwd: &LatticeForward,
    d_logits: &[Matrix],
    grads: &mut ModelWeights,
) -> Result<Matrix> {
    let frames = fwd.hidden.len();
    let nodes = fwd.pred_outputs.len();
    if d_logits.len() != frames || d_logits.iter().any(|m| m.rows() != nodes) {
        return Err(Error::State("logit gradient does not match the cached forward pass".into()));
    }
    let d_h = model.config.joint_dim;
    let mut d_enc_proj = vec![vec![0.0; d_h]; frames];
    let mut d_pred_proj = vec![vec![0.0; d_h]; nodes];
    for t in 0..frames {
        for u in 0..nodes {
            let d_pre = model.backprop_output(&fwd.hidden[t][u], d_logits[t].row(u), grads);
            add_assign(&mut d_enc_proj[t], &d_pre);
            add_assign(&mut d_pred_proj[u], &d_pre);
        }
    }
    let mut d_frames = Matrix::zeros(frames, model.config.encoder_dim);
    for t in 0..frames {
        let d = model.backprop_encoder_projection(fwd.frames.row(t), &d_enc_proj[t], grads);
        d_frames.row_mut(t).copy_from_slice(&d);
    }
    let d_g = fwd
        .pred_outputs
        .iter()
        .zip(&d_pred_proj)
        .map(|(g, d)| model.backprop_prediction_projection(g, d, grads))
        .collect::<Vec<_>>();
    model.backprop_prediction(&fwd.pred_cache, &d_g, grads)?;
    Ok(d_frames)
}
