//! Joint network: `h = tanh(f·W_enc + g·W_pred + b)`, then one logit per
//! token (`⟨row_v, h⟩ + b_v`) and a final blank logit.

use super::weights::{ModelWeights, OutputTokens};
use super::DecoderModel;
use crate::error::{Error, Result};
use crate::math::{add_assign, axpy, dot, outer_acc, vec_mat};

impl DecoderModel {
    /// `f · W_enc`
    pub fn project_encoder(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.config.encoder_dim {
            return Err(Error::Shape(format!(
                "encoder frame has {} dims, expected {}",
                frame.len(),
                self.config.encoder_dim
            )));
        }
        Ok(vec_mat(frame, &self.weights.joint_enc))
    }

    /// `g · W_pred`
    pub fn project_prediction(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.config.prediction_dim() {
            return Err(Error::Shape(format!(
                "prediction output has {} dims, expected {}",
                g.len(),
                self.config.prediction_dim()
            )));
        }
        Ok(vec_mat(g, &self.weights.joint_pred))
    }

    /// Joint hidden activation from the two projections.
    pub fn joint_hidden(&self, enc_proj: &[f64], pred_proj: &[f64]) -> Vec<f64> {
        let bias = self.weights.joint_bias.row(0);
        enc_proj
            .iter()
            .zip(pred_proj)
            .zip(bias)
            .map(|((a, b), c)| (a + b + c).tanh())
            .collect()
    }

    /// Output logits for hidden activation `h`; blank is the last entry.
    pub fn output_logits(&self, hidden: &[f64]) -> Vec<f64> {
        let w = &self.weights;
        let vocab = self.config.vocab_size;
        let bias = w.out_bias.row(0);
        let mut logits = Vec::with_capacity(vocab + 1);
        for v in 0..vocab {
            logits.push(dot(w.token_row(v), hidden) + bias[v]);
        }
        logits.push(dot(w.out_blank.row(0), hidden) + bias[vocab]);
        logits
    }

    /// Logits over `V ∪ {blank}` for encoder frame `f` and prediction output `g`.
    pub fn joint_forward(&self, frame: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let a = self.project_encoder(frame)?;
        let b = self.project_prediction(g)?;
        Ok(self.output_logits(&self.joint_hidden(&a, &b)))
    }

    /// Backward through the output layer and tanh. Returns the gradient of
    /// the pre-activation sum (shared by both projections and the joint bias).
    pub fn backprop_output(&self, hidden: &[f64], d_logits: &[f64], grads: &mut ModelWeights) -> Vec<f64> {
        let w = &self.weights;
        let vocab = self.config.vocab_size;
        let mut d_hidden = vec![0.0; hidden.len()];
        for v in 0..vocab {
            let d = d_logits[v];
            if d != 0.0 {
                axpy(d, w.token_row(v), &mut d_hidden);
                axpy(d, hidden, grads.token_row_mut(v));
            }
        }
        axpy(d_logits[vocab], w.out_blank.row(0), &mut d_hidden);
        axpy(d_logits[vocab], hidden, grads.out_blank.row_mut(0));
        add_assign(grads.out_bias.row_mut(0), d_logits);

        let d_pre: Vec<f64> = d_hidden.iter().zip(hidden).map(|(d, h)| d * (1.0 - h * h)).collect();
        add_assign(grads.joint_bias.row_mut(0), &d_pre);
        d_pre
    }

    /// Accumulates `W_enc` gradient for one frame and returns `∂L/∂f`.
    pub fn backprop_encoder_projection(&self, frame: &[f64], d_proj: &[f64], grads: &mut ModelWeights) -> Vec<f64> {
        outer_acc(&mut grads.joint_enc, frame, d_proj);
        let mut d_frame = vec![0.0; frame.len()];
        crate::math::mat_vec_acc(&self.weights.joint_enc, d_proj, &mut d_frame);
        d_frame
    }

    /// Accumulates `W_pred` gradient for one prediction output and returns `∂L/∂g`.
    pub fn backprop_prediction_projection(&self, g: &[f64], d_proj: &[f64], grads: &mut ModelWeights) -> Vec<f64> {
        outer_acc(&mut grads.joint_pred, g, d_proj);
        let mut d_g = vec![0.0; g.len()];
        crate::math::mat_vec_acc(&self.weights.joint_pred, d_proj, &mut d_g);
        d_g
    }

    /// Copies the embedding into an explicit output matrix, producing an
    /// untied decoder with identical outputs.
    pub fn untie(&self) -> DecoderModel {
        let mut out = self.clone();
        if self.weights.is_tied() {
            let vocab = self.config.vocab_size;
            let mut tokens = crate::math::Matrix::zeros(vocab, self.config.joint_dim);
            for v in 0..vocab {
                tokens.row_mut(v).copy_from_slice(self.weights.embedding.row(v));
            }
            out.weights.out_tokens = OutputTokens::Untied(tokens);
            out.config.tied = false;
        }
        out
    }
}
