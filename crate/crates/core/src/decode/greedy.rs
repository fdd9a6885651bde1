use std::time::Instant;

use super::{argmax, EncoderFrames};
use crate::decoder::DecoderModel;
use crate::error::{Error, Result};
use crate::math::log_softmax;

/// Result of greedy decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutput {
    /// Emitted non-blank labels.
    pub labels: Vec<usize>,
    /// Log-probability of the chosen alignment.
    pub log_prob: f64,
    /// Wall time of every joint evaluation, in milliseconds.
    pub step_ms: Vec<f64>,
}

/// Frame-synchronous greedy search.
///
/// At each frame the argmax token is emitted and fed back until blank wins
/// or `max_symbols_per_frame` labels were emitted for the frame; the
/// decoder then moves to the next frame.
pub fn greedy_decode(model: &DecoderModel, enc: &EncoderFrames) -> Result<GreedyOutput> {
    let cfg = &model.config;
    if !enc.is_empty() && enc.dim() != cfg.encoder_dim {
        return Err(Error::Shape(format!("frames have {} dims, model expects {}", enc.dim(), cfg.encoder_dim)));
    }
    let blank = cfg.blank_id();
    let mut state = model.initial_state();
    let mut pred_proj = model.project_prediction(&model.prediction_forward(&state)?)?;
    let mut labels = Vec::new();
    let mut log_prob = 0.0;
    let mut step_ms = Vec::new();

    for t in 0..enc.len() {
        let enc_proj = model.project_encoder(enc.frame(t))?;
        let mut emitted = 0;
        loop {
            let start = Instant::now();
            let hidden = model.joint_hidden(&enc_proj, &pred_proj);
            let lp = log_softmax(&model.output_logits(&hidden))?;
            let best = argmax(&lp);
            if best == blank || emitted == cfg.max_symbols_per_frame {
                log_prob += lp[blank];
                step_ms.push(start.elapsed().as_secs_f64() * 1e3);
                break;
            }
            log_prob += lp[best];
            labels.push(best);
            state = model.advance(&state, best)?;
            pred_proj = model.project_prediction(&model.prediction_forward(&state)?)?;
            emitted += 1;
            step_ms.push(start.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(GreedyOutput { labels, log_prob, step_ms })
}
