use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EncoderFrames;
use crate::decoder::{DecoderModel, PredictionState};
use crate::error::{Error, Result};
use crate::math::{log_add_exp, log_softmax};

/// One entry of an n-best list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NBestEntry {
    pub labels: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Clone, Debug)]
struct Hypothesis {
    labels: Vec<usize>,
    log_prob: f64,
    state: PredictionState,
    pred_proj: Vec<f64>,
}

/// Non-blank extension waiting to be scored against the beam.
struct Candidate {
    parent: usize,
    label: usize,
    log_prob: f64,
}

fn by_score_desc(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(b.1))
}

/// Time-synchronous beam search.
///
/// Within a frame, hypotheses are expanded in rounds: every round scores the
/// blank continuation (which moves the hypothesis to the next frame) and all
/// non-blank extensions, of which the best `beam_width` are expanded in the
/// next round, up to `max_symbols_per_frame` rounds. Hypotheses reaching the
/// next frame with identical label sequences are merged by log-sum-exp, and
/// the best `beam_width` survive. The returned list is sorted by descending
/// log-probability.
pub fn beam_decode(model: &DecoderModel, enc: &EncoderFrames, beam_width: usize) -> Result<Vec<NBestEntry>> {
    let cfg = &model.config;
    if beam_width == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    if !enc.is_empty() && enc.dim() != cfg.encoder_dim {
        return Err(Error::Shape(format!("frames have {} dims, model expects {}", enc.dim(), cfg.encoder_dim)));
    }
    let blank = cfg.blank_id();
    let initial = model.initial_state();
    let pred_proj = model.project_prediction(&model.prediction_forward(&initial)?)?;
    let mut beam = vec![Hypothesis { labels: Vec::new(), log_prob: 0.0, state: initial, pred_proj }];

    for t in 0..enc.len() {
        let enc_proj = model.project_encoder(enc.frame(t))?;
        let mut next: BTreeMap<Vec<usize>, Hypothesis> = BTreeMap::new();
        let mut current = std::mem::take(&mut beam);

        for round in 0..=cfg.max_symbols_per_frame {
            let expand = round < cfg.max_symbols_per_frame;
            let mut candidates = Vec::new();
            for (i, hyp) in current.iter().enumerate() {
                let hidden = model.joint_hidden(&enc_proj, &hyp.pred_proj);
                let lp = log_softmax(&model.output_logits(&hidden))?;
                let ended = hyp.log_prob + lp[blank];
                match next.get_mut(&hyp.labels) {
                    Some(existing) => existing.log_prob = log_add_exp(existing.log_prob, ended),
                    None => {
                        next.insert(hyp.labels.clone(), Hypothesis { log_prob: ended, ..hyp.clone() });
                    }
                }
                if expand {
                    candidates.extend(
                        (0..cfg.vocab_size).map(|v| Candidate { parent: i, label: v, log_prob: hyp.log_prob + lp[v] }),
                    );
                }
            }
            if !expand || candidates.is_empty() {
                break;
            }
            // parents have distinct label sequences, so extensions are distinct too
            candidates.sort_by(|a, b| {
                b.log_prob
                    .partial_cmp(&a.log_prob)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| current[a.parent].labels.cmp(&current[b.parent].labels))
                    .then_with(|| a.label.cmp(&b.label))
            });
            candidates.truncate(beam_width);
            let mut expanded = Vec::with_capacity(candidates.len());
            for c in candidates {
                let parent = &current[c.parent];
                let state = model.advance(&parent.state, c.label)?;
                let pred_proj = model.project_prediction(&model.prediction_forward(&state)?)?;
                let mut labels = parent.labels.clone();
                labels.push(c.label);
                expanded.push(Hypothesis { labels, log_prob: c.log_prob, state, pred_proj });
            }
            current = expanded;
        }

        let mut merged: Vec<Hypothesis> = next.into_values().collect();
        merged.sort_by(|a, b| by_score_desc((a.log_prob, &a.labels), (b.log_prob, &b.labels)));
        merged.truncate(beam_width);
        beam = merged;
    }

    beam.sort_by(|a, b| by_score_desc((a.log_prob, &a.labels), (b.log_prob, &b.labels)));
    Ok(beam.into_iter().map(|h| NBestEntry { labels: h.labels, log_prob: h.log_prob }).collect())
}
