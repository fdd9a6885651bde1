//! Edit-based minimum Bayes risk over n-best lists.

use serde::{Deserialize, Serialize};

use super::network::{Transducer, TransducerGrads};
use crate::decode::{beam_decode, NBestEntry};
use crate::error::{Error, Result};
use crate::math::Matrix;

/// Levenshtein distance between two sequences.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut cur = vec![0; reference.len() + 1];
    for (i, h) in hyp.iter().enumerate() {
        cur[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// Hypotheses with unnormalized log-probabilities, and the reference they
/// are scored against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub entries: Vec<NBestEntry>,
    pub reference: Vec<usize>,
}

/// Expected edit distance under the n-best posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbrRisk {
    pub risk: f64,
    pub posteriors: Vec<f64>,
    pub edit_distances: Vec<usize>,
    /// `∂risk/∂log_prob` per entry.
    pub d_log_probs: Vec<f64>,
}

/// Risk with posteriors `softmax(scale · log_prob)`.
pub fn embr_risk_scaled(nbest: &NBestList, posterior_scale: f64) -> Result<EmbrRisk> {
    if nbest.entries.is_empty() {
        return Err(Error::Domain("n-best list is empty".into()));
    }
    let scaled: Vec<f64> = nbest.entries.iter().map(|e| posterior_scale * e.log_prob).collect();
    if scaled.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("n-best log-probabilities must be finite".into()));
    }
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let posteriors: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let edit_distances: Vec<usize> =
        nbest.entries.iter().map(|e| edit_distance(&e.labels, &nbest.reference)).collect();
    let risk = posteriors.iter().zip(&edit_distances).map(|(p, &w)| p * w as f64).sum::<f64>();
    let d_log_probs = posteriors
        .iter()
        .zip(&edit_distances)
        .map(|(p, &w)| posterior_scale * p * (w as f64 - risk))
        .collect();
    Ok(EmbrRisk { risk, posteriors, edit_distances, d_log_probs })
}

pub fn embr_risk(nbest: &NBestList) -> Result<EmbrRisk> {
    embr_risk_scaled(nbest, 1.0)
}

/// EMBR fine-tuning settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbrConfig {
    /// Beam width, which is also the n-best size.
    pub beam_width: usize,
    /// Optimizer steps; `None` means one tenth of the main training steps.
    pub steps: Option<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Posteriors are `softmax(posterior_scale · log P(h))`.
    pub posterior_scale: f64,
    /// Add the reference to the n-best list when the beam missed it.
    pub include_reference: bool,
    pub seed: u64,
}

impl Default for EmbrConfig {
    fn default() -> Self {
        Self {
            beam_width: 4,
            steps: None,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 8,
            posterior_scale: 1.0,
            include_reference: false,
            seed: 7,
        }
    }
}

/// Risk of one utterance for a fixed hypothesis set, scoring every
/// hypothesis by its full lattice log-likelihood.
pub fn embr_hypothesis_risk(
    model: &Transducer,
    features: &Matrix,
    reference: &[usize],
    hypotheses: &[Vec<usize>],
    posterior_scale: f64,
) -> Result<EmbrRisk> {
    let mut entries = Vec::with_capacity(hypotheses.len());
    for h in hypotheses {
        entries.push(NBestEntry { labels: h.clone(), log_prob: -model.loss(features, h)? });
    }
    embr_risk_scaled(&NBestList { entries, reference: reference.to_vec() }, posterior_scale)
}

/// Risk of one utterance and its gradient, for a fixed hypothesis set.
///
/// Hypothesis log-probabilities are full lattice likelihoods
/// `−transducer_loss(h)`, so the risk is a smooth function of the weights
/// once the hypotheses are fixed.
pub fn embr_hypothesis_gradient(
    model: &Transducer,
    features: &Matrix,
    reference: &[usize],
    hypotheses: &[Vec<usize>],
    posterior_scale: f64,
    grads: &mut TransducerGrads,
) -> Result<EmbrRisk> {
    let risk = embr_hypothesis_risk(model, features, reference, hypotheses, posterior_scale)?;
    for (h, &c) in hypotheses.iter().zip(&risk.d_log_probs) {
        // log P(h) = −loss(h)
        if c != 0.0 {
            model.accumulate_gradient(features, h, -c, grads)?;
        }
    }
    Ok(risk)
}

/// Distinct n-best label sequences from beam search, plus the reference
/// when requested.
pub fn embr_hypotheses(
    model: &Transducer,
    features: &Matrix,
    reference: &[usize],
    cfg: &EmbrConfig,
) -> Result<Vec<Vec<usize>>> {
    let enc = model.encode(features)?;
    if enc.is_empty() {
        return Ok(Vec::new());
    }
    let mut hyps: Vec<Vec<usize>> = beam_decode(&model.decoder, &enc, cfg.beam_width)?
        .into_iter()
        .map(|e| e.labels)
        .collect();
    if cfg.include_reference && !hyps.iter().any(|h| h == reference) {
        hyps.push(reference.to_vec());
    }
    Ok(hyps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(lps: &[f64], hyps: &[&[usize]], reference: &[usize]) -> NBestList {
        NBestList {
            entries: lps
                .iter()
                .zip(hyps)
                .map(|(&log_prob, h)| NBestEntry { labels: h.to_vec(), log_prob })
                .collect(),
            reference: reference.to_vec(),
        }
    }

    #[test]
    fn edit_distance_examples() {
        assert_eq!(edit_distance(&['a', 'b', 'c'], &['a', 'x', 'c']), 1);
        assert_eq!(edit_distance::<char>(&[], &['a', 'b']), 2);
        // delete the leading a, substitute c -> b
        assert_eq!(edit_distance(&['a', 'b', 'a', 'c'], &['b', 'a', 'b']), 2);
    }

    #[test]
    fn single_hypothesis() {
        let r = embr_risk(&list(&[-3.0], &[&[1, 2]], &[1])).unwrap();
        assert_eq!(r.risk, 1.0);
        assert_eq!(r.d_log_probs, vec![0.0]);
    }

    #[test]
    fn two_term_example() {
        let r = embr_risk(&list(&[-0.1, -2.0], &[&[0, 1], &[1]], &[0, 1])).unwrap();
        assert_eq!(r.edit_distances, vec![0, 1]);
        let r = embr_risk(&list(&[-0.1, -2.0], &[&[0, 1], &[]], &[0, 1])).unwrap();
        assert_eq!(r.edit_distances, vec![0, 2]);
        assert!((r.posteriors[0] - 0.869892).abs() < 1e-6);
        assert!((r.risk - 0.260216).abs() < 1e-6);
    }

    #[test]
    fn empty_list_rejected() {
        assert!(matches!(embr_risk(&list(&[], &[], &[0])), Err(Error::Domain(_))));
    }
}
