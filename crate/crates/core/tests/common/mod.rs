//! Test-only oracles. Nothing here calls into the decoding, loss or
//! gradient code it is used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use reduced_rnnt::decode::EncoderFrames;
use reduced_rnnt::decoder::{DecoderConfig, DecoderModel, ModelWeights, OutputTokens, PredictionState, Variant};
use reduced_rnnt::math::{log_softmax, Matrix, SeededRng};
use reduced_rnnt::training::{Transducer, TransducerGrads};

pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Every alignment with at most `max_symbols` labels per frame, summed per
/// label sequence in the log domain.
pub fn enumerate_alignments(model: &DecoderModel, enc: &EncoderFrames, max_symbols: usize) -> BTreeMap<Vec<usize>, f64> {
    fn rec(
        model: &DecoderModel,
        enc: &EncoderFrames,
        max_symbols: usize,
        t: usize,
        emitted: usize,
        labels: &mut Vec<usize>,
        state: &PredictionState,
        lp: f64,
        out: &mut BTreeMap<Vec<usize>, f64>,
    ) {
        if t == enc.len() {
            let e = out.entry(labels.clone()).or_insert(f64::NEG_INFINITY);
            *e = log_add(*e, lp);
            return;
        }
        let g = model.prediction_forward(state).unwrap();
        let lps = log_softmax(&model.joint_forward(enc.frame(t), &g).unwrap()).unwrap();
        let blank = model.config.vocab_size;
        rec(model, enc, max_symbols, t + 1, 0, labels, state, lp + lps[blank], out);
        if emitted < max_symbols {
            for v in 0..blank {
                let next = model.advance(state, v).unwrap();
                labels.push(v);
                rec(model, enc, max_symbols, t, emitted + 1, labels, &next, lp + lps[v], out);
                labels.pop();
            }
        }
    }
    let mut out = BTreeMap::new();
    rec(model, enc, max_symbols, 0, 0, &mut Vec::new(), &model.initial_state(), 0.0, &mut out);
    out
}

pub fn best_of(map: &BTreeMap<Vec<usize>, f64>) -> (Vec<usize>, f64) {
    map.iter()
        .fold((Vec::new(), f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k.clone(), v) } else { acc })
}

/// Brute-force transducer likelihood: the sum over all monotone lattice
/// paths, where a path is a placement of the U labels among T frames with
/// any number of labels per frame and a blank closing every frame.
/// `log_probs[t][u][k]` holds log-probabilities.
pub fn brute_force_log_likelihood(log_probs: &[Vec<Vec<f64>>], target: &[usize], blank: usize) -> f64 {
    fn rec(lp: &[Vec<Vec<f64>>], y: &[usize], blank: usize, t: usize, u: usize, acc: f64, total: &mut f64) {
        let t_len = lp.len();
        if t == t_len {
            if u == y.len() {
                *total = log_add(*total, acc);
            }
            return;
        }
        // blank: next frame
        rec(lp, y, blank, t + 1, u, acc + lp[t][u][blank], total);
        if u < y.len() {
            rec(lp, y, blank, t, u + 1, acc + lp[t][u][y[u]], total);
        }
    }
    let mut total = f64::NEG_INFINITY;
    rec(log_probs, target, blank, 0, 0, 0.0, &mut total);
    total
}

/// Tiny decoder with random weights everywhere, including biases.
pub fn random_model(cfg: DecoderConfig, seed: u64, scale: f64) -> DecoderModel {
    let mut w = ModelWeights::init(&cfg, seed).unwrap();
    let mut rng = SeededRng::new(seed.wrapping_mul(7919).wrapping_add(1));
    w.for_each_mut(|_, m| {
        for v in m.data_mut() {
            *v = rng.gaussian() * scale;
        }
    });
    w.embedding.row_mut(cfg.pad_id()).fill(0.0);
    DecoderModel::new(cfg, w).unwrap()
}

pub fn random_frames(t: usize, dim: usize, rng: &mut SeededRng) -> EncoderFrames {
    EncoderFrames::new(rng.gaussian_matrix(t, dim, 1.0)).unwrap()
}

pub fn tiny_config(variant: Variant, vocab: usize) -> DecoderConfig {
    let history = match variant {
        Variant::Stateless1Emb | Variant::Lstm => 1,
        Variant::Concat2Emb => 2,
        Variant::Reduced => 2,
    };
    DecoderConfig {
        variant,
        vocab_size: vocab,
        embed_dim: 4,
        joint_dim: 4,
        encoder_dim: 3,
        history,
        heads: 2,
        tied: variant == Variant::Reduced,
        position_trainable: false,
        lstm_layers: 2,
        lstm_units: 3,
        lstm_proj: 3,
        max_symbols_per_frame: 2,
    }
}

/// Decoder whose blank logit dominates for every input.
pub fn all_blank_model(vocab: usize) -> DecoderModel {
    let cfg = DecoderConfig { vocab_size: vocab, ..tiny_config(Variant::Reduced, vocab) };
    let mut w = ModelWeights::zeros(&cfg);
    w.ln_gamma.fill(1.0);
    w.out_bias.set(0, vocab, 10.0);
    DecoderModel::new(cfg, w).unwrap()
}

/// Two-token Stateless1Emb decoder that emits token 0 once on frame `[1, 0]`
/// and blank everywhere else.
pub fn rigged_single_emission_model() -> DecoderModel {
    let cfg = DecoderConfig {
        variant: Variant::Stateless1Emb,
        vocab_size: 2,
        embed_dim: 2,
        joint_dim: 2,
        encoder_dim: 2,
        history: 1,
        heads: 1,
        tied: false,
        ..DecoderConfig::toy()
    };
    let mut w = ModelWeights::zeros(&cfg);
    w.embedding = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
    w.joint_enc = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 3.0]]).unwrap();
    w.joint_pred = Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, -6.0]]).unwrap();
    w.out_tokens = OutputTokens::Untied(Matrix::from_rows(&[vec![5.0, 10.0], vec![0.0, 0.0]]).unwrap());
    w.out_bias = Matrix::from_rows(&[vec![0.0, -100.0, 2.0]]).unwrap();
    DecoderModel::new(cfg, w).unwrap()
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    /// `(tensor, index, analytic, numeric)`
    pub failures: Vec<(String, usize, f64, f64)>,
}

fn perturb(model: &Transducer, name: &str, i: usize, delta: f64) -> Transducer {
    let mut m = model.clone();
    match name {
        "encoder.weight" => m.encoder.weight.data_mut()[i] += delta,
        "encoder.bias" => m.encoder.bias.data_mut()[i] += delta,
        _ => m.decoder.weights.for_each_mut(|n, t| {
            if n == name {
                t.data_mut()[i] += delta;
            }
        }),
    }
    m
}

/// Central differences with step 1e-5 against `grads` for every trainable
/// scalar; passes when `|a - n| <= rel · max(|a|, |n|, 1e-4)`. Frozen
/// scalars (pad row, untrained positions) are skipped.
pub fn check_gradients(
    model: &Transducer,
    grads: &TransducerGrads,
    f: impl Fn(&Transducer) -> f64,
    rel: f64,
) -> GradReport {
    let h = 1e-5;
    let cfg = &model.decoder.config;
    let mut analytic: Vec<(String, Vec<f64>)> = vec![
        ("encoder.weight".into(), grads.encoder.weight.data().to_vec()),
        ("encoder.bias".into(), grads.encoder.bias.data().to_vec()),
    ];
    for (name, m) in grads.decoder.tensors() {
        analytic.push((name, m.data().to_vec()));
    }
    let mut report = GradReport::default();
    for (name, values) in &analytic {
        if name == "position" && !cfg.position_trainable {
            continue;
        }
        for (i, &a) in values.iter().enumerate() {
            if name == "embedding" && i / cfg.embed_dim == cfg.pad_id() {
                continue;
            }
            let n = (f(&perturb(model, name, i, h)) - f(&perturb(model, name, i, -h))) / (2.0 * h);
            report.checked += 1;
            if (a - n).abs() > rel * a.abs().max(n.abs()).max(1e-4) {
                report.failures.push((name.clone(), i, a, n));
            }
        }
    }
    report
}
