//! SGD with momentum over the toy task, and EMBR fine-tuning.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{ToyDataset, ToyTaskSpec, Utterance};
use super::embr::{edit_distance, embr_hypotheses, embr_hypothesis_gradient, embr_hypothesis_risk, EmbrConfig};
use super::network::{ToyEncoder, Transducer, TransducerGrads};
use crate::decode::greedy_decode;
use crate::decoder::{DecoderConfig, DecoderModel};
use crate::error::{Error, Result};
use crate::math::SeededRng;

/// Main training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Worker threads for gradient accumulation; 1 keeps everything on the
    /// calling thread. Results do not depend on this value.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 8, epochs: 30, seed: 1, workers: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Optimizer steps taken by [`train`].
    pub fn total_steps(&self, train_size: usize) -> usize {
        self.epochs * train_size.div_ceil(self.batch_size.max(1))
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-utterance training loss over the epoch.
    pub loss: f64,
    pub dev_token_error_rate: f64,
    pub wall_s: f64,
}

/// Plain SGD with heavy-ball momentum: `v ← μv + g`, `θ ← θ − ηv`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: TransducerGrads,
}

impl Sgd {
    pub fn new(model: &Transducer, learning_rate: f64, momentum: f64) -> Self {
        Self { learning_rate, momentum, velocity: TransducerGrads::zeros_for(model) }
    }

    pub fn step(&mut self, model: &mut Transducer, grads: &TransducerGrads) {
        let mu = self.momentum;
        let v = &mut self.velocity;
        v.encoder.weight.scale(mu);
        v.encoder.bias.scale(mu);
        v.decoder.for_each_mut(|_, m| m.scale(mu));
        v.add_scaled(grads, 1.0);
        model.encoder.add_scaled(&v.encoder, -self.learning_rate);
        model.decoder.weights.add_scaled(&v.decoder, -self.learning_rate);
    }
}

fn run_on<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers <= 1 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(job))
}

/// Mean loss and mean gradient over `batch`.
///
/// Each utterance's gradient is computed into its own buffer and the
/// buffers are summed in batch order, so any worker count gives the same
/// bits.
pub fn batch_gradient(model: &Transducer, batch: &[&Utterance], workers: usize) -> Result<(f64, TransducerGrads)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let one = |u: &&Utterance| -> Result<(f64, TransducerGrads)> {
        let mut g = TransducerGrads::zeros_for(model);
        let loss = model.accumulate_gradient(&u.features, &u.labels, 1.0, &mut g)?;
        Ok((loss, g))
    };
    let parts: Vec<(f64, TransducerGrads)> = if workers <= 1 {
        batch.iter().map(one).collect::<Result<_>>()?
    } else {
        run_on(workers, || batch.par_iter().map(one).collect::<Result<Vec<_>>>())??
    };
    let scale = 1.0 / batch.len() as f64;
    let mut total = TransducerGrads::zeros_for(model);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_scaled(g, scale);
    }
    Ok((loss * scale, total))
}

/// Errors on every dev utterance divided by the number of reference labels,
/// using greedy decoding.
pub fn token_error_rate(model: &Transducer, data: &[Utterance]) -> Result<f64> {
    let mut errors = 0usize;
    let mut words = 0usize;
    for u in data {
        let enc = model.encode(&u.features)?;
        let hyp = greedy_decode(&model.decoder, &enc)?.labels;
        errors += edit_distance(&hyp, &u.labels);
        words += u.labels.len();
    }
    Ok(if words == 0 { 0.0 } else { errors as f64 / words as f64 })
}

/// Randomly initialized transducer for `spec`'s features.
pub fn init_transducer(decoder: &DecoderConfig, spec: &ToyTaskSpec, seed: u64) -> Result<Transducer> {
    if decoder.vocab_size != spec.vocab_size {
        return Err(Error::Config(format!(
            "decoder vocab_size {} differs from task vocab_size {}",
            decoder.vocab_size, spec.vocab_size
        )));
    }
    let dec = DecoderModel::init(decoder.clone(), seed)?;
    let enc = ToyEncoder::init(spec.feature_dim, decoder.encoder_dim, seed ^ 0x00e1_c0de);
    Transducer::new(enc, dec)
}

fn divergence(what: &str, step: usize) -> Error {
    Error::Divergence(format!("{what} became non-finite at step {step}; lower the learning rate"))
}

/// Trains `model` in place, calling `on_epoch` after every epoch.
pub fn train_model(
    model: &mut Transducer,
    data: &ToyDataset,
    hp: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    hp.validate()?;
    let start = Instant::now();
    let mut opt = Sgd::new(model, hp.learning_rate, hp.momentum);
    let mut rng = SeededRng::new(hp.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut metrics = Vec::with_capacity(hp.epochs);
    let mut step = 0;
    for epoch in 1..=hp.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<&Utterance> = chunk.iter().map(|&i| &data.train[i]).collect();
            let (loss, grads) = batch_gradient(model, &batch, hp.workers)?;
            step += 1;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(divergence("loss", step));
            }
            loss_sum += loss * batch.len() as f64;
            opt.step(model, &grads);
            if !model.decoder.weights.is_finite() || !model.encoder.is_finite() {
                return Err(divergence("weights", step));
            }
        }
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / data.train.len().max(1) as f64,
            dev_token_error_rate: token_error_rate(model, &data.dev)?,
            wall_s: start.elapsed().as_secs_f64(),
        };
        on_epoch(&m)?;
        metrics.push(m);
    }
    Ok(metrics)
}

/// Trained model and its per-epoch log.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Transducer,
    pub metrics: Vec<EpochMetrics>,
}

/// Builds the toy dataset, initializes a model from `decoder` and trains it.
pub fn train(decoder: &DecoderConfig, spec: &ToyTaskSpec, hp: &TrainConfig) -> Result<TrainOutcome> {
    let data = super::data::make_toy_dataset(spec, hp.seed)?;
    let mut model = init_transducer(decoder, spec, hp.seed)?;
    let metrics = train_model(&mut model, &data, hp, |_| Ok(()))?;
    Ok(TrainOutcome { model, metrics })
}

/// Outcome of one EMBR update.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbrStepStats {
    /// Mean risk over utterances that produced hypotheses.
    pub mean_risk: f64,
    /// Utterances without hypotheses (no frames), left out of the update.
    pub skipped: usize,
    pub grad_norm: f64,
}

/// One EMBR update over `batch`: beam search, risk, gradient, SGD step.
pub fn embr_step(model: &mut Transducer, batch: &[&Utterance], cfg: &EmbrConfig, opt: &mut Sgd) -> Result<EmbrStepStats> {
    let mut grads = TransducerGrads::zeros_for(model);
    let mut risk_sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    let mut per_utt = Vec::new();
    for u in batch {
        let hyps = embr_hypotheses(model, &u.features, &u.labels, cfg)?;
        if hyps.is_empty() {
            skipped += 1;
            continue;
        }
        let mut g = TransducerGrads::zeros_for(model);
        let r = embr_hypothesis_gradient(model, &u.features, &u.labels, &hyps, cfg.posterior_scale, &mut g)?;
        risk_sum += r.risk;
        used += 1;
        per_utt.push(g);
    }
    if used > 0 {
        let scale = 1.0 / used as f64;
        for g in &per_utt {
            grads.add_scaled(g, scale);
        }
    }
    if !grads.is_finite() {
        return Err(Error::Divergence("EMBR gradient became non-finite".into()));
    }
    let grad_norm = grads.squared_norm().sqrt();
    opt.step(model, &grads);
    if !model.decoder.weights.is_finite() || !model.encoder.is_finite() {
        return Err(Error::Divergence("weights became non-finite during EMBR".into()));
    }
    Ok(EmbrStepStats { mean_risk: if used > 0 { risk_sum / used as f64 } else { 0.0 }, skipped, grad_norm })
}

/// Mean EMBR risk over `data` with the current beam hypotheses.
pub fn dev_risk(model: &Transducer, data: &[Utterance], cfg: &EmbrConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for u in data {
        let hyps = embr_hypotheses(model, &u.features, &u.labels, cfg)?;
        if hyps.is_empty() {
            continue;
        }
        let r = embr_hypothesis_risk(model, &u.features, &u.labels, &hyps, cfg.posterior_scale)?;
        sum += r.risk;
        used += 1;
    }
    Ok(if used == 0 { 0.0 } else { sum / used as f64 })
}

/// Summary of an EMBR phase.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbrOutcome {
    pub steps: usize,
    pub dev_risk_before: f64,
    pub dev_risk_after: f64,
    pub skipped: usize,
    pub step_risks: Vec<f64>,
}

/// Runs `steps` EMBR updates on batches drawn from the training set.
pub fn embr_train(model: &mut Transducer, data: &ToyDataset, cfg: &EmbrConfig, steps: usize) -> Result<EmbrOutcome> {
    if cfg.beam_width == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("EMBR beam_width and batch_size must be positive".into()));
    }
    if data.train.is_empty() {
        return Err(Error::Config("EMBR needs training utterances".into()));
    }
    let dev_risk_before = dev_risk(model, &data.dev, cfg)?;
    let mut opt = Sgd::new(model, cfg.learning_rate, cfg.momentum);
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut skipped = 0;
    let mut step_risks = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(&data.train[order[cursor]]);
            cursor += 1;
        }
        let stats = embr_step(model, &batch, cfg, &mut opt)?;
        skipped += stats.skipped;
        step_risks.push(stats.mean_risk);
    }
    let dev_risk_after = dev_risk(model, &data.dev, cfg)?;
    Ok(EmbrOutcome { steps, dev_risk_before, dev_risk_after, skipped, step_risks })
}
