//! Prediction-network forward and backward passes.

use super::config::Variant;
use super::lstm::{lstm_step, lstm_step_backward, LstmStepCache};
use super::state::{LstmCellState, PredictionState};
use super::weights::ModelWeights;
use super::DecoderModel;
use crate::error::{Error, Result};
use crate::math::{
    add_assign, axpy, dot, layer_norm_backward, layer_norm_cached, mat_vec_acc, outer_acc, swish,
    swish_grad, vec_mat, LayerNormCache, Matrix, LAYER_NORM_EPS,
};

/// Single-head position-weighted average of history embeddings:
/// `(1/N) Σ_n E_n · ⟨E_n, P_n⟩`.
pub fn predict_single_head(e: &Matrix, p: &Matrix) -> Result<Vec<f64>> {
    if !e.same_shape(p) {
        return Err(Error::Shape(format!(
            "embeddings {}x{} vs position vectors {}x{}",
            e.rows(),
            e.cols(),
            p.rows(),
            p.cols()
        )));
    }
    let n_hist = e.rows();
    let mut out = vec![0.0; e.cols()];
    for n in 0..n_hist {
        let weight = dot(e.row(n), p.row(n)) / n_hist as f64;
        axpy(weight, e.row(n), &mut out);
    }
    Ok(out)
}

/// Per-slot averaging weights `(1/(H·N)) Σ_h ⟨E_n, P'_{h,n}⟩`.
fn head_weights(e: &Matrix, positions: &Matrix, heads: usize) -> Vec<f64> {
    let n_hist = e.rows();
    let denom = (heads * n_hist) as f64;
    (0..n_hist)
        .map(|n| {
            let mut s = 0.0;
            for h in 0..heads {
                s += dot(e.row(n), positions.row(h * n_hist + n));
            }
            s / denom
        })
        .collect()
}

/// Multi-head position-weighted average:
/// `(1/(H·N)) Σ_{h,n} E_n · ⟨E_n, P'_{h,n}⟩`.
///
/// `positions` stacks the heads: row `h·N + n` is head `h`, slot `n`.
pub fn predict_multi_head(e: &Matrix, positions: &Matrix, heads: usize) -> Result<Vec<f64>> {
    if heads == 0 || positions.rows() != heads * e.rows() || positions.cols() != e.cols() {
        return Err(Error::Shape(format!(
            "position tensor {}x{} does not hold {heads} heads of {}x{}",
            positions.rows(),
            positions.cols(),
            e.rows(),
            e.cols()
        )));
    }
    let weights = head_weights(e, positions, heads);
    let mut out = vec![0.0; e.cols()];
    for (n, w) in weights.iter().enumerate() {
        axpy(*w, e.row(n), &mut out);
    }
    Ok(out)
}

/// Cached activations of one Reduced prediction step.
#[derive(Clone, Debug)]
pub struct ReducedStepCache {
    ids: Vec<usize>,
    slot_weights: Vec<f64>,
    average: Vec<f64>,
    norm: LayerNormCache,
}

/// Cached activations of the prediction network over a label sequence.
#[derive(Clone, Debug)]
pub enum PredictionCache {
    Reduced(Vec<ReducedStepCache>),
    /// Context ids per step, for the embedding-only variants.
    Embedding(Vec<Vec<usize>>),
    /// `steps[s][layer]`; step 0 consumes the pad, step `s` the `s`-th label.
    Lstm { ids: Vec<usize>, steps: Vec<Vec<LstmStepCache>> },
}

impl DecoderModel {
    /// Fresh state: all-pad history, and for the LSTM the state after
    /// consuming the pad embedding from zero.
    pub fn initial_state(&self) -> PredictionState {
        let cfg = &self.config;
        let mut state = PredictionState::new(cfg.history, cfg.pad_id());
        if cfg.variant == Variant::Lstm {
            let zeros = vec![LstmCellState::zeros(cfg.lstm_units, cfg.lstm_proj); cfg.lstm_layers];
            let pad = self.weights.embedding.row(cfg.pad_id()).to_vec();
            state.lstm = Some(self.lstm_forward(&pad, &zeros).0);
        }
        state
    }

    /// State after emitting non-blank `label`.
    pub fn advance(&self, state: &PredictionState, label: usize) -> Result<PredictionState> {
        if label >= self.config.vocab_size {
            return Err(Error::Domain(format!(
                "label {label} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let mut next = state.clone();
        next.push(label);
        if let Some(prev) = &state.lstm {
            let x = self.weights.embedding.row(label).to_vec();
            next.lstm = Some(self.lstm_forward(&x, prev).0);
        }
        Ok(next)
    }

    fn lstm_forward(&self, x: &[f64], prev: &[LstmCellState]) -> (Vec<LstmCellState>, Vec<LstmStepCache>) {
        let mut input = x.to_vec();
        let mut states = Vec::with_capacity(prev.len());
        let mut caches = Vec::with_capacity(prev.len());
        for (layer, p) in self.weights.lstm.iter().zip(prev) {
            let (s, c) = lstm_step(layer, &input, p);
            input = s.output.clone();
            states.push(s);
            caches.push(c);
        }
        (states, caches)
    }

    /// History embeddings, most recent label first. Pad rows are zero.
    pub fn embed(&self, state: &PredictionState) -> Result<Matrix> {
        self.embed_ids(&state.context())
    }

    fn embed_ids(&self, ids: &[usize]) -> Result<Matrix> {
        let table = &self.weights.embedding;
        let mut e = Matrix::zeros(ids.len(), table.cols());
        for (n, &id) in ids.iter().enumerate() {
            if id >= table.rows() {
                return Err(Error::Domain(format!("label id {id} outside embedding table")));
            }
            e.row_mut(n).copy_from_slice(table.row(id));
        }
        Ok(e)
    }

    fn reduced_step(&self, ids: &[usize]) -> Result<(Vec<f64>, ReducedStepCache)> {
        let w = &self.weights;
        let e = self.embed_ids(ids)?;
        let slot_weights = head_weights(&e, &w.position, self.config.heads);
        let mut average = vec![0.0; e.cols()];
        for (n, sw) in slot_weights.iter().enumerate() {
            axpy(*sw, e.row(n), &mut average);
        }
        let mut z = vec_mat(&average, &w.proj_weight);
        add_assign(&mut z, w.proj_bias.row(0));
        let norm = layer_norm_cached(&z, w.ln_gamma.row(0), w.ln_beta.row(0), LAYER_NORM_EPS)?;
        let out = swish(&norm.output);
        Ok((out, ReducedStepCache { ids: ids.to_vec(), slot_weights, average, norm }))
    }

    /// Prediction-network output `g_u` for `state`.
    pub fn prediction_forward(&self, state: &PredictionState) -> Result<Vec<f64>> {
        let cfg = &self.config;
        match cfg.variant {
            Variant::Reduced => Ok(self.reduced_step(&state.context())?.0),
            Variant::Stateless1Emb | Variant::Concat2Emb => {
                Ok(self.embed(state)?.into_data())
            }
            Variant::Lstm => {
                let layers = state
                    .lstm
                    .as_ref()
                    .ok_or_else(|| Error::Config("LSTM decoder given a state without recurrence".into()))?;
                Ok(layers.last().expect("at least one layer").output.clone())
            }
        }
    }

    /// Prediction outputs `g_0 … g_U` for every prefix of `labels`.
    pub fn predict_sequence(&self, labels: &[usize]) -> Result<(Vec<Vec<f64>>, PredictionCache)> {
        let cfg = &self.config;
        if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.vocab_size) {
            return Err(Error::Domain(format!("label {bad} outside vocabulary of {}", cfg.vocab_size)));
        }
        let mut state = PredictionState::new(cfg.history, cfg.pad_id());
        let mut contexts = vec![state.context()];
        for &l in labels {
            state.push(l);
            contexts.push(state.context());
        }
        match cfg.variant {
            Variant::Reduced => {
                let mut outs = Vec::with_capacity(contexts.len());
                let mut caches = Vec::with_capacity(contexts.len());
                for ctx in &contexts {
                    let (o, c) = self.reduced_step(ctx)?;
                    outs.push(o);
                    caches.push(c);
                }
                Ok((outs, PredictionCache::Reduced(caches)))
            }
            Variant::Stateless1Emb | Variant::Concat2Emb => {
                let outs = contexts
                    .iter()
                    .map(|ctx| Ok(self.embed_ids(ctx)?.into_data()))
                    .collect::<Result<Vec<_>>>()?;
                Ok((outs, PredictionCache::Embedding(contexts)))
            }
            Variant::Lstm => {
                let mut prev = vec![LstmCellState::zeros(cfg.lstm_units, cfg.lstm_proj); cfg.lstm_layers];
                let inputs = std::iter::once(cfg.pad_id()).chain(labels.iter().copied());
                let mut outs = Vec::new();
                let mut steps = Vec::new();
                let mut ids = Vec::new();
                for id in inputs {
                    ids.push(id);
                    let x = self.weights.embedding.row(id).to_vec();
                    let (states, caches) = self.lstm_forward(&x, &prev);
                    outs.push(states.last().expect("at least one layer").output.clone());
                    steps.push(caches);
                    prev = states;
                }
                Ok((outs, PredictionCache::Lstm { ids, steps }))
            }
        }
    }

    /// Accumulates prediction-network gradients given `d_outputs[u] = ∂L/∂g_u`.
    pub fn backprop_prediction(
        &self,
        cache: &PredictionCache,
        d_outputs: &[Vec<f64>],
        grads: &mut ModelWeights,
    ) -> Result<()> {
        let cfg = &self.config;
        let w = &self.weights;
        let pad = cfg.pad_id();
        let mismatch = || Error::State("prediction cache does not match decoder or gradient".into());
        match (cfg.variant, cache) {
            (Variant::Reduced, PredictionCache::Reduced(steps)) => {
                if steps.len() != d_outputs.len() {
                    return Err(mismatch());
                }
                let heads = cfg.heads;
                let n_hist = cfg.history;
                let denom = (heads * n_hist) as f64;
                for (step, dg) in steps.iter().zip(d_outputs) {
                    let d_norm: Vec<f64> = dg
                        .iter()
                        .zip(&step.norm.output)
                        .map(|(d, x)| d * swish_grad(*x))
                        .collect();
                    let dz = layer_norm_backward(
                        &step.norm,
                        w.ln_gamma.row(0),
                        &d_norm,
                        grads.ln_gamma.row_mut(0),
                        grads.ln_beta.row_mut(0),
                    );
                    outer_acc(&mut grads.proj_weight, &step.average, &dz);
                    add_assign(grads.proj_bias.row_mut(0), &dz);
                    let mut d_avg = vec![0.0; cfg.embed_dim];
                    mat_vec_acc(&w.proj_weight, &dz, &mut d_avg);

                    for (n, &id) in step.ids.iter().enumerate() {
                        let e_n = w.embedding.row(id);
                        let s = dot(&d_avg, e_n) / denom;
                        if cfg.position_trainable {
                            for h in 0..heads {
                                axpy(s, e_n, grads.position.row_mut(h * n_hist + n));
                            }
                        }
                        if id != pad {
                            let mut d_e = vec![0.0; cfg.embed_dim];
                            axpy(step.slot_weights[n], &d_avg, &mut d_e);
                            for h in 0..heads {
                                axpy(s, w.position.row(h * n_hist + n), &mut d_e);
                            }
                            add_assign(grads.embedding.row_mut(id), &d_e);
                        }
                    }
                }
                Ok(())
            }
            (Variant::Stateless1Emb | Variant::Concat2Emb, PredictionCache::Embedding(contexts)) => {
                if contexts.len() != d_outputs.len() {
                    return Err(mismatch());
                }
                let d_e = cfg.embed_dim;
                for (ctx, dg) in contexts.iter().zip(d_outputs) {
                    for (n, &id) in ctx.iter().enumerate() {
                        if id != pad {
                            add_assign(grads.embedding.row_mut(id), &dg[n * d_e..(n + 1) * d_e]);
                        }
                    }
                }
                Ok(())
            }
            (Variant::Lstm, PredictionCache::Lstm { ids, steps }) => {
                if steps.len() != d_outputs.len() || grads.lstm.len() != w.lstm.len() {
                    return Err(mismatch());
                }
                let layers = w.lstm.len();
                let mut d_out_carry: Vec<Vec<f64>> = vec![vec![0.0; cfg.lstm_proj]; layers];
                let mut d_cell_carry: Vec<Vec<f64>> = vec![vec![0.0; cfg.lstm_units]; layers];
                for s in (0..steps.len()).rev() {
                    let mut d_from_above = d_outputs[s].clone();
                    for l in (0..layers).rev() {
                        let mut d_out = d_from_above;
                        add_assign(&mut d_out, &d_out_carry[l]);
                        let g = lstm_step_backward(&w.lstm[l], &steps[s][l], &d_out, &d_cell_carry[l], &mut grads.lstm[l]);
                        d_out_carry[l] = g.d_prev_output;
                        d_cell_carry[l] = g.d_prev_cell;
                        d_from_above = g.d_input;
                    }
                    // what remains is the gradient of the embedding consumed at step s
                    if ids[s] != pad {
                        add_assign(grads.embedding.row_mut(ids[s]), &d_from_above);
                    }
                }
                Ok(())
            }
            _ => Err(mismatch()),
        }
    }
}
