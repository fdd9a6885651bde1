//! Prediction and joint networks for the Reduced, Stateless1Emb, Concat2Emb
//! and LSTM decoders, with optional embedding/output weight tying.

mod config;
mod joint;
mod lstm;
mod prediction;
mod state;
mod weights;

pub use config::{DecoderConfig, Variant, PRESET_NAMES};
pub use lstm::{lstm_step, lstm_step_backward, LstmStepCache, LstmStepGrads};
pub use prediction::{predict_multi_head, predict_single_head, PredictionCache};
pub use state::{LstmCellState, PredictionState};
pub use weights::{
    param_count, tensor_specs, Init, LstmLayer, ModelWeights, OutputTokens, ParamCount, TensorCount,
    TensorSpec,
};

use crate::error::Result;

/// A decoder: configuration plus weights that satisfy it.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderModel {
    pub config: DecoderConfig,
    pub weights: ModelWeights,
}

impl DecoderModel {
    pub fn new(config: DecoderConfig, weights: ModelWeights) -> Result<Self> {
        weights.validate(&config)?;
        Ok(Self { config, weights })
    }

    /// Randomly initialized decoder, deterministic in `seed`.
    pub fn init(config: DecoderConfig, seed: u64) -> Result<Self> {
        let weights = ModelWeights::init(&config, seed)?;
        Ok(Self { config, weights })
    }

    pub fn param_count(&self) -> ParamCount {
        param_count(&self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::math::{layer_norm, swish, Matrix, SeededRng, LAYER_NORM_EPS};

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn single_head_examples() {
        let e = mat(&[&[1.0, 0.0], &[0.0, 2.0]]);
        assert_eq!(predict_single_head(&e, &Matrix::zeros(2, 2)).unwrap(), vec![0.0, 0.0]);
        let unit = mat(&[&[0.6, 0.8]]);
        assert_close(&predict_single_head(&unit, &unit).unwrap(), &[0.6, 0.8], 1e-12);
        let p = mat(&[&[1.0, 1.0], &[1.0, 0.0]]);
        assert_close(&predict_single_head(&e, &p).unwrap(), &[0.5, 0.0], 1e-12);
        assert!(matches!(predict_single_head(&e, &Matrix::zeros(1, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn multi_head_examples() {
        let e = mat(&[&[1.0, 1.0]]);
        let p = mat(&[&[1.0, 0.0], &[0.0, 3.0]]);
        assert_close(&predict_multi_head(&e, &p, 2).unwrap(), &[2.0, 2.0], 1e-12);

        let e = mat(&[&[0.3, -1.0, 2.0], &[1.5, 0.2, -0.4]]);
        let p1 = mat(&[&[0.1, 0.2, 0.3], &[-0.7, 0.5, 0.9]]);
        let mut both = Matrix::zeros(4, 3);
        let mut opposed = Matrix::zeros(4, 3);
        for n in 0..2 {
            both.row_mut(n).copy_from_slice(p1.row(n));
            both.row_mut(2 + n).copy_from_slice(p1.row(n));
            opposed.row_mut(n).copy_from_slice(p1.row(n));
            for (d, s) in opposed.row_mut(2 + n).iter_mut().zip(p1.row(n)) {
                *d = -s;
            }
        }
        assert_close(
            &predict_multi_head(&e, &both, 2).unwrap(),
            &predict_single_head(&e, &p1).unwrap(),
            1e-12,
        );
        assert_close(&predict_multi_head(&e, &opposed, 2).unwrap(), &[0.0; 3], 1e-12);
        assert!(matches!(predict_multi_head(&e, &p1, 2), Err(Error::Shape(_))));
    }

    #[test]
    fn single_head_is_degree_two_homogeneous() {
        let mut rng = SeededRng::new(4);
        let e = rng.gaussian_matrix(3, 5, 1.0);
        let p = rng.gaussian_matrix(3, 5, 1.0);
        let base = predict_single_head(&e, &p).unwrap();
        let mut scaled = e.clone();
        scaled.scale(-2.5);
        let out = predict_single_head(&scaled, &p).unwrap();
        let expect: Vec<f64> = base.iter().map(|v| v * 6.25).collect();
        assert_close(&out, &expect, 1e-9);
    }

    #[test]
    fn multi_head_with_one_head_is_single_head_bitwise() {
        let mut rng = SeededRng::new(8);
        for _ in 0..50 {
            let e = rng.gaussian_matrix(4, 6, 1.0);
            let p = rng.gaussian_matrix(4, 6, 1.0);
            assert_eq!(predict_multi_head(&e, &p, 1).unwrap(), predict_single_head(&e, &p).unwrap());
        }
    }

    fn toy(variant: Variant, history: usize) -> DecoderConfig {
        DecoderConfig {
            variant,
            vocab_size: 5,
            embed_dim: 4,
            joint_dim: 4,
            encoder_dim: 3,
            history,
            heads: 2,
            tied: true,
            lstm_layers: 2,
            lstm_units: 3,
            lstm_proj: 4,
            ..DecoderConfig::toy()
        }
    }

    #[test]
    fn embed_gathers_most_recent_first() {
        let m = DecoderModel::init(toy(Variant::Reduced, 2), 1).unwrap();
        let s = m.initial_state();
        assert!(m.embed(&s).unwrap().data().iter().all(|&v| v == 0.0));
        let s = m.advance(&s, 1).unwrap(); // b
        let s = m.advance(&s, 3).unwrap(); // a, most recent
        let e = m.embed(&s).unwrap();
        assert_eq!(e.row(0), m.weights.embedding.row(3));
        assert_eq!(e.row(1), m.weights.embedding.row(1));
        assert!(matches!(m.advance(&s, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn reduced_fresh_state_is_norm_of_bias() {
        let m = DecoderModel::init(toy(Variant::Reduced, 3), 2).unwrap();
        let g = m.prediction_forward(&m.initial_state()).unwrap();
        let w = &m.weights;
        let expect =
            swish(&layer_norm(w.proj_bias.row(0), w.ln_gamma.row(0), w.ln_beta.row(0), LAYER_NORM_EPS).unwrap());
        assert_eq!(g, expect);
    }

    #[test]
    fn reduced_output_dim_is_embed_dim() {
        for history in 1..6 {
            for heads in 1..4 {
                let cfg = DecoderConfig { heads, ..toy(Variant::Reduced, history) };
                let m = DecoderModel::init(cfg, 3).unwrap();
                let s = m.advance(&m.initial_state(), 2).unwrap();
                assert_eq!(m.prediction_forward(&s).unwrap().len(), 4);
            }
        }
    }

    #[test]
    fn head_permutation_invariance() {
        let cfg = DecoderConfig { heads: 3, ..toy(Variant::Reduced, 2) };
        let m = DecoderModel::init(cfg, 5).unwrap();
        let s = m.advance(&m.advance(&m.initial_state(), 1).unwrap(), 4).unwrap();
        let e = m.embed(&s).unwrap();
        let base = predict_multi_head(&e, &m.weights.position, 3).unwrap();
        let mut permuted = Matrix::zeros(6, 4);
        for (dst, src) in [(0, 2), (1, 0), (2, 1)] {
            for n in 0..2 {
                permuted.row_mut(dst * 2 + n).copy_from_slice(m.weights.position.row(src * 2 + n));
            }
        }
        assert_close(&predict_multi_head(&e, &permuted, 3).unwrap(), &base, 1e-12);
    }

    #[test]
    fn embedding_variants() {
        let m = DecoderModel::init(DecoderConfig { tied: false, joint_dim: 6, ..toy(Variant::Stateless1Emb, 1) }, 3)
            .unwrap();
        let s = m.advance(&m.initial_state(), 2).unwrap();
        assert_eq!(m.prediction_forward(&s).unwrap(), m.weights.embedding.row(2));

        let m = DecoderModel::init(DecoderConfig { tied: false, ..toy(Variant::Concat2Emb, 2) }, 3).unwrap();
        let s = m.advance(&m.advance(&m.initial_state(), 1).unwrap(), 0).unwrap();
        let g = m.prediction_forward(&s).unwrap();
        let mut expect = m.weights.embedding.row(0).to_vec();
        expect.extend_from_slice(m.weights.embedding.row(1));
        assert_eq!(g, expect);
        assert_eq!(g.len(), 8);
    }

    #[test]
    fn sequence_path_matches_stateful_path() {
        for (variant, history) in
            [(Variant::Reduced, 3), (Variant::Stateless1Emb, 1), (Variant::Concat2Emb, 2), (Variant::Lstm, 1)]
        {
            let m = DecoderModel::init(toy(variant, history), 6).unwrap();
            let labels = [2, 0, 4, 4, 1];
            let (outs, _) = m.predict_sequence(&labels).unwrap();
            let mut s = m.initial_state();
            assert_eq!(outs[0], m.prediction_forward(&s).unwrap());
            for (u, &l) in labels.iter().enumerate() {
                s = m.advance(&s, l).unwrap();
                assert_eq!(outs[u + 1], m.prediction_forward(&s).unwrap(), "{variant:?}");
            }
        }
    }

    #[test]
    fn zero_joint_gives_zero_logits() {
        let cfg = toy(Variant::Reduced, 2);
        let m = DecoderModel::new(cfg.clone(), ModelWeights::zeros(&cfg)).unwrap();
        let logits = m.joint_forward(&[0.3, -0.2, 1.0], &[0.1; 4]).unwrap();
        assert_eq!(logits, vec![0.0; 6]);
        assert!(matches!(m.joint_forward(&[0.0; 2], &[0.0; 4]), Err(Error::Shape(_))));
    }

    #[test]
    fn tied_output_selects_embedding_column() {
        let cfg = toy(Variant::Reduced, 2);
        let mut m = DecoderModel::init(cfg, 7).unwrap();
        m.weights.out_bias.fill(0.0);
        let k = 2;
        let mut h = vec![0.0; 4];
        h[k] = 1.0;
        let logits = m.output_logits(&h);
        for v in 0..5 {
            assert_eq!(logits[v], m.weights.embedding.get(v, k));
        }
        // aliasing: editing an embedding row moves that token's logit
        m.weights.embedding.set(3, k, 9.5);
        assert_eq!(m.output_logits(&h)[3], 9.5);
    }

    #[test]
    fn tied_equals_untied_copy() {
        let m = DecoderModel::init(toy(Variant::Reduced, 3), 11).unwrap();
        let u = m.untie();
        assert!(!u.weights.is_tied());
        let s = m.advance(&m.initial_state(), 3).unwrap();
        let g = m.prediction_forward(&s).unwrap();
        let f = [0.2, -1.0, 0.7];
        assert_eq!(m.joint_forward(&f, &g).unwrap(), u.joint_forward(&f, &g).unwrap());
    }

    #[test]
    fn new_rejects_nonzero_pad_row() {
        let cfg = toy(Variant::Reduced, 2);
        let mut w = ModelWeights::init(&cfg, 1).unwrap();
        w.embedding.set(cfg.pad_id(), 0, 1.0);
        assert!(matches!(DecoderModel::new(cfg, w), Err(Error::Validation(_))));
    }
}
