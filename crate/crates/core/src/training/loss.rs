//! Transducer loss over the `T × (U+1)` alignment lattice.

use crate::error::{Error, Result};
use crate::math::{log_add_exp, log_softmax, Matrix};

/// Forward and backward variables of one utterance.
///
/// Node `(t, u)` means `u` labels emitted and frame `t` current. Blank moves
/// to `(t+1, u)`, label `y_{u+1}` moves to `(t, u+1)`, and the last path step
/// is a blank out of `(T-1, U)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransducerLattice {
    pub frames: usize,
    pub target_len: usize,
    pub log_alpha: Matrix,
    pub log_beta: Matrix,
    /// `log P(blank | t, u)`, `T × (U+1)`.
    pub blank_log_probs: Matrix,
    /// `log P(y_{u+1} | t, u)`, `T × U`.
    pub label_log_probs: Matrix,
}

impl TransducerLattice {
    /// Builds the lattice from per-node log-probabilities, where
    /// `log_probs[t]` is a `(U+1) × (|V|+1)` matrix with blank last.
    pub fn new(log_probs: &[Matrix], target: &[usize]) -> Result<Self> {
        let frames = log_probs.len();
        let target_len = target.len();
        if frames == 0 {
            return Err(Error::Domain("no alignment exists for zero frames".into()));
        }
        let outputs = log_probs[0].cols();
        if outputs == 0 {
            return Err(Error::Shape("empty output distribution".into()));
        }
        let blank = outputs - 1;
        for m in log_probs {
            if m.rows() != target_len + 1 || m.cols() != outputs {
                return Err(Error::Shape(format!(
                    "lattice slice is {}x{}, expected {}x{outputs}",
                    m.rows(),
                    m.cols(),
                    target_len + 1
                )));
            }
        }
        if let Some(&bad) = target.iter().find(|&&y| y >= blank) {
            return Err(Error::Domain(format!("target label {bad} outside vocabulary of {blank}")));
        }

        let mut blank_log_probs = Matrix::zeros(frames, target_len + 1);
        let mut label_log_probs = Matrix::zeros(frames, target_len);
        for (t, m) in log_probs.iter().enumerate() {
            for u in 0..=target_len {
                blank_log_probs.set(t, u, m.get(u, blank));
                if u < target_len {
                    label_log_probs.set(t, u, m.get(u, target[u]));
                }
            }
        }

        let ninf = f64::NEG_INFINITY;
        let mut log_alpha = Matrix::zeros(frames, target_len + 1);
        log_alpha.fill(ninf);
        for t in 0..frames {
            for u in 0..=target_len {
                let mut a = if t == 0 && u == 0 { 0.0 } else { ninf };
                if t > 0 {
                    a = log_add_exp(a, log_alpha.get(t - 1, u) + blank_log_probs.get(t - 1, u));
                }
                if u > 0 {
                    a = log_add_exp(a, log_alpha.get(t, u - 1) + label_log_probs.get(t, u - 1));
                }
                log_alpha.set(t, u, a);
            }
        }

        let mut log_beta = Matrix::zeros(frames, target_len + 1);
        log_beta.fill(ninf);
        for t in (0..frames).rev() {
            for u in (0..=target_len).rev() {
                let mut b = if t == frames - 1 && u == target_len { blank_log_probs.get(t, u) } else { ninf };
                if t + 1 < frames {
                    b = log_add_exp(b, log_beta.get(t + 1, u) + blank_log_probs.get(t, u));
                }
                if u < target_len {
                    b = log_add_exp(b, log_beta.get(t, u + 1) + label_log_probs.get(t, u));
                }
                log_beta.set(t, u, b);
            }
        }

        Ok(Self { frames, target_len, log_alpha, log_beta, blank_log_probs, label_log_probs })
    }

    /// `log P(y | x)` from the forward variables.
    pub fn log_likelihood(&self) -> f64 {
        self.log_alpha.get(self.frames - 1, self.target_len)
            + self.blank_log_probs.get(self.frames - 1, self.target_len)
    }

    /// `log P(y | x)` from the backward variables.
    pub fn log_likelihood_backward(&self) -> f64 {
        self.log_beta.get(0, 0)
    }
}

/// Loss value, logit gradients and the lattice they came from.
#[derive(Clone, Debug)]
pub struct TransducerLoss {
    pub loss: f64,
    /// `∂loss/∂logits`, same layout as the input grid.
    pub d_logits: Vec<Matrix>,
    pub lattice: TransducerLattice,
}

/// Negative log-likelihood of `target` given logits `logits[t]` of shape
/// `(U+1) × (|V|+1)`, and its gradient with respect to every logit.
pub fn transducer_loss(logits: &[Matrix], target: &[usize]) -> Result<TransducerLoss> {
    if logits.iter().any(|m| !m.is_finite()) {
        return Err(Error::Domain("logits must be finite".into()));
    }
    let mut log_probs = Vec::with_capacity(logits.len());
    for m in logits {
        let mut lp = Matrix::zeros(m.rows(), m.cols());
        for u in 0..m.rows() {
            lp.row_mut(u).copy_from_slice(&log_softmax(m.row(u))?);
        }
        log_probs.push(lp);
    }
    let lattice = TransducerLattice::new(&log_probs, target)?;
    let log_like = lattice.log_likelihood();
    if !log_like.is_finite() {
        return Err(Error::Domain("target has zero probability".into()));
    }

    let frames = lattice.frames;
    let u_len = lattice.target_len;
    let blank = logits[0].cols() - 1;
    let mut d_logits = Vec::with_capacity(frames);
    for (t, lp) in log_probs.iter().enumerate() {
        let mut d = Matrix::zeros(u_len + 1, blank + 1);
        for u in 0..=u_len {
            let alpha = lattice.log_alpha.get(t, u);
            let occupancy = (alpha + lattice.log_beta.get(t, u) - log_like).exp();
            let row = d.row_mut(u);
            for (k, v) in row.iter_mut().enumerate() {
                *v = lp.get(u, k).exp() * occupancy;
            }
            let beta_blank = if t + 1 < frames {
                lattice.log_beta.get(t + 1, u)
            } else if u == u_len {
                0.0
            } else {
                f64::NEG_INFINITY
            };
            row[blank] -= (alpha + lattice.blank_log_probs.get(t, u) + beta_blank - log_like).exp();
            if u < u_len {
                let flow = alpha + lattice.label_log_probs.get(t, u) + lattice.log_beta.get(t, u + 1) - log_like;
                row[target[u]] -= flow.exp();
            }
        }
        d_logits.push(d);
    }
    Ok(TransducerLoss { loss: -log_like, d_logits, lattice })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_no_labels() {
        let logits = vec![Matrix::from_rows(&[vec![0.3, -1.0, 0.7]]).unwrap()];
        let out = transducer_loss(&logits, &[]).unwrap();
        let lp = log_softmax(logits[0].row(0)).unwrap();
        assert!((out.loss + lp[2]).abs() < 1e-12);
    }

    #[test]
    fn single_frame_one_label() {
        // one token plus blank; P(a | 0,0) = 0.5, P(blank | 0,1) = 0.5
        let logits = vec![Matrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap()];
        let out = transducer_loss(&logits, &[0]).unwrap();
        assert!((out.loss - 1.386294).abs() < 1e-6);
        assert!((out.loss + 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_frames_rejected() {
        assert!(matches!(transducer_loss(&[], &[]), Err(Error::Domain(_))));
    }
}
