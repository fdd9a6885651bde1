//! Synthetic label-to-feature task.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, SeededRng};

/// Shape of the synthetic task. Every label is rendered as a run of
/// noisy one-hot feature frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTaskSpec {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub feature_dim: usize,
    pub noise_std: f64,
    pub train_size: usize,
    pub dev_size: usize,
    /// Seed of the train/dev assignment.
    pub split_seed: u64,
}

impl Default for ToyTaskSpec {
    fn default() -> Self {
        Self {
            vocab_size: 6,
            min_len: 2,
            max_len: 6,
            min_frames: 2,
            max_frames: 4,
            feature_dim: 8,
            noise_std: 0.15,
            train_size: 400,
            dev_size: 50,
            split_seed: 1,
        }
    }
}

impl ToyTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 {
            return fail("task vocab_size must be positive".into());
        }
        if self.feature_dim < self.vocab_size {
            return fail(format!(
                "feature_dim {} cannot hold one-hot vectors of {} labels",
                self.feature_dim, self.vocab_size
            ));
        }
        if self.min_len > self.max_len || self.max_len == 0 {
            return fail(format!("bad label length range {}..={}", self.min_len, self.max_len));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return fail(format!("bad frames-per-label range {}..={}", self.min_frames, self.max_frames));
        }
        if self.vocab_size < 2 && self.max_len > 1 {
            return fail("sequences longer than one label need at least two labels".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be finite and non-negative".into());
        }
        if self.train_size == 0 {
            return fail("train_size must be positive".into());
        }
        Ok(())
    }
}

/// Features and their label sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    /// `T × feature_dim`
    pub features: Matrix,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
}

/// Renders `labels[i]` as `durations[i]` frames of its one-hot vector plus
/// Gaussian noise.
pub fn render_features(
    labels: &[usize],
    durations: &[usize],
    feature_dim: usize,
    noise_std: f64,
    rng: &mut SeededRng,
) -> Result<Matrix> {
    if labels.len() != durations.len() {
        return Err(Error::Shape(format!("{} labels but {} durations", labels.len(), durations.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= feature_dim) {
        return Err(Error::Domain(format!("label {bad} does not fit {feature_dim} feature dims")));
    }
    let total: usize = durations.iter().sum();
    let mut features = Matrix::zeros(total, feature_dim);
    let mut t = 0;
    for (&label, &frames) in labels.iter().zip(durations) {
        for _ in 0..frames {
            let row = features.row_mut(t);
            row[label] = 1.0;
            if noise_std > 0.0 {
                for v in row.iter_mut() {
                    *v += noise_std * rng.gaussian();
                }
            }
            t += 1;
        }
    }
    Ok(features)
}

/// Random label sequence without immediate repeats.
fn sample_labels(spec: &ToyTaskSpec, rng: &mut SeededRng) -> Vec<usize> {
    let len = rng.range_inclusive(spec.min_len, spec.max_len);
    let mut labels: Vec<usize> = Vec::with_capacity(len);
    for _ in 0..len {
        let label = match labels.last() {
            // draw from the other vocab_size - 1 labels
            Some(&prev) => {
                let l = rng.below(spec.vocab_size - 1);
                if l >= prev {
                    l + 1
                } else {
                    l
                }
            }
            None => rng.below(spec.vocab_size),
        };
        labels.push(label);
    }
    labels
}

/// Builds train and dev sets whose label sequences do not overlap.
pub fn make_toy_dataset(spec: &ToyTaskSpec, seed: u64) -> Result<ToyDataset> {
    spec.validate()?;
    let wanted = spec.train_size + spec.dev_size;
    let mut rng = SeededRng::new(seed);
    let mut seen = BTreeSet::new();
    let mut sequences = Vec::with_capacity(wanted);
    let mut attempts = 0usize;
    while sequences.len() < wanted {
        attempts += 1;
        if attempts > 100 * wanted + 1000 {
            return Err(Error::Config(format!(
                "cannot draw {wanted} distinct label sequences from this task; lower the dataset size"
            )));
        }
        let labels = sample_labels(spec, &mut rng);
        if seen.insert(labels.clone()) {
            sequences.push(labels);
        }
    }

    let mut utterances = Vec::with_capacity(wanted);
    for labels in sequences {
        let durations: Vec<usize> =
            labels.iter().map(|_| rng.range_inclusive(spec.min_frames, spec.max_frames)).collect();
        let features = render_features(&labels, &durations, spec.feature_dim, spec.noise_std, &mut rng)?;
        utterances.push(Utterance { features, labels });
    }

    let mut order: Vec<usize> = (0..wanted).collect();
    SeededRng::new(spec.split_seed).shuffle(&mut order);
    let mut slots: Vec<Option<Utterance>> = utterances.into_iter().map(Some).collect();
    let mut take = |i: usize| slots[i].take().expect("each index used once");
    let dev = order[..spec.dev_size].iter().map(|&i| take(i)).collect();
    let train = order[spec.dev_size..].iter().map(|&i| take(i)).collect();
    Ok(ToyDataset { train, dev })
}
