//! Decoding over encoder frames, lookup-table conversion and step timing.

mod beam;
mod greedy;
mod lookup;
mod timing;

pub use beam::{beam_decode, NBestEntry};
pub use greedy::{greedy_decode, GreedyOutput};
pub use lookup::{convert_to_lookup, LookupTable, DEFAULT_LOOKUP_BUDGET};
pub use timing::{
    bench_decoders, step_flops, step_timer, BenchRecord, BenchReport, DecoderStepBench, TimingStats,
};

use crate::error::{Error, Result};
use crate::math::Matrix;

/// Encoder output, one row `f_t` per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderFrames {
    frames: Matrix,
}

impl EncoderFrames {
    pub fn new(frames: Matrix) -> Result<Self> {
        if !frames.is_finite() {
            return Err(Error::Domain("encoder frames must be finite".into()));
        }
        Ok(Self { frames })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn empty(dim: usize) -> Self {
        Self { frames: Matrix::zeros(0, dim) }
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.frames.row(t)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.frames
    }
}

/// Index of the largest entry; the first one wins ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
