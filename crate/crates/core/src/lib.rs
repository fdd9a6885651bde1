//! Tied and reduced transducer decoders.
//!
//! The library covers the prediction and joint networks of several decoder
//! families, greedy and beam decoding, lookup-table conversion of
//! limited-context prediction networks, a transducer loss with hand-derived
//! gradients, edit-based minimum Bayes risk fine-tuning, model archives and a
//! step-latency benchmark.

pub mod archive;
pub mod cli;
pub mod decode;
pub mod decoder;
pub mod error;
pub mod math;
pub mod training;

pub use error::{Error, Result};
