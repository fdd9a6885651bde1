//! Transducer loss, backpropagation, EMBR and the synthetic training task.

mod data;
mod embr;
mod loss;
mod network;
mod train;

pub use data::{make_toy_dataset, render_features, ToyDataset, ToyTaskSpec, Utterance};
pub use embr::{
    edit_distance, embr_hypotheses, embr_hypothesis_gradient, embr_hypothesis_risk, embr_risk, embr_risk_scaled, EmbrConfig, EmbrRisk,
    NBestList,
};
pub use loss::{transducer_loss, TransducerLattice, TransducerLoss};
pub use network::{backprop_decoder, sequence_loss, LatticeForward, ToyEncoder, Transducer, TransducerGrads};
pub use train::{
    batch_gradient, dev_risk, embr_step, embr_train, init_transducer, token_error_rate, train, train_model,
    EmbrOutcome, EmbrStepStats, EpochMetrics, Sgd, TrainConfig, TrainOutcome,
};
