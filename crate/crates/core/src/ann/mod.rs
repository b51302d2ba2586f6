//! Multilayer perceptron trained online with the generalized delta rule.
//!
//! Per neuron: `u_k = sum_j w_kj x_j`, `v_k = u_k + b_k`, `y_k = phi(v_k)`.
//! Training minimises `1/2 e^2` with `e = d - y`; the output local gradient
//! is `delta = e phi'(v)`, hidden layers use
//! `delta_j = phi'(v_j) sum_k delta_k w_kj`, and every weight moves by
//! `alpha delta_k x_j` after each sample.

mod activation;
mod export;
mod network;
mod train;

pub use activation::{
    activate_layer, activation, activation_derivative, backprop_layer, ActivationKind,
};
pub use export::{export, export_c_source, export_portable, import_portable, ExportFormat, WEIGHT_FORMAT_VERSION};
pub use network::{ForwardTrace, Layer, LayerTrace, MlpNetwork, TrainSample, DEFAULT_LAYER_SIZES};
pub use train::{
    architecture_search, dataset_mse, train, validate, Candidate, CandidateResult, RankRule,
    SearchOutcome, TrainConfig, TrainOutcome, ValidationReport, ERROR_BIN_WIDTH,
    PRECISION_THRESHOLD,
};

/// Per-sample cost `1/2 e^2`.
pub fn loss(e: f64) -> f64 {
    0.5 * e * e
}
