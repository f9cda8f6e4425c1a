//! The per-frame conv block, bidirectional LSTM, and sigmoid head, with
//! single-model and ensemble prediction rules, ablation configurations, and
//! checkpoint persistence.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, GRZM_MAGIC,
    GRZM_VERSION,
};
pub use config::{
    configure_ablation, ClassifierMode, InputMode, ModelConfig, ABLATION_NAMES, BAND_NAMES,
};
pub use forward::{
    backward, decide, ensemble_vote, forward, median_of_last, predict_ensemble, predict_single,
    prepare_for_model, ForwardTrace, ModelGrads,
};
pub use params::{
    param_shapes, EnsembleParams, ModelParams, DEFAULT_MEMBERS, PARAM_NAMES,
};
