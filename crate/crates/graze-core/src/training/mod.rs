//! Augmentation, member/ensemble training, and cross-validation.

pub mod augment;
pub mod trainer;

pub use augment::{augment_crop, augment_flip, temporal_dropout, TemporalDropoutConfig};
pub use trainer::{
    augment_sample, cross_validate, evaluate_ensemble, evaluate_member, prepare_set, train_ensemble,
    train_member, CrossvalReport, EpochStats, TrainConfig, TrainLog,
};
