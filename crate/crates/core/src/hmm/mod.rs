//! Bite-sequencing preferences: simulated meals, discrete HMMs trained on
//! them, online updates from observed meals, and next-bite prediction.

mod model;
mod predict;
mod sequences;
mod stats;

use thiserror::Error;

pub use model::{
    baum_welch, forward_loglik, online_update, train, DiscreteHmm, TrainOptions, TrainingInfo, ONLINE_SMOOTHING,
};
pub use predict::{evaluate_accuracy, next_symbol_distribution, predict_next, random_choice, random_policy};
pub use sequences::{
    parse_corpus, simulate_sequences, write_corpus, EatingPreference, MealSpec, UserPrefProfile, REPEAT_PENALTY,
};
pub use stats::{kruskal_wallis, KruskalWallis};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HmmError {
    #[error("meal has no bites")]
    EmptyMeal,
    #[error("every training weight is zero")]
    DegenerateInput,
    #[error("no items remaining")]
    NoRemainingItems,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model parse error: {0}")]
    Parse(String),
}
