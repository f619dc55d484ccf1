//! Demand forecasting: calendar/seasonal feature engineering, closed-form
//! linear regression, and LSTM/GRU recurrent models trained from scratch with
//! backpropagation through time and a seeded, fully deterministic trainer.

mod cells;
mod features;
mod linear;
mod train;

pub use cells::{
    forward_window, gru_cell, loss_and_gradients, lstm_cell, CellKind, CellParams, GateParams,
    GruParams, LstmParams, RecurrentParams,
};
pub use features::{engineer_features, FeatureNorm, FeatureRow, SeasonalProfile, INPUT_SIZE};
pub use linear::fit_linear;
pub use train::{
    one_step_eval, predict, train, LossHistory, ModelKind, ModelParams, TrainConfig, TrainedModel,
};

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum ForecastError {
    ShapeMismatch { what: &'static str, expected: usize, actual: usize },
    InsufficientData { needed: usize, available: usize },
    InsufficientHistory { needed: usize, available: usize },
    SingularSystem,
    MixedSeries,
    EmptySeries,
    BadModelFile(String),
}

impl fmt::Display for ForecastError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastError::ShapeMismatch { what, expected, actual } => {
                write!(f, "{what}: expected size {expected}, got {actual}")
            }
            ForecastError::InsufficientData { needed, available } => {
                write!(f, "series too short to train: need {needed} days, have {available}")
            }
            ForecastError::InsufficientHistory { needed, available } => {
                write!(f, "not enough history to predict: need {needed} days, have {available}")
            }
            ForecastError::SingularSystem => write!(f, "normal equations are singular"),
            ForecastError::MixedSeries => {
                write!(f, "records span more than one (store, item) series")
            }
            ForecastError::EmptySeries => write!(f, "series has no records"),
            ForecastError::BadModelFile(msg) => write!(f, "bad model file: {msg}"),
        }
    }
}

impl std::error::Error for ForecastError {}
