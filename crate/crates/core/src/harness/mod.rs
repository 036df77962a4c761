//! Metrics, experiment orchestration and noise sweeps.

use std::path::PathBuf;

use thiserror::Error;

use crate::beats::BeatError;
use crate::fusion::FusionError;
use crate::gaf::GafError;
use crate::models::ModelError;
use crate::noise::NoiseError;
use crate::wfdb::WfdbError;

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod sweep;

pub use config::{ExperimentConfig, SourceFormat};
pub use experiment::{run_experiment, ExperimentReport, Method, TrainedSystem};
pub use metrics::{compute_metrics, Average, Metrics};
pub use sweep::{noise_sweep, sweep_grid, write_sweep_csv, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 1 config, 2 data or I/O, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Data(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for HarnessError {
            fn from(e: $t) -> Self {
                HarnessError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(WfdbError, BeatError, GafError, NoiseError);

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite(_) => HarnessError::Numeric(e.to_string()),
            ModelError::BadConfig(_) => HarnessError::Config(e.to_string()),
            other => HarnessError::Data(other.to_string()),
        }
    }
}

impl From<FusionError> for HarnessError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Model(m) => m.into(),
            FusionError::BadSimplex { sum, .. } if !sum.is_finite() => HarnessError::Numeric(e.to_string()),
            other => HarnessError::Data(other.to_string()),
        }
    }
}
