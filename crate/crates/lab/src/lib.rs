//! Reproduction harness: configuration, BER sweeps, training and runtime
//! benchmarks for the SC-IM-NOMA receivers in `scim-noma`.

pub mod bench;
pub mod config;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use bench::{run_bench, RuntimeReport};
pub use config::{parse_config, parse_config_str, DetectorKind, SimConfig};
pub use sweep::{cmd_train, run_sweep, BerCurve, BerRow};

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("DeepSIC-IM needs a model: set `model`, enable `train_inline`, or run `train` first")]
    MissingModel,
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    DeepSic(#[from] scim_noma::deepsic::DeepSicError),
    #[error(transparent)]
    Detect(#[from] scim_noma::ml_detectors::DetectError),
    #[error(transparent)]
    Codec(#[from] scim_noma::im_codec::CodecError),
    #[error(transparent)]
    Channel(#[from] scim_noma::channel::ChannelError),
    #[error("runtime ordering violated: {0}")]
    BenchOrdering(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(PathBuf::new(), e)
    }
}
