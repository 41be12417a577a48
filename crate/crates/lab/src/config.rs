//! Simulation configuration.
//!
//! Configs are flat TOML files. Every key is optional and defaults to the
//! reference two-user setup:
//!
//! | key                 | default                               | meaning                                   |
//! |---------------------|---------------------------------------|-------------------------------------------|
//! | `n`, `k`, `m`       | 4, 1, 4                               | subcarriers, active subcarriers, PSK order |
//! | `gains`             | `[[2,2,2,2],[1,1,1,1]]`               | real channel gain per user and subcarrier |
//! | `power`             | `[2, 1]`                              | power coefficient per user                |
//! | `detectors`         | `["jml", "mlsic", "deepsic"]`         | receivers to sweep / bench                |
//! | `snr_db`            | `[0, 1, .., 24]`                      | test SNR grid (dB, strictly increasing; `inf` = noiseless) |
//! | `blocks`            | 1000000                               | Monte-Carlo blocks per SNR point          |
//! | `fast`              | false                                 | cap blocks at 10000 for quick runs        |
//! | `seed`              | 0                                     | master seed                               |
//! | `output`            | `"ber.csv"`                           | CSV path written by `sweep`               |
//! | `model`             | unset                                 | DeepSIC-IM bundle for `sweep` / `bench`   |
//! | `train_inline`      | false                                 | train DeepSIC-IM inside `sweep` when no model is given |
//! | `lambda_train_grid` | `[]`                                  | train and sweep one model per training SNR |
//! | `lambda_train`      | 18                                    | training SNR (dB)                         |
//! | `epochs`            | 500                                   | training epochs                           |
//! | `samples_per_epoch` | 4000                                  | training samples per epoch                |
//! | `batch_size`        | 200                                   | samples per Adam step                     |
//! | `learning_rate`     | 0.001                                 | Adam step size                            |
//! | `end_to_end`        | true                                  | backpropagate user 2's loss into DNN 1    |
//! | `bench_samples`     | 10000                                 | timed detections per receiver             |
//! | `bench_snr_db`      | 10                                    | SNR of the benchmark input stream         |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use scim_noma::{ImScheme, NomaChannel, TrainConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Blocks per SNR point in fast mode.
pub const FAST_BLOCKS: u64 = 10_000;
/// Fewest timed samples accepted by the benchmark.
pub const MIN_BENCH_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid override `{0}`, expected KEY=VALUE")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Jml,
    Mlsic,
    Deepsic,
}

impl DetectorKind {
    /// Stable identifier mixed into per-point seeds.
    pub fn id(self) -> u64 {
        match self {
            DetectorKind::Jml => 0,
            DetectorKind::Mlsic => 1,
            DetectorKind::Deepsic => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Jml => "jml",
            DetectorKind::Mlsic => "mlsic",
            DetectorKind::Deepsic => "deepsic",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jml" => Ok(DetectorKind::Jml),
            "mlsic" => Ok(DetectorKind::Mlsic),
            "deepsic" => Ok(DetectorKind::Deepsic),
            _ => Err(ConfigError::Invalid(format!("unknown detector `{s}`"))),
        }
    }
}

/// On-disk form of the configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawConfig {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub gains: Vec<Vec<f64>>,
    pub power: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    pub snr_db: Vec<f64>,
    pub blocks: u64,
    pub fast: bool,
    pub seed: u64,
    pub output: PathBuf,
    pub model: Option<PathBuf>,
    pub train_inline: bool,
    pub lambda_train_grid: Vec<f64>,
    pub lambda_train: f64,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub end_to_end: bool,
    pub bench_samples: usize,
    pub bench_snr_db: f64,
}

impl Default for RawConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RawConfig {
            n: 4,
            k: 1,
            m: 4,
            gains: vec![vec![2.0; 4], vec![1.0; 4]],
            power: vec![2.0, 1.0],
            detectors: vec![
                DetectorKind::Jml,
                DetectorKind::Mlsic,
                DetectorKind::Deepsic,
            ],
            snr_db: (0..=24).map(f64::from).collect(),
            blocks: 1_000_000,
            fast: false,
            seed: 0,
            output: PathBuf::from("ber.csv"),
            model: None,
            train_inline: false,
            lambda_train_grid: Vec::new(),
            lambda_train: train.lambda_train,
            epochs: train.epochs,
            samples_per_epoch: train.samples_per_epoch,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            end_to_end: train.end_to_end,
            bench_samples: MIN_BENCH_SAMPLES,
            bench_snr_db: 10.0,
        }
    }
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub raw: RawConfig,
    pub scheme: ImScheme,
    pub channel: NomaChannel,
    pub train: TrainConfig,
}

impl SimConfig {
    /// Blocks per SNR point after applying fast mode.
    pub fn blocks(&self) -> u64 {
        if self.raw.fast {
            self.raw.blocks.min(FAST_BLOCKS)
        } else {
            self.raw.blocks
        }
    }

    pub fn detectors(&self) -> &[DetectorKind] {
        &self.raw.detectors
    }

    pub fn snr_grid(&self) -> &[f64] {
        &self.raw.snr_db
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    /// Training config for a given training SNR.
    pub fn train_at(&self, lambda_train: f64) -> TrainConfig {
        TrainConfig {
            lambda_train,
            ..self.train
        }
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).expect("config is always serializable")
    }
}

impl TryFrom<RawConfig> for SimConfig {
    type Error = ConfigError;

    fn try_from(raw: RawConfig) -> Result<Self, ConfigError> {
        let invalid = |msg: String| ConfigError::Invalid(msg);
        let scheme = ImScheme::new(raw.n, raw.k, raw.m).map_err(|e| invalid(e.to_string()))?;
        for (user, h) in raw.gains.iter().enumerate() {
            if h.len() != raw.n {
                return Err(invalid(format!(
                    "gains[{user}] has {} entries but n = {}",
                    h.len(),
                    raw.n
                )));
            }
        }
        if raw.power.len() != raw.gains.len() {
            return Err(invalid(format!(
                "power has {} entries for {} users",
                raw.power.len(),
                raw.gains.len()
            )));
        }
        let channel =
            NomaChannel::from_real(&raw.gains, &raw.power).map_err(|e| invalid(e.to_string()))?;
        if channel.users() != 2 {
            return Err(invalid(format!(
                "detectors support exactly 2 users, got {}",
                channel.users()
            )));
        }
        if raw.snr_db.is_empty() {
            return Err(invalid("snr_db must not be empty".into()));
        }
        if raw.snr_db.iter().any(|s| s.is_nan()) || !raw.snr_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("snr_db must be strictly increasing".into()));
        }
        if raw.blocks == 0 {
            return Err(invalid("blocks must be at least 1".into()));
        }
        if raw.detectors.is_empty() {
            return Err(invalid("detectors must not be empty".into()));
        }
        if raw.bench_samples < MIN_BENCH_SAMPLES {
            return Err(invalid(format!(
                "bench_samples must be at least {MIN_BENCH_SAMPLES}"
            )));
        }
        if raw.lambda_train_grid.iter().any(|l| !l.is_finite()) {
            return Err(invalid("lambda_train_grid entries must be finite".into()));
        }
        let train = TrainConfig {
            lambda_train: raw.lambda_train,
            epochs: raw.epochs,
            samples_per_epoch: raw.samples_per_epoch,
            batch_size: raw.batch_size,
            learning_rate: raw.learning_rate,
            seed: raw.seed,
            end_to_end: raw.end_to_end,
        };
        train.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(SimConfig {
            raw,
            scheme,
            channel,
            train,
        })
    }
}

fn parse_table(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>()
        .map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Applies `KEY=VALUE` overrides, where `VALUE` is a TOML value. Bare words
/// that are not valid TOML are taken as strings.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<(), ConfigError> {
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(item.clone()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Override(item.clone()));
        }
        let value = value.trim();
        let parsed = match parse_table(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("just inserted"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        table.insert(key.to_string(), parsed);
    }
    Ok(())
}

/// Strictly parses config text plus overrides. Unknown keys are errors.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<SimConfig, ConfigError> {
    // Checking the file text on its own first keeps line numbers in errors.
    toml::from_str::<RawConfig>(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let mut table = parse_table(text)?;
    apply_overrides(&mut table, overrides)?;
    let raw = RawConfig::deserialize(table).map_err(|e| ConfigError::Parse(e.to_string()))?;
    SimConfig::try_from(raw)
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text, overrides)
}
