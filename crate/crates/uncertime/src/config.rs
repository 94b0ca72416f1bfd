//! Run configuration: a TOML file whose keys are validated against the
//! declared registry (unknown keys are rejected with the offending name),
//! merged with command-line overrides. Flags beat the file; the file beats
//! the defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uncertime_core::calibrate;
use uncertime_core::eval;
use uncertime_core::eventlog::{SchemaSpec, SyntheticToggles};
use uncertime_core::layers::{Arch, DropoutMode, ModelSpec};
use uncertime_core::train::TrainConfig;

use crate::CliError;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default = "SchemaConfig::default_case_id")]
    pub case_id: String,
    #[serde(default = "SchemaConfig::default_activity")]
    pub activity: String,
    #[serde(default = "SchemaConfig::default_timestamp")]
    pub timestamp: String,
    #[serde(default = "SchemaConfig::default_format")]
    pub timestamp_format: String,
    #[serde(default = "SchemaConfig::default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub numeric: Vec<String>,
    #[serde(default = "SchemaConfig::default_sequence_length")]
    pub sequence_length: usize,
    #[serde(default = "default_true")]
    pub event_number: bool,
    #[serde(default = "default_true")]
    pub elapsed_since_previous: bool,
    #[serde(default = "default_true")]
    pub elapsed_since_start: bool,
    #[serde(default = "default_true")]
    pub day_of_week: bool,
    #[serde(default = "default_true")]
    pub hour_of_day: bool,
}

impl SchemaConfig {
    fn default_case_id() -> String {
        "case_id".into()
    }
    fn default_activity() -> String {
        "activity".into()
    }
    fn default_timestamp() -> String {
        "timestamp".into()
    }
    fn default_format() -> String {
        "%Y-%m-%d %H:%M:%S".into()
    }
    fn default_delimiter() -> String {
        ",".into()
    }
    fn default_sequence_length() -> usize {
        12
    }

    pub fn delimiter_byte(&self) -> Result<u8, CliError> {
        let bytes = self.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(CliError::Config(format!(
                "schema.delimiter must be one byte, got `{}`",
                self.delimiter
            )));
        }
        Ok(bytes[0])
    }

    pub fn to_spec(&self) -> Result<SchemaSpec, CliError> {
        let spec = SchemaSpec {
            case_id_column: self.case_id.clone(),
            activity_column: self.activity.clone(),
            timestamp_column: self.timestamp.clone(),
            timestamp_format: self.timestamp_format.clone(),
            categorical: self.categorical.clone(),
            numeric: self.numeric.clone(),
            sequence_length: self.sequence_length,
            synthetic: SyntheticToggles {
                event_number: self.event_number,
                elapsed_since_previous: self.elapsed_since_previous,
                elapsed_since_start: self.elapsed_since_start,
                day_of_week: self.day_of_week,
                hour_of_day: self.hour_of_day,
            },
        };
        spec.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

impl Default for SchemaConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty schema section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "SplitConfig::default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "SplitConfig::default_validation_fraction")]
    pub validation_fraction: f64,
}

impl SplitConfig {
    fn default_test_fraction() -> f64 {
        0.15
    }
    fn default_validation_fraction() -> f64 {
        0.2
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty split section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "ModelConfig::default_arch")]
    pub arch: String,
    #[serde(default = "ModelConfig::default_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "ModelConfig::default_conv_channels")]
    pub conv_channels: Vec<usize>,
    #[serde(default = "ModelConfig::default_kernel_size")]
    pub kernel_size: usize,
    #[serde(default = "ModelConfig::default_dense_width")]
    pub dense_width: usize,
    #[serde(default = "ModelConfig::default_lstm_hidden")]
    pub lstm_hidden: usize,
    /// `none`, `fixed`, or `concrete`.
    #[serde(default = "ModelConfig::default_dropout")]
    pub dropout: String,
    #[serde(default = "ModelConfig::default_dropout_p")]
    pub dropout_p: f64,
    #[serde(default = "default_true")]
    pub heteroscedastic: bool,
    #[serde(default = "ModelConfig::default_temperature")]
    pub temperature: f64,
    #[serde(default = "ModelConfig::default_length_scale")]
    pub length_scale: f64,
}

impl ModelConfig {
    fn default_arch() -> String {
        "cnn".into()
    }
    fn default_embedding_dim() -> usize {
        8
    }
    fn default_conv_channels() -> Vec<usize> {
        vec![32, 32]
    }
    fn default_kernel_size() -> usize {
        3
    }
    fn default_dense_width() -> usize {
        64
    }
    fn default_lstm_hidden() -> usize {
        64
    }
    fn default_dropout() -> String {
        "concrete".into()
    }
    fn default_dropout_p() -> f64 {
        0.05
    }
    fn default_temperature() -> f64 {
        0.1
    }
    fn default_length_scale() -> f64 {
        1e-2
    }

    pub fn dropout_mode(&self) -> Result<DropoutMode, CliError> {
        match self.dropout.as_str() {
            "none" => Ok(DropoutMode::None),
            "fixed" => Ok(DropoutMode::Fixed(self.dropout_p)),
            "concrete" => Ok(DropoutMode::Concrete),
            other => Err(CliError::Config(format!(
                "model.dropout must be none|fixed|concrete, got `{other}`"
            ))),
        }
    }

    pub fn to_spec(&self, n_categorical: usize) -> Result<ModelSpec, CliError> {
        let arch = match self.arch.as_str() {
            "cnn" => Arch::Cnn,
            "lstm" => Arch::Lstm,
            other => {
                return Err(CliError::Config(format!(
                    "model.arch must be cnn|lstm, got `{other}`"
                )))
            }
        };
        Ok(ModelSpec {
            arch,
            embedding_dims: vec![self.embedding_dim; n_categorical],
            conv_channels: self.conv_channels.clone(),
            kernel_size: self.kernel_size,
            dense_width: self.dense_width,
            lstm_hidden: self.lstm_hidden,
            dropout: self.dropout_mode()?,
            heteroscedastic: self.heteroscedastic,
            temperature: self.temperature,
            length_scale: self.length_scale,
        })
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty model section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default = "TrainingConfig::default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "TrainingConfig::default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "TrainingConfig::default_learning_rate")]
    pub learning_rate: f64,
    /// Early-stopping patience in epochs; absent disables early stopping.
    #[serde(default = "TrainingConfig::default_patience")]
    pub patience: Option<usize>,
}

impl TrainingConfig {
    fn default_batch_size() -> usize {
        256
    }
    fn default_max_epochs() -> usize {
        100
    }
    fn default_learning_rate() -> f64 {
        1e-3
    }
    fn default_patience() -> Option<usize> {
        Some(10)
    }

    pub fn to_core(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            learning_rate: self.learning_rate,
            patience: self.patience,
            seed,
        }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty training section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default = "InferenceConfig::default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "InferenceConfig::default_threads")]
    pub threads: usize,
}

impl InferenceConfig {
    fn default_mc_samples() -> usize {
        50
    }
    fn default_threads() -> usize {
        1
    }
}

impl Default for InferenceConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty inference section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "CalibrationConfig::default_window")]
    pub window: usize,
    #[serde(default = "CalibrationConfig::default_stride")]
    pub stride: usize,
    #[serde(default = "CalibrationConfig::default_levels")]
    pub levels: Vec<f64>,
}

impl CalibrationConfig {
    fn default_window() -> usize {
        calibrate::DEFAULT_WINDOW
    }
    fn default_stride() -> usize {
        calibrate::DEFAULT_STRIDE
    }
    fn default_levels() -> Vec<f64> {
        calibrate::DEFAULT_LEVELS.to_vec()
    }
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty calibration section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "EvaluationConfig::default_shares")]
    pub shares: Vec<f64>,
    #[serde(default = "EvaluationConfig::default_prefix_cap")]
    pub prefix_cap: usize,
    #[serde(default = "EvaluationConfig::default_day_bin_edges")]
    pub day_bin_edges: Vec<f64>,
}

impl EvaluationConfig {
    fn default_shares() -> Vec<f64> {
        eval::DEFAULT_SHARES.to_vec()
    }
    fn default_prefix_cap() -> usize {
        10
    }
    fn default_day_bin_edges() -> Vec<f64> {
        vec![5.0, 10.0, 20.0, 50.0]
    }

    pub fn heatmap_spec(&self) -> eval::HeatmapSpec {
        eval::HeatmapSpec {
            prefix_cap: self.prefix_cap,
            day_edges: self.day_bin_edges.clone(),
        }
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty evaluation section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// `last_k`, `set`, or `multiset`.
    #[serde(default = "BaselineConfig::default_abstraction")]
    pub abstraction: String,
    #[serde(default = "BaselineConfig::default_k")]
    pub k: usize,
    /// `mean` or `median`.
    #[serde(default = "BaselineConfig::default_statistic")]
    pub statistic: String,
}

impl BaselineConfig {
    fn default_abstraction() -> String {
        "last_k".into()
    }
    fn default_k() -> usize {
        2
    }
    fn default_statistic() -> String {
        "mean".into()
    }

    pub fn abstraction(&self) -> Result<uncertime_core::ats::Abstraction, CliError> {
        use uncertime_core::ats::Abstraction;
        match self.abstraction.as_str() {
            "last_k" => Ok(Abstraction::LastK(self.k)),
            "set" => Ok(Abstraction::ActivitySet),
            "multiset" => Ok(Abstraction::ActivityMultiset),
            other => Err(CliError::Config(format!(
                "baseline.abstraction must be last_k|set|multiset, got `{other}`"
            ))),
        }
    }

    pub fn statistic(&self) -> Result<uncertime_core::ats::Statistic, CliError> {
        use uncertime_core::ats::Statistic;
        match self.statistic.as_str() {
            "mean" => Ok(Statistic::Mean),
            "median" => Ok(Statistic::Median),
            other => Err(CliError::Config(format!(
                "baseline.statistic must be mean|median, got `{other}`"
            ))),
        }
    }
}

impl Default for BaselineConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty baseline section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// `eventlog` or `regression`.
    #[serde(default = "SynthConfig::default_kind")]
    pub kind: String,
    #[serde(default = "SynthConfig::default_cases")]
    pub cases: usize,
    #[serde(default = "SynthConfig::default_branch_probability")]
    pub branch_probability: f64,
    #[serde(default = "SynthConfig::default_duration_sigma")]
    pub duration_sigma: f64,
    #[serde(default = "SynthConfig::default_arrival_step_seconds")]
    pub arrival_step_seconds: i64,
    #[serde(default)]
    pub drift: bool,
    /// Sample count for `kind = "regression"`.
    #[serde(default = "SynthConfig::default_n")]
    pub n: usize,
    #[serde(default = "SynthConfig::default_noise_base")]
    pub noise_base: f64,
    #[serde(default = "SynthConfig::default_noise_amp")]
    pub noise_amp: f64,
}

impl SynthConfig {
    fn default_kind() -> String {
        "eventlog".into()
    }
    fn default_cases() -> usize {
        500
    }
    fn default_branch_probability() -> f64 {
        0.3
    }
    fn default_duration_sigma() -> f64 {
        0.35
    }
    fn default_arrival_step_seconds() -> i64 {
        10_800
    }
    fn default_n() -> usize {
        1000
    }
    fn default_noise_base() -> f64 {
        0.1
    }
    fn default_noise_amp() -> f64 {
        0.2
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty synth section")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Input event-log CSV.
    pub log: Option<PathBuf>,
    /// Parent directory for run directories.
    pub out_dir: Option<PathBuf>,
}

/// The full, validated configuration file.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub schema: SchemaConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub mc_samples: Option<usize>,
    pub threads: Option<usize>,
    pub max_epochs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, CliError> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out_dir) = &overrides.out_dir {
            cfg.paths.out_dir = Some(out_dir.clone());
        }
        if let Some(log) = &overrides.log {
            cfg.paths.log = Some(log.clone());
        }
        if let Some(t) = overrides.mc_samples {
            cfg.inference.mc_samples = t;
        }
        if let Some(t) = overrides.threads {
            cfg.inference.threads = t;
        }
        if let Some(e) = overrides.max_epochs {
            cfg.training.max_epochs = e;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.schema.to_spec()?;
        self.schema.delimiter_byte()?;
        self.model.dropout_mode()?;
        self.baseline.abstraction()?;
        self.baseline.statistic()?;
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "split.test_fraction must lie in (0, 1), got {}",
                self.split.test_fraction
            )));
        }
        if !(self.split.validation_fraction > 0.0 && self.split.validation_fraction < 1.0) {
            return Err(CliError::Config(format!(
                "split.validation_fraction must lie in (0, 1), got {}",
                self.split.validation_fraction
            )));
        }
        if self.inference.threads == 0 {
            return Err(CliError::Config("inference.threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Canonical serialized form used for hashing into run-directory names
    /// and manifests.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn log_path(&self) -> Result<&Path, CliError> {
        self.paths
            .log
            .as_deref()
            .ok_or_else(|| CliError::Config("paths.log is required (or pass --log)".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_sane() {
        let cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.inference.mc_samples, 50);
        assert_eq!(cfg.calibration.window, 5_000);
        assert_eq!(cfg.calibration.stride, 1_000);
        assert_eq!(cfg.calibration.levels, vec![0.5, 0.75, 0.9, 0.95, 0.99]);
        assert_eq!(cfg.evaluation.shares, vec![1.0, 0.75, 0.5, 0.25, 0.1, 0.05]);
        assert_eq!(cfg.split.test_fraction, 0.15);
        assert_eq!(cfg.baseline.k, 2);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let path = std::env::temp_dir().join(format!("uncertime-cfg-{}.toml", std::process::id()));
        std::fs::write(&path, "[model]\ndropuot = \"fixed\"\n").unwrap();
        let err = RunConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dropuot"), "{msg}");
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn overrides_beat_file_values() {
        let path =
            std::env::temp_dir().join(format!("uncertime-cfg2-{}.toml", std::process::id()));
        std::fs::write(&path, "seed = 7\n[inference]\nmc_samples = 10\n").unwrap();
        let cfg = RunConfig::load(
            Some(&path),
            &Overrides {
                seed: Some(99),
                mc_samples: Some(20),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.inference.mc_samples, 20);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn bad_enum_values_are_config_errors() {
        let path =
            std::env::temp_dir().join(format!("uncertime-cfg3-{}.toml", std::process::id()));
        std::fs::write(&path, "[model]\ndropout = \"sometimes\"\n").unwrap();
        let err = RunConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("sometimes"));
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn canonical_form_is_stable() {
        let cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.canonical(), cfg.canonical());
    }
}
