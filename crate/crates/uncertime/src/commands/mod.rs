//! One module per CLI subcommand, plus the shared data-loading glue.

pub mod baseline;
pub mod calibrate;
pub mod evaluate;
pub mod predict;
pub mod prepare;
pub mod synth;
pub mod train;

use std::path::Path;

use uncertime_core::eventlog::{make_prefixes, Case, EncodedLog};

use crate::config::RunConfig;
use crate::manifest::{self, EncodingManifest, SplitsFile};
use crate::{csvio, CliError};

/// Which split a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        })
    }
}

/// Parsed log narrowed to the persisted split assignment.
pub struct SplitCases {
    pub train: Vec<Case>,
    pub validation: Vec<Case>,
    pub test: Vec<Case>,
}

impl SplitCases {
    pub fn get(&self, which: SplitName) -> &[Case] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// Training cases including the carved-out validation slice.
    pub fn full_train(&self) -> Vec<Case> {
        let mut all = self.train.clone();
        all.extend(self.validation.iter().cloned());
        all
    }
}

pub fn load_cases(cfg: &RunConfig) -> Result<Vec<Case>, CliError> {
    let schema = cfg.schema.to_spec()?;
    csvio::parse_log(cfg.log_path()?, &schema, cfg.schema.delimiter_byte()?)
        .map_err(CliError::module("eventlog"))
}

pub fn load_split_cases(cfg: &RunConfig, splits_path: &Path) -> Result<SplitCases, CliError> {
    let cases = load_cases(cfg)?;
    let splits: SplitsFile =
        manifest::load_splits(splits_path).map_err(CliError::module("manifest"))?;
    let pick = |ids: &[String]| manifest::select_cases(&cases, ids);
    Ok(SplitCases {
        train: pick(&splits.train).map_err(CliError::module("manifest"))?,
        validation: pick(&splits.validation).map_err(CliError::module("manifest"))?,
        test: pick(&splits.test).map_err(CliError::module("manifest"))?,
    })
}

/// Encode a split's cases with a previously fitted encoding.
pub fn encode_with(
    cases: &[Case],
    enc: &EncodingManifest,
) -> Result<EncodedLog, CliError> {
    make_prefixes(cases, &enc.schema, Some(&enc.encoding)).map_err(CliError::module("eventlog"))
}
