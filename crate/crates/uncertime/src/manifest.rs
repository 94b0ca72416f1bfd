//! Persisted artifacts that make a preparation reusable: the fitted
//! encoding (vocabularies + standardization) and the case-level split
//! assignment. Both are versioned JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uncertime_core::eventlog::{Case, Encoding, SchemaSpec};

pub const ENCODING_VERSION: u32 = 1;
pub const SPLITS_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("split references case `{0}` that the log does not contain")]
    UnknownCase(String),
}

/// Fitted encoding plus the schema it was fitted under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingManifest {
    pub version: u32,
    pub schema: SchemaSpec,
    pub encoding: Encoding,
}

impl EncodingManifest {
    pub fn new(schema: SchemaSpec, encoding: Encoding) -> Self {
        EncodingManifest {
            version: ENCODING_VERSION,
            schema,
            encoding,
        }
    }
}

/// Case ids per split, in encoding order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitsFile {
    pub version: u32,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    /// Cases dropped for overlapping the test horizon.
    pub dropped: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ManifestError> {
    let json = serde_json::to_string_pretty(value).map_err(|source| ManifestError::Json {
        path: path.display().to_string(),
        source,
    })?;
    std::fs::write(path, json).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ManifestError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_encoding(path: impl AsRef<Path>, m: &EncodingManifest) -> Result<(), ManifestError> {
    write_json(path.as_ref(), m)
}

pub fn load_encoding(path: impl AsRef<Path>) -> Result<EncodingManifest, ManifestError> {
    let m: EncodingManifest = read_json(path.as_ref())?;
    if m.version != ENCODING_VERSION {
        return Err(ManifestError::Version {
            what: "encoding",
            found: m.version,
            expected: ENCODING_VERSION,
        });
    }
    Ok(m)
}

pub fn save_splits(path: impl AsRef<Path>, s: &SplitsFile) -> Result<(), ManifestError> {
    write_json(path.as_ref(), s)
}

pub fn load_splits(path: impl AsRef<Path>) -> Result<SplitsFile, ManifestError> {
    let s: SplitsFile = read_json(path.as_ref())?;
    if s.version != SPLITS_VERSION {
        return Err(ManifestError::Version {
            what: "splits",
            found: s.version,
            expected: SPLITS_VERSION,
        });
    }
    Ok(s)
}

/// Select the named cases from a parsed log, in the split's order.
pub fn select_cases(cases: &[Case], ids: &[String]) -> Result<Vec<Case>, ManifestError> {
    let by_id: std::collections::HashMap<&str, &Case> =
        cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|&c| c.clone())
                .ok_or_else(|| ManifestError::UnknownCase(id.clone()))
        })
        .collect()
}
