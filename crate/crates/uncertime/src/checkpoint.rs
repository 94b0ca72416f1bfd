//! Versioned model checkpoints: the model spec, the feature layout and the
//! named parameter tensors, as JSON. JSON floats round-trip exactly, so a
//! saved model reproduces its predictions bit-for-bit.

use std::path::Path;

use serde::{Deserialize, Serialize};
use uncertime_core::eventlog::FeatureLayout;
use uncertime_core::layers::{Model, ModelSpec, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
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
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint parameters do not match the architecture: {0}")]
    Shape(String),
    #[error(transparent)]
    Layer(#[from] uncertime_core::layers::LayerError),
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    spec: ModelSpec,
    layout: FeatureLayout,
    params: ParamStore,
}

pub fn save(path: impl AsRef<Path>, model: &Model) -> Result<(), CheckpointError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        spec: model.spec.clone(),
        layout: model.layout.clone(),
        params: model.params.clone(),
    };
    let json = serde_json::to_string(&file).map_err(|source| CheckpointError::Json {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    std::fs::write(path.as_ref(), json).map_err(|source| CheckpointError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| CheckpointError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })?;
    let file: CheckpointFile =
        serde_json::from_str(&text).map_err(|source| CheckpointError::Json {
            path: path.as_ref().display().to_string(),
            source,
        })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    // Rebuild the architecture, then swap in the stored tensors, matching
    // by name and shape.
    let mut model = Model::init(file.spec, file.layout, 0)?;
    if model.params.len() != file.params.len() {
        return Err(CheckpointError::Shape(format!(
            "expected {} parameter tensors, checkpoint has {}",
            model.params.len(),
            file.params.len()
        )));
    }
    for (slot, stored) in model.params.entries.iter_mut().zip(file.params.entries) {
        if slot.name != stored.name {
            return Err(CheckpointError::Shape(format!(
                "parameter order mismatch: `{}` vs `{}`",
                slot.name, stored.name
            )));
        }
        if slot.value.shape() != stored.value.shape() {
            return Err(CheckpointError::Shape(format!(
                "`{}`: shape {:?} vs {:?}",
                slot.name,
                slot.value.shape(),
                stored.value.shape()
            )));
        }
        slot.value = stored.value;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use uncertime_core::infer;
    use uncertime_core::layers::DropoutMode;

    fn model() -> Model {
        let layout = FeatureLayout {
            categorical_vocab_sizes: vec![5],
            numeric_count: 2,
            sequence_length: 6,
        };
        let mut spec = ModelSpec::cnn(vec![4]);
        spec.dropout = DropoutMode::Concrete;
        Model::init(spec, layout, 77).unwrap()
    }

    #[test]
    fn roundtrip_preserves_predictions_exactly() {
        let m = model();
        let records: Vec<uncertime_core::eventlog::PrefixRecord> = (0..4)
            .map(|i| uncertime_core::eventlog::PrefixRecord {
                case_id: format!("c{i}"),
                prefix_length: 2,
                categorical: vec![0, 0, 0, 0, 2, (i % 3) + 2],
                numeric: vec![0.0; 12],
                target_days: 1.0,
                case_start: 0,
                event_timestamp: 0,
            })
            .collect();
        let before = infer::predict_point(&m, &records).unwrap();
        let path = std::env::temp_dir().join(format!("uncertime-ckpt-{}.json", std::process::id()));
        save(&path, &m).unwrap();
        let loaded = load(&path).unwrap();
        let after = infer::predict_point(&loaded, &records).unwrap();
        assert_eq!(before, after);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let m = model();
        let path =
            std::env::temp_dir().join(format!("uncertime-ckpt-v-{}.json", std::process::id()));
        save(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load(&path),
            Err(CheckpointError::Version { found: 9, .. })
        ));
        std::fs::remove_file(path).ok();
    }
}
