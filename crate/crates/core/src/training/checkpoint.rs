use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainError, TrainState};
use crate::model::{BackboneConfig, BranchModel, ParamStore};
use crate::residual::{InputKind, NormalizationSpec};

pub const CHECKPOINT_VERSION: u64 = 1;

/// Model plus optional training state, stored as JSON. Floats are written
/// in shortest round-trip form, so loading is value-exact.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: BranchModel,
    pub normalization: NormalizationSpec,
    pub state: Option<TrainState>,
}

#[derive(Serialize)]
struct Written<'a> {
    format_version: u64,
    config: &'a BackboneConfig,
    modality: InputKind,
    normalization: &'a NormalizationSpec,
    params: &'a ParamStore,
    state: Option<&'a TrainState>,
}

#[derive(Deserialize)]
struct Read {
    config: BackboneConfig,
    modality: InputKind,
    normalization: NormalizationSpec,
    params: ParamStore,
    state: Option<TrainState>,
}

pub fn save_checkpoint(
    model: &BranchModel,
    normalization: &NormalizationSpec,
    state: Option<&TrainState>,
    path: &Path,
) -> Result<(), TrainError> {
    let doc = Written {
        format_version: CHECKPOINT_VERSION,
        config: model.config(),
        modality: model.modality(),
        normalization,
        params: model.params(),
        state,
    };
    let json = serde_json::to_vec(&doc).expect("checkpoint serialises");
    let io = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    // write-then-rename so a crash never leaves a half-written checkpoint
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, json).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |reason: String| TrainError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason,
    };
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing format_version".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let doc: Read = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    let model = BranchModel::from_parts(doc.config, doc.modality, doc.params)
        .map_err(|e| corrupt(e.to_string()))?;
    if let Some(s) = &doc.state {
        if !model.params().same_layout(&s.adam.m) || !model.params().same_layout(&s.adam.v) {
            return Err(corrupt("optimizer moments do not match the parameters".into()));
        }
    }
    Ok(Checkpoint {
        model,
        normalization: doc.normalization,
        state: doc.state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, StageSpec};
    use crate::training::TrainConfig;

    fn model() -> BranchModel {
        let cfg = BackboneConfig {
            input_size: 8,
            stages: vec![StageSpec {
                channels: 2,
                blocks: 1,
                stride: 2,
            }],
            head_hidden: 3,
            seed: 11,
        };
        init_model(&cfg, InputKind::RgbFrame).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = model();
        let mut state = TrainState::new(m.params(), &TrainConfig::default());
        state.adam.m.values_mut().for_each(|x| *x = 1.0 / 3.0);
        let norm = NormalizationSpec { clip: 4.5 };
        save_checkpoint(&m, &norm, Some(&state), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.model.params().checksum(), m.params().checksum());
        assert_eq!(back.model.config(), m.config());
        assert_eq!(back.model.modality(), InputKind::RgbFrame);
        assert_eq!(back.normalization, norm);
        assert_eq!(back.state.as_ref(), Some(&state));
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model(), &NormalizationSpec::default(), None, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(TrainError::CorruptCheckpoint { .. })
        ));
    }

    #[test]
    fn other_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&model(), &NormalizationSpec::default(), None, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"format_version\":1", "\"format_version\":7")).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(TrainError::VersionMismatch { found: 7, .. })
        ));
    }
}
