//! Preprocessing chain from a manifest entry to classifier inputs:
//! frames → forward flows → residuals → encoded tensors, with an optional
//! on-disk flow cache.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{
    load_frames_sampled, DatasetError, FrameSequence, Label, Manifest, VideoEntry,
    DEFAULT_MAX_FRAMES,
};
use crate::flow::{
    flow_file_name, read_flo, residual_file_name, write_flo, FlowError, FlowEstimator, FlowField,
};
use crate::residual::{
    compute_residuals, encode_flow, encode_frame, encode_residual, EncodedInput, InputKind,
    NormalizationSpec, ResidualError, ResidualField,
};

/// Name of the per-video sidecar holding the estimator fingerprint hash.
pub const CACHE_SIDECAR: &str = "flowcfg.sha256";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error("video `{id}` has {frames} frame(s); {kind} inputs need at least {needed}")]
    TooShort {
        id: String,
        frames: usize,
        kind: InputKind,
        needed: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Minimum frame count for inputs of `kind`.
pub fn min_frames(kind: InputKind) -> usize {
    match kind {
        InputKind::RgbFrame => 1,
        InputKind::FlowMap => 2,
        InputKind::FlowResidual => 3,
    }
}

/// Encoding settings shared by training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingConfig {
    pub input_size: usize,
    pub max_frames: usize,
    pub normalization: NormalizationSpec,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            max_frames: DEFAULT_MAX_FRAMES,
            normalization: NormalizationSpec::default(),
        }
    }
}

/// Encoded inputs of one video for one branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedVideo {
    pub id: String,
    pub label: Label,
    pub inputs: Vec<EncodedInput>,
}

/// All three representations of one video. Flow and residual lists are
/// empty when the video is too short for them.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoFeatures {
    pub id: String,
    pub label: Label,
    pub frames: Vec<EncodedInput>,
    pub flows: Vec<EncodedInput>,
    pub residuals: Vec<EncodedInput>,
    /// Mean residual magnitude in pixels (0 when there are none).
    pub mean_residual_magnitude: f64,
}

impl VideoFeatures {
    pub fn inputs(&self, kind: InputKind) -> &[EncodedInput] {
        match kind {
            InputKind::RgbFrame => &self.frames,
            InputKind::FlowMap => &self.flows,
            InputKind::FlowResidual => &self.residuals,
        }
    }

    /// Branch view; `None` when the video has no inputs of `kind`.
    pub fn prepared(&self, kind: InputKind) -> Option<PreparedVideo> {
        let inputs = self.inputs(kind);
        (!inputs.is_empty()).then(|| PreparedVideo {
            id: self.id.clone(),
            label: self.label,
            inputs: inputs.to_vec(),
        })
    }
}

/// On-disk cache `<root>/<video id>/{flow,resid}_NNNN.flo` plus a sidecar
/// hash of the estimator settings; a hash mismatch invalidates the entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowCache {
    root: PathBuf,
}

/// Outcome of [`FlowCache::ensure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Computed,
}

impl FlowCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn video_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    fn key(fingerprint: &str, frames: usize) -> String {
        let mut h = Sha256::new();
        h.update(fingerprint.as_bytes());
        h.update((frames as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Reads cached flows if the sidecar matches and every file decodes.
    fn lookup(&self, id: &str, key: &str, n_flows: usize) -> Option<Vec<FlowField>> {
        let dir = self.video_dir(id);
        let stored = std::fs::read_to_string(dir.join(CACHE_SIDECAR)).ok()?;
        if stored.trim() != key {
            return None;
        }
        let flows: Vec<FlowField> = (0..n_flows)
            .map(|t| read_flo(&dir.join(flow_file_name(t)), t).ok())
            .collect::<Option<_>>()?;
        let n_res = n_flows.saturating_sub(1);
        let residuals_ok = (0..n_res).all(|t| {
            ResidualField::read_flo(&dir.join(residual_file_name(t)), t).is_ok()
        });
        residuals_ok.then_some(flows)
    }

    fn store(
        &self,
        id: &str,
        key: &str,
        flows: &[FlowField],
        residuals: &[ResidualField],
    ) -> Result<(), PipelineError> {
        let dir = self.video_dir(id);
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        // Drop the sidecar first so an interrupted write never looks valid.
        let sidecar = dir.join(CACHE_SIDECAR);
        if sidecar.exists() {
            std::fs::remove_file(&sidecar).map_err(|e| PipelineError::io(&sidecar, e))?;
        }
        for f in flows {
            write_flo(f, &dir.join(flow_file_name(f.src_index())))?;
        }
        for r in residuals {
            r.write_flo(&dir.join(residual_file_name(r.index())))?;
        }
        std::fs::write(&sidecar, format!("{key}\n")).map_err(|e| PipelineError::io(&sidecar, e))
    }

    /// Returns the flows of `seq`, reading them from the cache when valid and
    /// otherwise computing them with `estimator` and writing flows and
    /// residuals back.
    pub fn ensure(
        &self,
        seq: &FrameSequence,
        estimator: &dyn FlowEstimator,
    ) -> Result<(Vec<FlowField>, CacheStatus), PipelineError> {
        if seq.len() < 2 {
            return Err(FlowError::SequenceTooShort(seq.len()).into());
        }
        let key = Self::key(&estimator.fingerprint(), seq.len());
        if let Some(flows) = self.lookup(seq.id(), &key, seq.len() - 1) {
            return Ok((flows, CacheStatus::Hit));
        }
        let flows = estimator.sequence_flows(seq)?;
        let residuals = if flows.len() >= 2 {
            compute_residuals(&flows)?
        } else {
            Vec::new()
        };
        self.store(seq.id(), &key, &flows, &residuals)?;
        Ok((flows, CacheStatus::Computed))
    }
}

/// Frames → flows → residuals → encoded inputs.
#[derive(Clone)]
pub struct Pipeline {
    estimator: Arc<dyn FlowEstimator>,
    cache: Option<FlowCache>,
    encoding: EncodingConfig,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("estimator", &self.estimator.fingerprint())
            .field("cache", &self.cache)
            .field("encoding", &self.encoding)
            .finish()
    }
}

impl Pipeline {
    pub fn new(estimator: Arc<dyn FlowEstimator>, encoding: EncodingConfig) -> Self {
        Self {
            estimator,
            cache: None,
            encoding,
        }
    }

    pub fn with_cache(mut self, cache: FlowCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn encoding(&self) -> &EncodingConfig {
        &self.encoding
    }

    pub fn estimator(&self) -> &dyn FlowEstimator {
        self.estimator.as_ref()
    }

    pub fn load(&self, entry: &VideoEntry) -> Result<FrameSequence, PipelineError> {
        Ok(load_frames_sampled(entry, self.encoding.max_frames)?)
    }

    pub fn flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>, PipelineError> {
        match &self.cache {
            Some(cache) => cache.ensure(seq, self.estimator.as_ref()).map(|(f, _)| f),
            None => Ok(self.estimator.sequence_flows(seq)?),
        }
    }

    fn encode_frames(&self, seq: &FrameSequence) -> Vec<EncodedInput> {
        seq.frames()
            .iter()
            .map(|f| encode_frame(f, self.encoding.input_size))
            .collect()
    }

    /// Inputs of one branch for one video.
    pub fn prepare(&self, entry: &VideoEntry, kind: InputKind) -> Result<PreparedVideo, PipelineError> {
        let seq = self.load(entry)?;
        if seq.len() < min_frames(kind) {
            return Err(PipelineError::TooShort {
                id: entry.id.clone(),
                frames: seq.len(),
                kind,
                needed: min_frames(kind),
            });
        }
        let (size, norm) = (self.encoding.input_size, &self.encoding.normalization);
        let inputs = match kind {
            InputKind::RgbFrame => self.encode_frames(&seq),
            InputKind::FlowMap => self
                .flows(&seq)?
                .iter()
                .map(|f| encode_flow(f, size, norm))
                .collect(),
            InputKind::FlowResidual => compute_residuals(&self.flows(&seq)?)?
                .iter()
                .map(|r| encode_residual(r, size, norm))
                .collect(),
        };
        Ok(PreparedVideo {
            id: entry.id.clone(),
            label: entry.label,
            inputs,
        })
    }

    /// Every representation of one video, computing flows once.
    pub fn features(&self, entry: &VideoEntry) -> Result<VideoFeatures, PipelineError> {
        let seq = self.load(entry)?;
        let (size, norm) = (self.encoding.input_size, &self.encoding.normalization);
        let frames = self.encode_frames(&seq);
        let (flows, residuals, magnitude) = if seq.len() >= 2 {
            let raw = self.flows(&seq)?;
            let enc_flows = raw.iter().map(|f| encode_flow(f, size, norm)).collect();
            if raw.len() >= 2 {
                let res = compute_residuals(&raw)?;
                let mag = res.iter().map(|r| r.mean_magnitude()).sum::<f64>() / res.len() as f64;
                let enc = res.iter().map(|r| encode_residual(r, size, norm)).collect();
                (enc_flows, enc, mag)
            } else {
                (enc_flows, Vec::new(), 0.0)
            }
        } else {
            (Vec::new(), Vec::new(), 0.0)
        };
        Ok(VideoFeatures {
            id: entry.id.clone(),
            label: entry.label,
            frames,
            flows,
            residuals,
            mean_residual_magnitude: magnitude,
        })
    }

    /// [`Pipeline::features`] over a manifest, in manifest order.
    pub fn features_for(&self, manifest: &Manifest) -> Result<Vec<VideoFeatures>, PipelineError> {
        manifest
            .entries()
            .par_iter()
            .map(|e| self.features(e))
            .collect()
    }

    /// Branch inputs for every video of `manifest` long enough for `kind`;
    /// returns the prepared videos and the ids that were skipped as too short.
    pub fn prepare_all(
        &self,
        manifest: &Manifest,
        kind: InputKind,
    ) -> Result<(Vec<PreparedVideo>, Vec<String>), PipelineError> {
        let results: Vec<Result<PreparedVideo, PipelineError>> = manifest
            .entries()
            .par_iter()
            .map(|e| self.prepare(e, kind))
            .collect();
        let mut prepared = Vec::new();
        let mut skipped = Vec::new();
        for r in results {
            match r {
                Ok(p) => prepared.push(p),
                Err(PipelineError::TooShort { id, .. }) => {
                    log::warn!("skipping `{id}`: too short for {kind} inputs");
                    skipped.push(id);
                }
                Err(e) => return Err(e),
            }
        }
        Ok((prepared, skipped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_synthetic_corpus, SyntheticConfig};
    use crate::flow::{FlowEstimatorConfig, VariationalEstimator};

    fn fast_estimator() -> Arc<dyn FlowEstimator> {
        Arc::new(VariationalEstimator::new(FlowEstimatorConfig {
            iterations: 20,
            ..Default::default()
        }))
    }

    fn encoding() -> EncodingConfig {
        EncodingConfig {
            input_size: 16,
            ..Default::default()
        }
    }

    #[test]
    fn counts_per_representation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            real: 1,
            fake: 1,
            size: 16,
            frames: 5,
            ..Default::default()
        };
        let m = make_synthetic_corpus(&cfg, dir.path()).unwrap();
        let p = Pipeline::new(fast_estimator(), encoding());
        let f = p.features(&m.entries()[0]).unwrap();
        assert_eq!((f.frames.len(), f.flows.len(), f.residuals.len()), (5, 4, 3));
        let r = p.prepare(&m.entries()[1], InputKind::FlowResidual).unwrap();
        assert_eq!(r.inputs.len(), 3);
        assert!(r.inputs.iter().all(|x| x.kind() == InputKind::FlowResidual));
    }

    #[test]
    fn short_videos_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            real: 1,
            fake: 1,
            size: 16,
            frames: 2,
            ..Default::default()
        };
        let m = make_synthetic_corpus(&cfg, dir.path()).unwrap();
        let p = Pipeline::new(fast_estimator(), encoding());
        let (ok, skipped) = p.prepare_all(&m, InputKind::FlowResidual).unwrap();
        assert!(ok.is_empty());
        assert_eq!(skipped.len(), 2);
        let (ok, _) = p.prepare_all(&m, InputKind::FlowMap).unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn cache_hits_on_second_call() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig {
            real: 1,
            fake: 0,
            size: 16,
            frames: 4,
            ..Default::default()
        };
        let m = make_synthetic_corpus(&cfg, &dir.path().join("corpus")).unwrap();
        let cache = FlowCache::new(dir.path().join("cache"));
        let p = Pipeline::new(fast_estimator(), encoding());
        let seq = p.load(&m.entries()[0]).unwrap();
        let (a, s1) = cache.ensure(&seq, p.estimator()).unwrap();
        let (b, s2) = cache.ensure(&seq, p.estimator()).unwrap();
        assert_eq!((s1, s2), (CacheStatus::Computed, CacheStatus::Hit));
        assert_eq!(a, b);
        // different settings invalidate
        let other = VariationalEstimator::new(FlowEstimatorConfig {
            iterations: 21,
            ..Default::default()
        });
        assert_eq!(cache.ensure(&seq, &other).unwrap().1, CacheStatus::Computed);
    }
}
