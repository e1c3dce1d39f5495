//! Dense forward optical flow between consecutive frames.
//!
//! Two sources implement [`FlowEstimator`]: the built-in variational solver
//! ([`VariationalEstimator`]) and [`PrecomputedFlows`], which imports `.flo`
//! files produced by any external estimator.

mod flo;
mod solver;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::FrameSequence;
use crate::image::Plane;

pub use flo::{
    decode_flo, encode_flo, flo_file_len, read_flo, write_flo, FLO_MAGIC, UNKNOWN_FLOW_THRESHOLD,
};
pub use solver::FlowDiagnostics;

/// Smallest frame side the solver accepts.
pub const MIN_FRAME_SIDE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("frame dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("frames must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, got {0}x{1}")]
    FrameTooSmall(usize, usize),
    #[error("sequence has {0} frame(s); at least 2 are needed for flow")]
    SequenceTooShort(usize),
    #[error("invalid flow estimator config: {0}")]
    InvalidConfig(String),
    #[error("bad .flo magic {0} (expected {FLO_MAGIC})")]
    BadMagic(f32),
    #[error(".flo length mismatch: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error(".flo dimensions {width}x{height} exceed sanity limits")]
    OversizeDimensions { width: i64, height: i64 },
    #[error("expected {expected} precomputed flow files for `{id}`, found {found}")]
    MissingFlows {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FlowError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// Flow from frame `src_index` to frame `src_index + 1`: a pixel at `(x, y)`
/// in the first frame moves to `(x + u, y + v)` in the second.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
    src_index: usize,
    validity: Vec<bool>,
}

impl FlowField {
    /// All pixels valid.
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>, src_index: usize) -> Self {
        let validity = vec![true; width * height];
        Self::with_validity(width, height, u, v, src_index, validity)
    }

    pub fn with_validity(
        width: usize,
        height: usize,
        u: Vec<f32>,
        v: Vec<f32>,
        src_index: usize,
        validity: Vec<bool>,
    ) -> Self {
        let n = width * height;
        assert!(
            u.len() == n && v.len() == n && validity.len() == n,
            "flow component sizes must equal width*height"
        );
        Self {
            width,
            height,
            u,
            v,
            src_index,
            validity,
        }
    }

    pub fn zeros(width: usize, height: usize, src_index: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height], vec![0.0; width * height], src_index)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn src_index(&self) -> usize {
        self.src_index
    }

    pub fn validity(&self) -> &[bool] {
        &self.validity
    }

    /// Largest `sqrt(u² + v²)` over valid pixels.
    pub fn max_magnitude(&self) -> f32 {
        self.u
            .iter()
            .zip(&self.v)
            .zip(&self.validity)
            .filter(|(_, ok)| **ok)
            .map(|((a, b), _)| a.hypot(*b))
            .fold(0.0, f32::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowEstimatorConfig {
    /// Regularisation weight α² on the 0..255 intensity scale.
    pub smoothness_weight: f64,
    /// Jacobi sweep cap per pyramid level.
    pub iterations: usize,
    /// Stop once the largest per-pixel update falls below this.
    pub convergence_eps: f64,
    pub pyramid_levels: usize,
    /// Warp-and-relinearise rounds per pyramid level.
    pub warps: usize,
    /// Components beyond this many pixels are clamped and marked invalid.
    pub max_displacement: f64,
}

impl Default for FlowEstimatorConfig {
    fn default() -> Self {
        Self {
            smoothness_weight: 100.0,
            iterations: 200,
            convergence_eps: 1e-3,
            pyramid_levels: 3,
            warps: 3,
            max_displacement: 64.0,
        }
    }
}

impl FlowEstimatorConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidConfig(m.to_string()));
        if !(self.smoothness_weight > 0.0 && self.smoothness_weight.is_finite()) {
            return bad("smoothness_weight must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.convergence_eps.is_nan() || self.convergence_eps <= 0.0 {
            return bad("convergence_eps must be positive");
        }
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be at least 1");
        }
        if self.warps == 0 {
            return bad("warps must be at least 1");
        }
        if self.max_displacement.is_nan() || self.max_displacement <= 0.0 {
            return bad("max_displacement must be positive");
        }
        Ok(())
    }
}

/// Forward flow from `frame_a` to `frame_b` (grayscale, 0..255 scale).
pub fn estimate_flow(
    frame_a: &Plane,
    frame_b: &Plane,
    cfg: &FlowEstimatorConfig,
) -> Result<FlowField, FlowError> {
    estimate_flow_with_diagnostics(frame_a, frame_b, cfg, false).map(|(f, _)| f)
}

/// Like [`estimate_flow`], also returning solver diagnostics. With
/// `track_energy` the finest-level energy is recorded after every sweep.
pub fn estimate_flow_with_diagnostics(
    frame_a: &Plane,
    frame_b: &Plane,
    cfg: &FlowEstimatorConfig,
    track_energy: bool,
) -> Result<(FlowField, FlowDiagnostics), FlowError> {
    cfg.validate()?;
    let da = (frame_a.width(), frame_a.height());
    let db = (frame_b.width(), frame_b.height());
    if da != db {
        return Err(FlowError::DimensionMismatch { a: da, b: db });
    }
    if da.0 < MIN_FRAME_SIDE || da.1 < MIN_FRAME_SIDE {
        return Err(FlowError::FrameTooSmall(da.0, da.1));
    }
    let (u, v, diag) = solver::solve(frame_a, frame_b, cfg, track_energy);
    let limit = cfg.max_displacement;
    let mut validity = vec![true; u.len()];
    let clamp = |x: f64, ok: &mut bool| -> f32 {
        if !x.is_finite() {
            *ok = false;
            0.0
        } else if x.abs() > limit {
            *ok = false;
            x.clamp(-limit, limit) as f32
        } else {
            x as f32
        }
    };
    let mut uf = Vec::with_capacity(u.len());
    let mut vf = Vec::with_capacity(v.len());
    for i in 0..u.len() {
        uf.push(clamp(u[i], &mut validity[i]));
        vf.push(clamp(v[i], &mut validity[i]));
    }
    Ok((FlowField::with_validity(da.0, da.1, uf, vf, 0, validity), diag))
}

/// Flows `F_t` from frame `t` to `t + 1` for every consecutive pair, on
/// ITU-R 601 luminance. An `n`-frame sequence yields `n − 1` fields.
pub fn estimate_sequence_flows(
    seq: &FrameSequence,
    cfg: &FlowEstimatorConfig,
) -> Result<Vec<FlowField>, FlowError> {
    if seq.len() < 2 {
        return Err(FlowError::SequenceTooShort(seq.len()));
    }
    let gray: Vec<Plane> = seq.frames().iter().map(|f| f.to_gray()).collect();
    gray.windows(2)
        .enumerate()
        .map(|(t, pair)| {
            let mut f = estimate_flow(&pair[0], &pair[1], cfg)?;
            f.src_index = t;
            Ok(f)
        })
        .collect()
}

/// A source of the forward flows of a frame sequence.
pub trait FlowEstimator: Send + Sync {
    fn sequence_flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>, FlowError>;

    /// Stable description used to key caches.
    fn fingerprint(&self) -> String;
}

/// The built-in Horn–Schunck solver.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariationalEstimator {
    pub config: FlowEstimatorConfig,
}

impl VariationalEstimator {
    pub fn new(config: FlowEstimatorConfig) -> Self {
        Self { config }
    }
}

impl FlowEstimator for VariationalEstimator {
    fn sequence_flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>, FlowError> {
        estimate_sequence_flows(seq, &self.config)
    }

    fn fingerprint(&self) -> String {
        format!(
            "variational:{}",
            serde_json::to_string(&self.config).expect("config serializes")
        )
    }
}

/// File name of the `t`-th flow of a video.
pub fn flow_file_name(t: usize) -> String {
    format!("flow_{t:04}.flo")
}

/// File name of the `t`-th residual of a video.
pub fn residual_file_name(t: usize) -> String {
    format!("resid_{t:04}.flo")
}

/// Flows imported from `<root>/<video id>/flow_NNNN.flo`, e.g. RAFT output
/// converted to `.flo`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedFlows {
    root: PathBuf,
}

impl PrecomputedFlows {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Reads `count` consecutive flows of video `id`.
    pub fn load(&self, id: &str, count: usize) -> Result<Vec<FlowField>, FlowError> {
        let dir = self.root.join(id);
        let mut out = Vec::with_capacity(count);
        for t in 0..count {
            let path = dir.join(flow_file_name(t));
            if !path.is_file() {
                return Err(FlowError::MissingFlows {
                    id: id.to_string(),
                    expected: count,
                    found: t,
                });
            }
            out.push(read_flo(&path, t)?);
        }
        Ok(out)
    }
}

impl FlowEstimator for PrecomputedFlows {
    fn sequence_flows(&self, seq: &FrameSequence) -> Result<Vec<FlowField>, FlowError> {
        if seq.len() < 2 {
            return Err(FlowError::SequenceTooShort(seq.len()));
        }
        let flows = self.load(seq.id(), seq.len() - 1)?;
        let dims = seq.dimensions();
        for f in &flows {
            if f.dimensions() != dims {
                return Err(FlowError::DimensionMismatch {
                    a: dims,
                    b: f.dimensions(),
                });
            }
        }
        Ok(flows)
    }

    fn fingerprint(&self) -> String {
        format!("precomputed:{}", self.root.display())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::image::RgbImage;

    fn periodic(w: usize, h: usize, shift: (isize, isize)) -> Plane {
        let tau = std::f64::consts::TAU;
        Plane::from_fn(w, h, |x, y| {
            let x = (x as isize - shift.0).rem_euclid(w as isize) as f64;
            let y = (y as isize - shift.1).rem_euclid(h as isize) as f64;
            128.0
                + 50.0 * (tau * 3.0 * x / w as f64).sin() * (tau * 2.0 * y / h as f64).cos()
                + 30.0 * (tau * (2.0 * x / w as f64 + 5.0 * y / h as f64)).sin()
        })
    }

    fn median(mut s: Vec<f32>) -> f32 {
        s.sort_by(|a, b| a.total_cmp(b));
        s[s.len() / 2]
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let a = periodic(32, 32, (0, 0));
        let f = estimate_flow(&a, &a, &FlowEstimatorConfig::default()).unwrap();
        assert!(f.max_magnitude() < 1e-3);
    }

    #[test]
    fn flat_frames_give_zero_flow() {
        let a = Plane::from_fn(16, 16, |_, _| 90.0);
        let b = Plane::from_fn(16, 16, |_, _| 90.0);
        let f = estimate_flow(&a, &b, &FlowEstimatorConfig::default()).unwrap();
        assert!(f.max_magnitude() == 0.0);
    }

    #[test]
    fn shift_of_two_pixels() {
        let a = periodic(64, 64, (0, 0));
        let b = periodic(64, 64, (2, 0));
        let f = estimate_flow(&a, &b, &FlowEstimatorConfig::default()).unwrap();
        let interior = |c: &[f32]| {
            let mut out = Vec::new();
            for y in 8..56 {
                for x in 8..56 {
                    out.push(c[y * 64 + x]);
                }
            }
            out
        };
        let mu = median(interior(f.u()));
        let mv = median(interior(f.v()));
        assert!((1.7..=2.3).contains(&mu), "median u {mu}");
        assert!((-0.3..=0.3).contains(&mv), "median v {mv}");
    }

    #[test]
    fn dimension_checks() {
        let a = Plane::zeros(16, 16);
        let b = Plane::zeros(16, 12);
        assert!(matches!(
            estimate_flow(&a, &b, &FlowEstimatorConfig::default()),
            Err(FlowError::DimensionMismatch { .. })
        ));
        let s = Plane::zeros(4, 4);
        assert!(matches!(
            estimate_flow(&s, &s, &FlowEstimatorConfig::default()),
            Err(FlowError::FrameTooSmall(4, 4))
        ));
        let bad = FlowEstimatorConfig {
            pyramid_levels: 0,
            ..Default::default()
        };
        assert!(matches!(estimate_flow(&a, &a, &bad), Err(FlowError::InvalidConfig(_))));
    }

    fn seq(n: usize) -> FrameSequence {
        let frames = (0..n)
            .map(|i| RgbImage::filled(16, 16, [i as u8 * 10, 0, 0]))
            .collect();
        FrameSequence::new("s", Label::Real, frames).unwrap()
    }

    #[test]
    fn sequence_counts() {
        let cfg = FlowEstimatorConfig {
            iterations: 5,
            ..Default::default()
        };
        let flows = estimate_sequence_flows(&seq(5), &cfg).unwrap();
        assert_eq!(flows.len(), 4);
        assert_eq!(flows.iter().map(|f| f.src_index()).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(estimate_sequence_flows(&seq(2), &cfg).unwrap().len(), 1);
        assert!(matches!(
            estimate_sequence_flows(&seq(1), &cfg),
            Err(FlowError::SequenceTooShort(1))
        ));
    }

    #[test]
    fn precomputed_source_reads_flo_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("s")).unwrap();
        for t in 0..2 {
            let f = FlowField::new(16, 16, vec![t as f32; 256], vec![0.5; 256], t);
            write_flo(&f, &dir.path().join("s").join(flow_file_name(t))).unwrap();
        }
        let src = PrecomputedFlows::new(dir.path());
        let flows = src.sequence_flows(&seq(3)).unwrap();
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[1].u()[7], 1.0);
        assert!(matches!(
            src.sequence_flows(&seq(4)),
            Err(FlowError::MissingFlows { expected: 3, found: 2, .. })
        ));
    }
}
