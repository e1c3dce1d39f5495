//! Optical-flow residuals `R_t = F_{t+1} − F_t` and the encoders that turn
//! frames, flows and residuals into fixed-size 3-channel classifier inputs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::flow::{decode_flo, encode_flo, FlowError, FlowField};
use crate::image::{Plane, RgbImage};

/// Smallest encoded input side.
pub const MIN_INPUT_SIZE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ResidualError {
    #[error("need at least 2 flow fields for a residual, got {0}")]
    TooFewFlows(usize),
    #[error("flow {index} is {found:?}, expected {expected:?}")]
    DimensionMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Second-order motion between flows `index` and `index + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualField {
    width: usize,
    height: usize,
    du: Vec<f32>,
    dv: Vec<f32>,
    index: usize,
}

impl ResidualField {
    pub fn new(width: usize, height: usize, du: Vec<f32>, dv: Vec<f32>, index: usize) -> Self {
        assert!(du.len() == width * height && dv.len() == width * height);
        Self {
            width,
            height,
            du,
            dv,
            index,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn du(&self) -> &[f32] {
        &self.du
    }

    pub fn dv(&self) -> &[f32] {
        &self.dv
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Mean of `sqrt(du² + dv²)` over the grid.
    pub fn mean_magnitude(&self) -> f64 {
        let total: f64 = self
            .du
            .iter()
            .zip(&self.dv)
            .map(|(a, b)| f64::from(a.hypot(*b)))
            .sum();
        total / self.du.len() as f64
    }

    /// Debug dump in the `.flo` format.
    pub fn write_flo(&self, path: &Path) -> Result<(), FlowError> {
        std::fs::write(path, encode_flo(self.width, self.height, &self.du, &self.dv))
            .map_err(|e| FlowError::io(path, e))
    }

    pub fn read_flo(path: &Path, index: usize) -> Result<Self, FlowError> {
        let bytes = std::fs::read(path).map_err(|e| FlowError::io(path, e))?;
        let (w, h, du, dv) = decode_flo(&bytes)?;
        Ok(Self::new(w, h, du, dv, index))
    }
}

/// `R_t = F_{t+1} − F_t` for every consecutive pair, by exact elementwise
/// `f32` subtraction. `k` flows give `k − 1` residuals.
pub fn compute_residuals(flows: &[FlowField]) -> Result<Vec<ResidualField>, ResidualError> {
    if flows.len() < 2 {
        return Err(ResidualError::TooFewFlows(flows.len()));
    }
    let expected = flows[0].dimensions();
    if let Some((index, f)) = flows
        .iter()
        .enumerate()
        .find(|(_, f)| f.dimensions() != expected)
    {
        return Err(ResidualError::DimensionMismatch {
            index,
            expected,
            found: f.dimensions(),
        });
    }
    Ok(flows
        .windows(2)
        .enumerate()
        .map(|(t, pair)| {
            let (cur, next) = (&pair[0], &pair[1]);
            let du = next.u().iter().zip(cur.u()).map(|(a, b)| a - b).collect();
            let dv = next.v().iter().zip(cur.v()).map(|(a, b)| a - b).collect();
            ResidualField::new(expected.0, expected.1, du, dv, t)
        })
        .collect())
}

/// Which representation an input (and the branch consuming it) carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    RgbFrame,
    FlowMap,
    FlowResidual,
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputKind::RgbFrame => "rgb_frame",
            InputKind::FlowMap => "flow_map",
            InputKind::FlowResidual => "flow_residual",
        })
    }
}

impl FromStr for InputKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rgb_frame" => Ok(InputKind::RgbFrame),
            "flow_map" => Ok(InputKind::FlowMap),
            "flow_residual" => Ok(InputKind::FlowResidual),
            other => Err(format!("unknown input kind `{other}`")),
        }
    }
}

/// Symmetric clip normalisation of a 2-component motion field: each
/// component is clipped to `[-clip, clip]` and mapped to `[0, 1]`; the
/// magnitude channel is clipped to `[0, clip]` and mapped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationSpec {
    pub clip: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self { clip: 8.0 }
    }
}

impl NormalizationSpec {
    #[inline]
    pub fn component(&self, x: f64) -> f64 {
        (x.clamp(-self.clip, self.clip) + self.clip) / (2.0 * self.clip)
    }

    #[inline]
    pub fn magnitude(&self, m: f64) -> f64 {
        m.clamp(0.0, self.clip) / self.clip
    }
}

/// A `3 × size × size` channel-major tensor with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedInput {
    size: usize,
    kind: InputKind,
    tensor: Vec<f64>,
}

impl EncodedInput {
    pub fn new(size: usize, kind: InputKind, tensor: Vec<f64>) -> Self {
        assert_eq!(tensor.len(), 3 * size * size, "tensor must be 3 x size x size");
        Self { size, kind, tensor }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kind(&self) -> InputKind {
        self.kind
    }

    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.tensor[c * n..(c + 1) * n]
    }

    fn from_planes(planes: [Plane; 3], size: usize, kind: InputKind) -> Self {
        let mut tensor = Vec::with_capacity(3 * size * size);
        for p in planes {
            tensor.extend(p.resize(size, size).into_data());
        }
        Self::new(size, kind, tensor)
    }
}

fn encode_motion(
    (width, height): (usize, usize),
    a: &[f32],
    b: &[f32],
    size: usize,
    norm: &NormalizationSpec,
    kind: InputKind,
) -> EncodedInput {
    assert!(size >= MIN_INPUT_SIZE, "encoded size must be at least {MIN_INPUT_SIZE}");
    let n = width * height;
    let mut c0 = Vec::with_capacity(n);
    let mut c1 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        c0.push(norm.component(x));
        c1.push(norm.component(y));
        c2.push(norm.magnitude(x.hypot(y)));
    }
    let planes = [c0, c1, c2].map(|d| Plane::new(width, height, d));
    EncodedInput::from_planes(planes, size, kind)
}

/// Channels `(du, dv, |R|)`, normalised then bilinearly resized.
pub fn encode_residual(r: &ResidualField, size: usize, norm: &NormalizationSpec) -> EncodedInput {
    encode_motion(
        (r.width, r.height),
        &r.du,
        &r.dv,
        size,
        norm,
        InputKind::FlowResidual,
    )
}

/// Same scheme as [`encode_residual`] applied to `(u, v, |F|)`.
pub fn encode_flow(f: &FlowField, size: usize, norm: &NormalizationSpec) -> EncodedInput {
    encode_motion(f.dimensions(), f.u(), f.v(), size, norm, InputKind::FlowMap)
}

/// RGB scaled to `[0, 1]` and bilinearly resized.
pub fn encode_frame(img: &RgbImage, size: usize) -> EncodedInput {
    assert!(size >= MIN_INPUT_SIZE, "encoded size must be at least {MIN_INPUT_SIZE}");
    EncodedInput::from_planes(img.to_unit_planes(), size, InputKind::RgbFrame)
}
