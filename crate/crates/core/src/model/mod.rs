//! Per-branch classifier: a small residual convolutional backbone, global
//! average pooling and a fully connected head emitting the logit of
//! P(Fake) for a single encoded input.

mod layers;
mod params;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::residual::{EncodedInput, InputKind};

use layers::{
    global_avg_pool, global_avg_pool_backward, relu_backward, relu_inplace, sigmoid, Conv,
    FeatureMap, Linear,
};
pub use params::{NamedTensor, ParamStore};

/// Probability clamp used inside the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
const INPUT_CHANNELS: usize = 3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid backbone config: {0}")]
    InvalidConfig(String),
    #[error("model expects {expected} inputs, got {found}")]
    ModalityMismatch { expected: InputKind, found: InputKind },
    #[error("model expects {expected}x{expected} inputs, got {found}x{found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("parameter layout does not match the config")]
    LayoutMismatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("no inputs to score")]
    EmptyList,
}

/// `channels` output channels, `blocks` residual blocks, the first of which
/// downsamples by `stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub channels: usize,
    pub blocks: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub input_size: usize,
    pub stages: Vec<StageSpec>,
    /// Width of the hidden FC layer; 0 puts a single linear layer on the
    /// pooled features.
    pub head_hidden: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        let stage = |channels| StageSpec {
            channels,
            blocks: 2,
            stride: 2,
        };
        Self {
            input_size: 64,
            stages: vec![stage(16), stage(32), stage(64)],
            head_hidden: 32,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        if self.input_size < 8 {
            return bad(format!("input_size {} is below 8", self.input_size));
        }
        let mut side = self.input_size;
        for (i, s) in self.stages.iter().enumerate() {
            if s.channels == 0 || s.blocks == 0 || s.stride == 0 {
                return bad(format!("stage {i} needs positive channels, blocks and stride"));
            }
            side = (side - 1) / s.stride + 1;
        }
        if side == 0 {
            return bad("stages downsample the input to nothing".into());
        }
        Ok(())
    }
}

struct Block {
    conv1: Conv,
    conv2: Conv,
    proj: Option<Conv>,
}

struct Architecture {
    stem: Conv,
    blocks: Vec<Block>,
    hidden: Option<Linear>,
    out: Linear,
}

/// Weight initialisation applied while the layout is being built.
enum Init<'a> {
    Random(&'a mut ChaCha8Rng),
    Zeros,
}

impl Init<'_> {
    fn normal(&mut self, n: usize, std: f64) -> Vec<f64> {
        match self {
            Init::Random(rng) => {
                let d = Normal::new(0.0, std).expect("positive std");
                (0..n).map(|_| d.sample(*rng)).collect()
            }
            Init::Zeros => vec![0.0; n],
        }
    }
}

fn conv_layer(
    store: &mut ParamStore,
    init: &mut Init,
    name: &str,
    (in_c, out_c, k, stride): (usize, usize, usize, usize),
    gain: f64,
) -> Conv {
    let fan_in = (in_c * k * k) as f64;
    let w = init.normal(out_c * in_c * k * k, gain * (2.0 / fan_in).sqrt());
    let weight = store.push(format!("{name}.weight"), vec![out_c, in_c, k, k], w);
    let bias = store.push(format!("{name}.bias"), vec![out_c], vec![0.0; out_c]);
    Conv {
        weight,
        bias,
        in_c,
        out_c,
        k,
        stride,
        pad: k / 2,
    }
}

fn linear_layer(
    store: &mut ParamStore,
    init: &mut Init,
    name: &str,
    in_f: usize,
    out_f: usize,
    std: f64,
) -> Linear {
    let w = init.normal(out_f * in_f, std);
    let weight = store.push(format!("{name}.weight"), vec![out_f, in_f], w);
    let bias = store.push(format!("{name}.bias"), vec![out_f], vec![0.0; out_f]);
    Linear {
        weight,
        bias,
        in_f,
        out_f,
    }
}

impl Architecture {
    fn build(cfg: &BackboneConfig, mut init: Init) -> (Self, ParamStore) {
        let mut store = ParamStore::default();
        let total_blocks: usize = cfg.stages.iter().map(|s| s.blocks).sum();
        // Shrink the residual path so activations do not grow with depth.
        let residual_gain = 1.0 / (total_blocks as f64).sqrt();

        let c0 = cfg.stages[0].channels;
        let stem = conv_layer(&mut store, &mut init, "stem", (INPUT_CHANNELS, c0, 3, 1), 1.0);
        let mut blocks = Vec::with_capacity(total_blocks);
        let mut in_c = c0;
        for (si, stage) in cfg.stages.iter().enumerate() {
            for bi in 0..stage.blocks {
                let stride = if bi == 0 { stage.stride } else { 1 };
                let name = format!("stage{}.block{}", si + 1, bi);
                let out_c = stage.channels;
                let conv1 = conv_layer(
                    &mut store,
                    &mut init,
                    &format!("{name}.conv1"),
                    (in_c, out_c, 3, stride),
                    1.0,
                );
                let conv2 = conv_layer(
                    &mut store,
                    &mut init,
                    &format!("{name}.conv2"),
                    (out_c, out_c, 3, 1),
                    residual_gain,
                );
                let proj = (in_c != out_c || stride != 1).then(|| {
                    conv_layer(
                        &mut store,
                        &mut init,
                        &format!("{name}.proj"),
                        (in_c, out_c, 1, stride),
                        // linear skip path: std 1/sqrt(fan_in), no ReLU correction
                        (0.5f64).sqrt(),
                    )
                });
                blocks.push(Block { conv1, conv2, proj });
                in_c = out_c;
            }
        }
        let (hidden, out) = if cfg.head_hidden > 0 {
            let h = cfg.head_hidden;
            let hidden = linear_layer(
                &mut store,
                &mut init,
                "head.fc1",
                in_c,
                h,
                (2.0 / in_c as f64).sqrt(),
            );
            let out = linear_layer(&mut store, &mut init, "head.fc2", h, 1, (1.0 / h as f64).sqrt());
            (Some(hidden), out)
        } else {
            let out = linear_layer(
                &mut store,
                &mut init,
                "head.fc",
                in_c,
                1,
                (1.0 / in_c as f64).sqrt(),
            );
            (None, out)
        };
        (
            Self {
                stem,
                blocks,
                hidden,
                out,
            },
            store,
        )
    }
}

struct BlockTrace {
    input: FeatureMap,
    col1: Vec<f64>,
    act1: FeatureMap,
    col2: Vec<f64>,
    col_proj: Option<Vec<f64>>,
    output: FeatureMap,
}

struct Trace {
    input_dims: (usize, usize),
    stem_col: Vec<f64>,
    stem_out: FeatureMap,
    blocks: Vec<BlockTrace>,
    pooled: Vec<f64>,
    hidden: Option<Vec<f64>>,
    logit: f64,
}

/// Output of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prob: f64,
    pub logit: f64,
}

impl Prediction {
    pub fn from_logit(logit: f64) -> Self {
        Self {
            prob: sigmoid(logit),
            logit,
        }
    }
}

/// How per-input predictions are pooled into a video-level branch score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    MeanProb,
    MeanLogit,
    Max,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::MeanProb => "mean_prob",
            Aggregation::MeanLogit => "mean_logit",
            Aggregation::Max => "max",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean_prob" => Ok(Aggregation::MeanProb),
            "mean_logit" => Ok(Aggregation::MeanLogit),
            "max" => Ok(Aggregation::Max),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

/// Pools per-input predictions; `None` for an empty slice.
pub fn aggregate(preds: &[Prediction], how: Aggregation) -> Option<f64> {
    if preds.is_empty() {
        return None;
    }
    let n = preds.len() as f64;
    Some(match how {
        Aggregation::MeanProb => preds.iter().map(|p| p.prob).sum::<f64>() / n,
        Aggregation::MeanLogit => sigmoid(preds.iter().map(|p| p.logit).sum::<f64>() / n),
        Aggregation::Max => preds.iter().map(|p| p.prob).fold(f64::MIN, f64::max),
    })
}

/// One branch of the detector. Two instances never share parameters.
pub struct BranchModel {
    config: BackboneConfig,
    modality: InputKind,
    params: ParamStore,
    arch: Architecture,
}

impl Clone for BranchModel {
    fn clone(&self) -> Self {
        Self::from_parts(self.config.clone(), self.modality, self.params.clone())
            .expect("layout of an existing model is valid")
    }
}

impl fmt::Debug for BranchModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BranchModel")
            .field("config", &self.config)
            .field("modality", &self.modality)
            .field("scalars", &self.params.num_scalars())
            .finish()
    }
}

/// Fresh model with He-normal convolution weights drawn from `cfg.seed` and
/// zero biases.
pub fn init_model(cfg: &BackboneConfig, modality: InputKind) -> Result<BranchModel, ModelError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (arch, params) = Architecture::build(cfg, Init::Random(&mut rng));
    Ok(BranchModel {
        config: cfg.clone(),
        modality,
        params,
        arch,
    })
}

impl BranchModel {
    /// Reassembles a model from stored parts, checking the parameter layout.
    pub fn from_parts(
        config: BackboneConfig,
        modality: InputKind,
        params: ParamStore,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let (arch, layout) = Architecture::build(&config, Init::Zeros);
        if !layout.same_layout(&params) {
            return Err(ModelError::LayoutMismatch);
        }
        Ok(Self {
            config,
            modality,
            params,
            arch,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn modality(&self) -> InputKind {
        self.modality
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Replaces all parameters; the layout must match.
    pub fn set_params(&mut self, params: ParamStore) -> Result<(), ModelError> {
        if !self.params.same_layout(&params) {
            return Err(ModelError::LayoutMismatch);
        }
        self.params = params;
        Ok(())
    }

    fn check_input(&self, input: &EncodedInput) -> Result<(), ModelError> {
        if input.kind() != self.modality {
            return Err(ModelError::ModalityMismatch {
                expected: self.modality,
                found: input.kind(),
            });
        }
        if input.size() != self.config.input_size {
            return Err(ModelError::ShapeMismatch {
                expected: self.config.input_size,
                found: input.size(),
            });
        }
        Ok(())
    }

    fn trace(&self, input: &EncodedInput) -> Trace {
        let s = input.size();
        let p = &self.params;
        let x = FeatureMap::new(INPUT_CHANNELS, s, s, input.tensor().to_vec());
        let (mut stem_out, stem_col) = self.arch.stem.forward(p, &x);
        relu_inplace(&mut stem_out.data);

        let mut blocks = Vec::with_capacity(self.arch.blocks.len());
        let mut cur = stem_out.clone();
        for b in &self.arch.blocks {
            let (mut act1, col1) = b.conv1.forward(p, &cur);
            relu_inplace(&mut act1.data);
            let (mut out, col2) = b.conv2.forward(p, &act1);
            let col_proj = match &b.proj {
                Some(proj) => {
                    let (skip, colp) = proj.forward(p, &cur);
                    for (o, s) in out.data.iter_mut().zip(&skip.data) {
                        *o += s;
                    }
                    Some(colp)
                }
                None => {
                    for (o, s) in out.data.iter_mut().zip(&cur.data) {
                        *o += s;
                    }
                    None
                }
            };
            relu_inplace(&mut out.data);
            let next = out.clone();
            blocks.push(BlockTrace {
                input: cur,
                col1,
                act1,
                col2,
                col_proj,
                output: out,
            });
            cur = next;
        }

        let pooled = global_avg_pool(&cur);
        let (hidden, logit) = match &self.arch.hidden {
            Some(fc1) => {
                let mut h = fc1.forward(p, &pooled);
                relu_inplace(&mut h);
                let logit = self.arch.out.forward(p, &h)[0];
                (Some(h), logit)
            }
            None => (None, self.arch.out.forward(p, &pooled)[0]),
        };
        Trace {
            input_dims: (s, s),
            stem_col,
            stem_out,
            blocks,
            pooled,
            hidden,
            logit,
        }
    }

    fn backward(&self, t: &Trace, dlogit: f64, grads: &mut ParamStore) {
        let p = &self.params;
        let dpooled = match (&self.arch.hidden, &t.hidden) {
            (Some(fc1), Some(h)) => {
                let mut dh = self.arch.out.backward(p, grads, h, &[dlogit]);
                relu_backward(h, &mut dh);
                fc1.backward(p, grads, &t.pooled, &dh)
            }
            _ => self.arch.out.backward(p, grads, &t.pooled, &[dlogit]),
        };
        let last = t.blocks.last().map_or(&t.stem_out, |b| &b.output);
        let mut grad = global_avg_pool_backward(&dpooled, last.c, last.h, last.w);

        for (b, bt) in self.arch.blocks.iter().zip(&t.blocks).rev() {
            relu_backward(&bt.output.data, &mut grad.data);
            let in_dims = (bt.input.h, bt.input.w);
            let act_dims = (bt.act1.h, bt.act1.w);
            let mut dact = b
                .conv2
                .backward(p, grads, &bt.col2, &grad, act_dims, true)
                .expect("input grad requested");
            relu_backward(&bt.act1.data, &mut dact.data);
            let mut dx = b
                .conv1
                .backward(p, grads, &bt.col1, &dact, in_dims, true)
                .expect("input grad requested");
            match (&b.proj, &bt.col_proj) {
                (Some(proj), Some(colp)) => {
                    let dskip = proj
                        .backward(p, grads, colp, &grad, in_dims, true)
                        .expect("input grad requested");
                    for (a, s) in dx.data.iter_mut().zip(&dskip.data) {
                        *a += s;
                    }
                }
                _ => {
                    for (a, s) in dx.data.iter_mut().zip(&grad.data) {
                        *a += s;
                    }
                }
            }
            grad = dx;
        }
        relu_backward(&t.stem_out.data, &mut grad.data);
        self.arch
            .stem
            .backward(p, grads, &t.stem_col, &grad, t.input_dims, false);
    }

    /// On/off state of every ReLU for `input`, in a fixed order. The loss is
    /// smooth in the parameters wherever this pattern is locally constant,
    /// which is what finite-difference gradient checks rely on.
    pub fn activation_pattern(&self, input: &EncodedInput) -> Result<Vec<bool>, ModelError> {
        self.check_input(input)?;
        let t = self.trace(input);
        let mut maps: Vec<&[f64]> = vec![&t.stem_out.data];
        for b in &t.blocks {
            maps.push(&b.act1.data);
            maps.push(&b.output.data);
        }
        if let Some(h) = &t.hidden {
            maps.push(h);
        }
        Ok(maps.into_iter().flatten().map(|&x| x > 0.0).collect())
    }

    /// Prediction for one input. Pure in `(params, input)`.
    pub fn forward(&self, input: &EncodedInput) -> Result<Prediction, ModelError> {
        self.check_input(input)?;
        Ok(Prediction::from_logit(self.trace(input).logit))
    }

    /// Predictions for many inputs, in input order.
    pub fn forward_batch(&self, inputs: &[EncodedInput]) -> Result<Vec<Prediction>, ModelError> {
        inputs.iter().try_for_each(|x| self.check_input(x))?;
        Ok(inputs
            .par_iter()
            .map(|x| Prediction::from_logit(self.trace(x).logit))
            .collect())
    }

    /// Mean binary cross-entropy over `batch` and its exact gradient.
    pub fn loss_and_grad(
        &self,
        batch: &[(&EncodedInput, Label)],
    ) -> Result<(f64, ParamStore), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        batch.iter().try_for_each(|(x, _)| self.check_input(x))?;
        let per_sample: Vec<(f64, ParamStore)> = batch
            .par_iter()
            .map(|(x, label)| {
                let t = self.trace(x);
                let (loss, dlogit) = bce_with_grad(t.logit, label.target());
                let mut g = self.params.zeros_like();
                self.backward(&t, dlogit, &mut g);
                (loss, g)
            })
            .collect();
        let n = batch.len() as f64;
        let mut grads = self.params.zeros_like();
        let mut loss = 0.0;
        // fixed-order reduction keeps results bit-reproducible
        for (l, g) in &per_sample {
            loss += l;
            grads.add_assign(g);
        }
        grads.scale(1.0 / n);
        Ok((loss / n, grads))
    }

    /// Mean BCE over `batch` without gradients.
    pub fn loss(&self, batch: &[(&EncodedInput, Label)]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        batch.iter().try_for_each(|(x, _)| self.check_input(x))?;
        let losses: Vec<f64> = batch
            .par_iter()
            .map(|(x, label)| bce_with_grad(self.trace(x).logit, label.target()).0)
            .collect();
        Ok(losses.iter().sum::<f64>() / batch.len() as f64)
    }
}

/// Per-sample loss `-[y ln p + (1-y) ln(1-p)]` with `p` clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`, and its derivative with respect to the logit
/// (zero where the clamp is active).
pub fn bce_with_grad(logit: f64, target: f64) -> (f64, f64) {
    let p = sigmoid(logit);
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let loss = -(target * pc.ln() + (1.0 - target) * (1.0 - pc).ln());
    let dlogit = if p == pc { p - target } else { 0.0 };
    (loss, dlogit)
}

/// Video-level branch score: mean of per-input probabilities.
pub fn score_video(model: &BranchModel, inputs: &[EncodedInput]) -> Result<f64, ModelError> {
    score_video_with(model, inputs, Aggregation::MeanProb)
}

pub fn score_video_with(
    model: &BranchModel,
    inputs: &[EncodedInput],
    how: Aggregation,
) -> Result<f64, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptyList);
    }
    let preds = model.forward_batch(inputs)?;
    Ok(aggregate(&preds, how).expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> BackboneConfig {
        BackboneConfig {
            input_size: 16,
            stages: vec![StageSpec {
                channels: 4,
                blocks: 1,
                stride: 2,
            }],
            head_hidden: 4,
            seed: 3,
        }
    }

    fn random_input(rng: &mut ChaCha8Rng, size: usize, kind: InputKind) -> EncodedInput {
        EncodedInput::new(size, kind, (0..3 * size * size).map(|_| rng.random()).collect())
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(&tiny(), InputKind::FlowResidual).unwrap();
        let b = init_model(&tiny(), InputKind::FlowResidual).unwrap();
        assert_eq!(a.params().checksum(), b.params().checksum());
        let c = init_model(
            &BackboneConfig {
                seed: 4,
                ..tiny()
            },
            InputKind::FlowResidual,
        )
        .unwrap();
        assert_ne!(a.params().checksum(), c.params().checksum());
        assert!(a
            .params()
            .tensors()
            .iter()
            .filter(|t| t.name.ends_with(".bias"))
            .all(|t| t.data.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn zero_stages_rejected() {
        let cfg = BackboneConfig {
            stages: vec![],
            ..tiny()
        };
        assert!(matches!(
            init_model(&cfg, InputKind::RgbFrame),
            Err(ModelError::InvalidConfig(_))
        ));
    }

    #[test]
    fn forward_checks_modality_and_shape() {
        let m = init_model(&tiny(), InputKind::FlowResidual).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_input(&mut rng, 16, InputKind::RgbFrame);
        assert!(matches!(m.forward(&x), Err(ModelError::ModalityMismatch { .. })));
        let y = random_input(&mut rng, 8, InputKind::FlowResidual);
        assert!(matches!(m.forward(&y), Err(ModelError::ShapeMismatch { .. })));
        let z = random_input(&mut rng, 16, InputKind::FlowResidual);
        let p1 = m.forward(&z).unwrap();
        let p2 = m.forward(&z).unwrap();
        assert_eq!(p1, p2);
        assert!(p1.prob > 0.0 && p1.prob < 1.0);
        assert!((p1.prob - sigmoid(p1.logit)).abs() < 1e-9);
    }

    #[test]
    fn activation_pattern_tracks_relu_states() {
        let m = init_model(&tiny(), InputKind::FlowResidual).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_input(&mut rng, 16, InputKind::FlowResidual);
        let b = random_input(&mut rng, 16, InputKind::FlowResidual);
        let (pa, pb) = (m.activation_pattern(&a).unwrap(), m.activation_pattern(&b).unwrap());
        assert_eq!(pa.len(), pb.len());
        assert_ne!(pa, pb);
        assert!(pa.iter().any(|&on| on) && pa.iter().any(|&on| !on));
        assert_eq!(pa, m.activation_pattern(&a).unwrap());
        let wrong = random_input(&mut rng, 16, InputKind::RgbFrame);
        assert!(m.activation_pattern(&wrong).is_err());
    }

    #[test]
    fn default_config_initial_probs_near_half() {
        let m = init_model(&BackboneConfig::default(), InputKind::RgbFrame).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<_> = (0..16).map(|_| random_input(&mut rng, 64, InputKind::RgbFrame)).collect();
        let mean = score_video(&m, &xs).unwrap();
        assert!((0.3..=0.7).contains(&mean), "mean prob {mean}");
    }

    #[test]
    fn bce_analytic_values() {
        let (l, g) = bce_with_grad(0.0, 1.0);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g + 0.5).abs() < 1e-12);
        let (l0, _) = bce_with_grad(0.0, 0.0);
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-12);
        // saturated and correct: the clamp leaves -ln(1 - eps)
        let (l, g) = bce_with_grad(60.0, 1.0);
        assert!((l - -(1.0 - BCE_EPS).ln()).abs() < 1e-15);
        assert!((l - 1e-7).abs() < 1e-12);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        let m = init_model(&tiny(), InputKind::FlowResidual).unwrap();
        assert_eq!(m.loss_and_grad(&[]).unwrap_err(), ModelError::EmptyBatch);
        assert_eq!(score_video(&m, &[]).unwrap_err(), ModelError::EmptyList);
    }

    #[test]
    fn aggregation_rules() {
        let preds: Vec<_> = [0.2, 0.4, 0.6]
            .iter()
            .map(|p: &f64| Prediction::from_logit((p / (1.0 - p)).ln()))
            .collect();
        assert!((aggregate(&preds, Aggregation::MeanProb).unwrap() - 0.4).abs() < 1e-12);
        assert!((aggregate(&preds, Aggregation::Max).unwrap() - 0.6).abs() < 1e-12);
        let mut rev = preds.clone();
        rev.reverse();
        assert_eq!(
            aggregate(&preds, Aggregation::MeanLogit),
            aggregate(&rev[..], Aggregation::MeanLogit)
        );
        assert!((aggregate(&preds[..1], Aggregation::MeanProb).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(aggregate(&[], Aggregation::MeanProb), None);
    }

    #[test]
    fn from_parts_checks_layout() {
        let m = init_model(&tiny(), InputKind::FlowMap).unwrap();
        let other = BackboneConfig {
            head_hidden: 0,
            ..tiny()
        };
        assert_eq!(
            BranchModel::from_parts(other, InputKind::FlowMap, m.params().clone()).unwrap_err(),
            ModelError::LayoutMismatch
        );
        let back =
            BranchModel::from_parts(tiny(), InputKind::FlowMap, m.params().clone()).unwrap();
        assert_eq!(back.params().checksum(), m.params().checksum());
    }
}
