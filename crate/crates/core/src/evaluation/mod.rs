//! Score fusion, detection metrics and per-dataset reports.

mod metrics;
mod report;

pub use metrics::{accuracy, auc, f1, Confusion};
pub use report::{
    ablation_row, comparison_row, recompute, BranchMetrics, EvalReport, FusedScore, PerBranch,
    Recomputed,
};

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Manifest};
use crate::model::{score_video_with, Aggregation, BranchModel, ModelError};
use crate::pipeline::{Pipeline, PipelineError, PreparedVideo, VideoFeatures};
use crate::residual::InputKind;

/// Allowed deviation of `alpha + beta` from one.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no scores to evaluate")]
    EmptyInput,
    #[error("AUC needs at least one real and one fake score")]
    SingleClass,
    #[error("fusion weights must be in [0, 1] and sum to 1 (got alpha={alpha}, beta={beta})")]
    InvalidWeights { alpha: f64, beta: f64 },
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("{role} model consumes {found} inputs, expected {expected}")]
    ModalityMismatch {
        role: &'static str,
        expected: InputKind,
        found: InputKind,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Convex fusion `P = alpha * p_ori + beta * p_res`, thresholded at
/// `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub threshold: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            threshold: 0.5,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.alpha)
            || !unit(self.beta)
            || (self.alpha + self.beta - 1.0).abs() > WEIGHT_TOLERANCE
        {
            return Err(EvalError::InvalidWeights {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(EvalError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

pub fn fuse(p_ori: f64, p_res: f64, cfg: &FusionConfig) -> Result<f64, EvalError> {
    cfg.validate()?;
    Ok(cfg.alpha * p_ori + cfg.beta * p_res)
}

/// Models consumed by [`evaluate_features`]. `flow` is the optional
/// flow-map baseline scored alongside for the ablation view.
#[derive(Clone, Copy)]
pub struct Branches<'a> {
    pub ori: &'a BranchModel,
    pub res: &'a BranchModel,
    pub flow: Option<&'a BranchModel>,
}

impl Branches<'_> {
    fn check(&self) -> Result<(), EvalError> {
        let mut roles = vec![
            ("appearance", self.ori, InputKind::RgbFrame),
            ("residual", self.res, InputKind::FlowResidual),
        ];
        if let Some(f) = self.flow {
            roles.push(("flow", f, InputKind::FlowMap));
        }
        for (role, m, expected) in roles {
            if m.modality() != expected {
                return Err(EvalError::ModalityMismatch {
                    role,
                    expected,
                    found: m.modality(),
                });
            }
        }
        Ok(())
    }
}

/// Video-level scores of one branch, as `(id, score, label)` in input order.
pub fn score_branch(
    model: &BranchModel,
    videos: &[PreparedVideo],
    how: Aggregation,
) -> Result<Vec<(String, f64, Label)>, EvalError> {
    videos
        .iter()
        .map(|v| Ok((v.id.clone(), score_video_with(model, &v.inputs, how)?, v.label)))
        .collect()
}

/// Score, fuse and summarise already extracted features. Videos without
/// residuals (fewer than three frames) are skipped and counted.
pub fn evaluate_features(
    models: Branches<'_>,
    features: &[VideoFeatures],
    fusion: &FusionConfig,
    how: Aggregation,
    dataset_tag: &str,
) -> Result<EvalReport, EvalError> {
    fusion.validate()?;
    models.check()?;
    let mut fused = Vec::new();
    let mut skipped_ids = Vec::new();
    for v in features {
        if v.residuals.is_empty() {
            log::warn!("skipping `{}`: too short for residual scoring", v.id);
            skipped_ids.push(v.id.clone());
            continue;
        }
        let p_ori = score_video_with(models.ori, &v.frames, how)?;
        let p_res = score_video_with(models.res, &v.residuals, how)?;
        let p_flow = match models.flow {
            Some(m) => Some(score_video_with(m, &v.flows, how)?),
            None => None,
        };
        fused.push(FusedScore {
            id: v.id.clone(),
            p_ori,
            p_res,
            p_flow,
            p: fuse(p_ori, p_res, fusion)?,
            label: v.label,
        });
    }
    if fused.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    fused.sort_by(|a, b| a.id.cmp(&b.id));
    skipped_ids.sort();
    let m = recompute(&fused, fusion.threshold)?;
    let n_fake = fused.iter().filter(|s| s.label.is_fake()).count();
    Ok(EvalReport {
        dataset_tag: dataset_tag.to_string(),
        n_real: fused.len() - n_fake,
        n_fake,
        n_skipped: skipped_ids.len(),
        skipped_ids,
        alpha: fusion.alpha,
        beta: fusion.beta,
        threshold: fusion.threshold,
        aggregation: how,
        acc: m.acc,
        auc: m.auc,
        f1: m.f1,
        per_branch: PerBranch {
            ori: m.ori,
            res: m.res,
            flow: m.flow,
        },
        fused_scores: fused,
    })
}

/// Extract features for every video of `manifest` and evaluate them.
pub fn evaluate_dataset(
    models: Branches<'_>,
    manifest: &Manifest,
    fusion: &FusionConfig,
    pipeline: &Pipeline,
    dataset_tag: &str,
) -> Result<EvalReport, EvalError> {
    fusion.validate()?;
    models.check()?;
    let features = pipeline.features_for(manifest)?;
    evaluate_features(models, &features, fusion, Aggregation::default(), dataset_tag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, BackboneConfig, StageSpec};
    use crate::residual::EncodedInput;

    #[test]
    fn fusion_examples() {
        let cfg = FusionConfig::default();
        assert!((fuse(0.9, 0.7, &cfg).unwrap() - 0.8).abs() < 1e-15);
        let ori_only = FusionConfig {
            alpha: 1.0,
            beta: 0.0,
            ..cfg
        };
        assert_eq!(fuse(0.3, 0.9, &ori_only).unwrap(), 0.3);
        let bad = FusionConfig {
            alpha: 0.6,
            beta: 0.5,
            ..cfg
        };
        assert!(matches!(
            fuse(0.1, 0.1, &bad),
            Err(EvalError::InvalidWeights { .. })
        ));
    }

    fn tiny(kind: InputKind) -> BranchModel {
        let cfg = BackboneConfig {
            input_size: 8,
            stages: vec![StageSpec {
                channels: 2,
                blocks: 1,
                stride: 2,
            }],
            head_hidden: 0,
            seed: 3,
        };
        init_model(&cfg, kind).unwrap()
    }

    fn video(id: &str, label: Label, level: f64, n_res: usize) -> VideoFeatures {
        let input = |k| EncodedInput::new(8, k, vec![level; 192]);
        VideoFeatures {
            id: id.into(),
            label,
            frames: vec![input(InputKind::RgbFrame); n_res + 2],
            flows: vec![input(InputKind::FlowMap); n_res + 1],
            residuals: vec![input(InputKind::FlowResidual); n_res],
            mean_residual_magnitude: 0.0,
        }
    }

    #[test]
    fn report_is_recomputable_and_sorted() {
        let (ori, res, flow) = (
            tiny(InputKind::RgbFrame),
            tiny(InputKind::FlowResidual),
            tiny(InputKind::FlowMap),
        );
        let feats = vec![
            video("b", Label::Fake, 0.9, 2),
            video("a", Label::Real, 0.1, 2),
            video("c", Label::Fake, 0.5, 0),
        ];
        let models = Branches {
            ori: &ori,
            res: &res,
            flow: Some(&flow),
        };
        let cfg = FusionConfig::default();
        let r = evaluate_features(models, &feats, &cfg, Aggregation::MeanProb, "toy").unwrap();
        assert_eq!((r.n_real, r.n_fake, r.n_skipped), (1, 1, 1));
        assert_eq!(r.skipped_ids, vec!["c".to_string()]);
        let ids: Vec<_> = r.fused_scores.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        for s in &r.fused_scores {
            assert_eq!(s.p, 0.5 * s.p_ori + 0.5 * s.p_res);
        }
        let m = recompute(&r.fused_scores, r.threshold).unwrap();
        assert_eq!((m.acc, m.auc, m.f1), (r.acc, r.auc, r.f1));
        let back = EvalReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn swapped_models_rejected() {
        let (ori, res) = (tiny(InputKind::RgbFrame), tiny(InputKind::FlowResidual));
        let models = Branches {
            ori: &res,
            res: &ori,
            flow: None,
        };
        let feats = vec![video("a", Label::Real, 0.1, 1)];
        assert!(matches!(
            evaluate_features(models, &feats, &FusionConfig::default(), Aggregation::MeanProb, "t"),
            Err(EvalError::ModalityMismatch { .. })
        ));
    }
}
