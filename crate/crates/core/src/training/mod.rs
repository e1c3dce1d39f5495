//! Independent per-branch training: shuffled mini-batch Adam with a
//! reduce-on-plateau schedule driven by video-level validation accuracy.

mod adam;
mod checkpoint;
mod history;
mod schedule;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use history::{EpochRecord, TrainLog};
pub use schedule::{PlateauSchedule, ScheduleEvent};

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_disjoint, DatasetError, Label, Manifest};
use crate::model::{score_video, BranchModel, ModelError, ParamStore};
use crate::pipeline::{Pipeline, PipelineError, PreparedVideo};
use crate::residual::{EncodedInput, InputKind};

/// Decision threshold for validation accuracy.
pub const VAL_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("the {0} split has no usable videos")]
    EmptySplit(&'static str),
    #[error("model consumes {expected} inputs but the data holds {found}")]
    ModalityMismatch { expected: InputKind, found: InputKind },
    #[error("parameter, gradient and moment layouts disagree")]
    ShapeMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("checkpoint {path} is corrupt: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },
    #[error("checkpoint {path} has format version {found}, expected {expected}")]
    VersionMismatch {
        path: PathBuf,
        found: u64,
        expected: u64,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_factor: f64,
    pub patience_epochs: usize,
    pub lr_floor: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 1e-4,
            lr_factor: 0.1,
            patience_epochs: 5,
            lr_floor: 1e-6,
            batch_size: 32,
            max_epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor must lie in (0, 1)");
        }
        if !(self.lr_floor > 0.0 && self.lr_floor < self.lr_init) {
            return bad("need 0 < lr_floor < lr_init");
        }
        if self.patience_epochs == 0 {
            return bad("patience_epochs must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_eps <= 0.0 {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// Everything needed to continue a run: schedule, optimizer moments, the
/// best parameters so far and the log. The per-epoch shuffle is derived from
/// `(seed, epoch)`, so the seed is the whole rng state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub seed: u64,
    pub schedule: PlateauSchedule,
    pub adam: AdamState,
    pub best_epoch: Option<usize>,
    pub best_params: Option<ParamStore>,
    pub finished: bool,
    pub log: TrainLog,
}

impl TrainState {
    pub fn new(params: &ParamStore, cfg: &TrainConfig) -> Self {
        Self {
            epoch: 0,
            seed: cfg.seed,
            schedule: PlateauSchedule::new(cfg),
            adam: AdamState::new(params),
            best_epoch: None,
            best_params: None,
            finished: false,
            log: TrainLog::default(),
        }
    }

    /// Rate for the next epoch.
    pub fn lr(&self) -> f64 {
        self.schedule.lr()
    }

    pub fn best_val_acc(&self) -> Option<f64> {
        self.schedule.best()
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.schedule.epochs_since_improvement()
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mixed = seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Fraction of videos whose mean fake probability lands on the right side
/// of [`VAL_THRESHOLD`].
pub fn video_accuracy(model: &BranchModel, videos: &[PreparedVideo]) -> Result<f64, TrainError> {
    if videos.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let mut correct = 0usize;
    for v in videos {
        let p = score_video(model, &v.inputs)?;
        if (p >= VAL_THRESHOLD) == (v.label == Label::Fake) {
            correct += 1;
        }
    }
    Ok(correct as f64 / videos.len() as f64)
}

fn check_modality(model: &BranchModel, videos: &[PreparedVideo]) -> Result<(), TrainError> {
    let expected = model.modality();
    for x in videos.iter().flat_map(|v| &v.inputs) {
        if x.kind() != expected {
            return Err(TrainError::ModalityMismatch {
                expected,
                found: x.kind(),
            });
        }
    }
    Ok(())
}

/// Epoch-by-epoch driver over already encoded data.
pub struct Trainer<'a> {
    model: BranchModel,
    cfg: TrainConfig,
    state: TrainState,
    samples: Vec<(&'a EncodedInput, Label)>,
    val: &'a [PreparedVideo],
}

impl<'a> Trainer<'a> {
    pub fn new(
        model: BranchModel,
        cfg: TrainConfig,
        train: &'a [PreparedVideo],
        val: &'a [PreparedVideo],
    ) -> Result<Self, TrainError> {
        let state = TrainState::new(model.params(), &cfg);
        Self::resume(model, cfg, state, train, val)
    }

    /// Continue from `state`, e.g. one restored from a checkpoint.
    pub fn resume(
        model: BranchModel,
        cfg: TrainConfig,
        state: TrainState,
        train: &'a [PreparedVideo],
        val: &'a [PreparedVideo],
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if train.iter().all(|v| v.inputs.is_empty()) {
            return Err(TrainError::EmptySplit("training"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptySplit("validation"));
        }
        check_modality(&model, train)?;
        check_modality(&model, val)?;
        if !model.params().same_layout(&state.adam.m) {
            return Err(TrainError::ShapeMismatch);
        }
        let samples = train
            .iter()
            .flat_map(|v| v.inputs.iter().map(move |x| (x, v.label)))
            .collect();
        Ok(Self {
            model,
            cfg,
            state,
            samples,
            val,
        })
    }

    pub fn model(&self) -> &BranchModel {
        &self.model
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished || self.state.epoch >= self.cfg.max_epochs
    }

    /// One full shuffled pass plus validation and the schedule update.
    /// Returns `None` once training has stopped.
    pub fn run_epoch(&mut self) -> Result<Option<EpochRecord>, TrainError> {
        if self.is_finished() {
            return Ok(None);
        }
        let lr = self.state.lr();
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut epoch_rng(self.state.seed, self.state.epoch));

        let mut loss_sum = 0.0;
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        for chunk in order.chunks(self.cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| self.samples[i]));
            let (loss, grads) = self.model.loss_and_grad(&batch)?;
            loss_sum += loss * chunk.len() as f64;
            adam_step(
                self.model.params_mut(),
                &grads,
                &mut self.state.adam,
                lr,
                &self.cfg,
            )?;
        }
        let train_loss = loss_sum / self.samples.len() as f64;
        let val_acc = video_accuracy(&self.model, self.val)?;

        self.state.epoch += 1;
        let epoch = self.state.epoch;
        match self.state.schedule.observe(val_acc) {
            ScheduleEvent::Improved => {
                self.state.best_epoch = Some(epoch);
                self.state.best_params = Some(self.model.params().clone());
            }
            ScheduleEvent::Stagnant => {}
            ScheduleEvent::Reduced { lr } => log::info!("epoch {epoch}: lr reduced to {lr:e}"),
            ScheduleEvent::Terminate => {
                log::info!("epoch {epoch}: lr would fall below the floor, stopping");
                self.state.finished = true;
            }
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_acc,
            lr,
        };
        log::info!("{record}");
        self.state.log.push(record);
        if epoch >= self.cfg.max_epochs {
            self.state.finished = true;
        }
        Ok(Some(record))
    }

    /// Train until the schedule or the epoch cap stops the run.
    pub fn run_to_end(&mut self) -> Result<(), TrainError> {
        while self.run_epoch()?.is_some() {}
        Ok(())
    }

    /// Final model carries the best-validation parameters (earliest epoch
    /// on ties).
    pub fn finish(self) -> (BranchModel, TrainLog, TrainState) {
        let mut model = self.model;
        if let Some(best) = &self.state.best_params {
            model
                .set_params(best.clone())
                .expect("best params share the model layout");
        }
        let log = self.state.log.clone();
        (model, log, self.state)
    }

    /// Current (not best) model and state, for checkpointing mid-run.
    pub fn into_parts(self) -> (BranchModel, TrainState) {
        (self.model, self.state)
    }
}

/// Train on encoded videos until the schedule terminates or `max_epochs`
/// binds.
pub fn train_branch_prepared(
    model: BranchModel,
    train: &[PreparedVideo],
    val: &[PreparedVideo],
    cfg: &TrainConfig,
) -> Result<(BranchModel, TrainLog), TrainError> {
    let mut trainer = Trainer::new(model, cfg.clone(), train, val)?;
    trainer.run_to_end()?;
    let (model, log, _) = trainer.finish();
    Ok((model, log))
}

/// Encode both splits with `pipeline` for the model's modality and train.
pub fn train_branch(
    model: BranchModel,
    train: &Manifest,
    val: &Manifest,
    cfg: &TrainConfig,
    pipeline: &Pipeline,
) -> Result<(BranchModel, TrainLog), TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    check_disjoint(&[train, val])?;
    let kind = model.modality();
    let (train_videos, _) = pipeline.prepare_all(train, kind)?;
    let (val_videos, _) = pipeline.prepare_all(val, kind)?;
    train_branch_prepared(model, &train_videos, &val_videos, cfg)
}
