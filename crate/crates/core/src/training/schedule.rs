use serde::{Deserialize, Serialize};

use super::TrainConfig;

/// What the plateau rule decided after observing one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleEvent {
    /// Strict improvement of validation accuracy; the counter was reset.
    Improved,
    /// No improvement, patience not yet exhausted.
    Stagnant,
    /// Patience exhausted; the learning rate was multiplied by the factor.
    Reduced { lr: f64 },
    /// Patience exhausted and the next rate would fall below the floor.
    Terminate,
}

/// Reduce-on-plateau with a floor: multiply the rate by `lr_factor` once
/// `patience_epochs` consecutive epochs pass without a strict improvement
/// in validation accuracy, and stop when the reduced rate would drop below
/// `lr_floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    lr_init: f64,
    lr_factor: f64,
    patience: usize,
    lr_floor: f64,
    drops: u32,
    best: Option<f64>,
    since_improvement: usize,
}

// Relative slack when comparing against the floor: 1e-4·0.1·0.1 is not
// exactly 1e-6 in binary floating point.
const FLOOR_SLACK: f64 = 1e-9;

impl PlateauSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr_init: cfg.lr_init,
            lr_factor: cfg.lr_factor,
            patience: cfg.patience_epochs,
            lr_floor: cfg.lr_floor,
            drops: 0,
            best: None,
            since_improvement: 0,
        }
    }

    /// Current learning rate, `lr_init · lr_factor^drops`.
    pub fn lr(&self) -> f64 {
        self.lr_init * self.lr_factor.powi(self.drops as i32)
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }

    pub fn drops(&self) -> u32 {
        self.drops
    }

    pub fn observe(&mut self, val_acc: f64) -> ScheduleEvent {
        if self.best.is_none_or(|b| val_acc > b) {
            self.best = Some(val_acc);
            self.since_improvement = 0;
            return ScheduleEvent::Improved;
        }
        self.since_improvement += 1;
        if self.since_improvement < self.patience {
            return ScheduleEvent::Stagnant;
        }
        self.since_improvement = 0;
        let next = self.lr_init * self.lr_factor.powi(self.drops as i32 + 1);
        if next < self.lr_floor * (1.0 - FLOOR_SLACK) {
            return ScheduleEvent::Terminate;
        }
        self.drops += 1;
        ScheduleEvent::Reduced { lr: self.lr() }
    }
}
