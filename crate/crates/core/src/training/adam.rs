use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::model::ParamStore;

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamStore,
    pub v: ParamStore,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if !(params.same_layout(grads) && params.same_layout(&state.m) && params.same_layout(&state.v))
    {
        return Err(TrainError::ShapeMismatch);
    }
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let bc1 = 1.0 - b1.powf(state.step as f64);
    let bc2 = 1.0 - b2.powf(state.step as f64);
    let moments = state.m.values_mut().zip(state.v.values_mut());
    for ((theta, g), (m, v)) in params.values_mut().zip(grads.values()).zip(moments) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *theta -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}
