//! Adam with decoupled-from-nothing, classic L2: the decay term joins the
//! gradient before the moment update.

use std::collections::BTreeMap;

use crate::numerics::{GradMap, Tensor};
use crate::model::ModelParams;

use super::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.98;
pub const EPS: f64 = 1e-9;

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub step: usize,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

/// One bias-corrected Adam update. A non-finite gradient leaves parameters
/// and state untouched and reports which tensor was bad, so the caller can
/// skip the batch.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &GradMap,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient { param: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);

    for (name, p) in params.tensors.iter_mut() {
        let g = grads
            .get(name)
            .unwrap_or_else(|| panic!("gradient map is missing parameter {name:?}"));
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
        for i in 0..p.numel() {
            let grad = g.data()[i] + weight_decay * p.data()[i];
            let mi = BETA1 * m.data()[i] + (1.0 - BETA1) * grad;
            let vi = BETA2 * v.data()[i] + (1.0 - BETA2) * grad * grad;
            m.data_mut()[i] = mi;
            v.data_mut()[i] = vi;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            p.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}

/// Global-norm gradient clipping; returns the pre-clip norm when it clipped.
pub fn clip_global_norm(grads: &mut GradMap, max_norm: f64) -> Option<f64> {
    let norm = grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            g.scale_assign(scale);
        }
        Some(norm)
    } else {
        None
    }
}
