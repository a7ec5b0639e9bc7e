//! Bias-corrected Adam over the named parameter table, plus the two-phase
//! learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Tensor;

use super::TrainConfig;

/// First/second moment estimates per trainable parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamState {
    /// Fresh zeroed state covering exactly the trainable parameters.
    pub fn new(params: &ModelParams) -> AdamState {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, tensor) in params.trainable() {
            m.insert(name.clone(), Tensor::zeros(tensor.shape()));
            v.insert(name.clone(), Tensor::zeros(tensor.shape()));
        }
        AdamState { m, v, step: 0 }
    }

    pub fn from_parts(m: BTreeMap<String, Tensor>, v: BTreeMap<String, Tensor>, step: u64) -> AdamState {
        AdamState { m, v, step }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&BTreeMap<String, Tensor>, &BTreeMap<String, Tensor>) {
        (&self.m, &self.v)
    }

    /// State must mirror the trainable slice of `params` exactly.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let expected: Vec<&String> = params.trainable().map(|(n, _)| n).collect();
        if self.m.len() != expected.len() || self.v.len() != expected.len() {
            return Err(Error::ManifestMismatch(format!(
                "optimizer state covers {} parameters, model has {} trainable",
                self.m.len(),
                expected.len()
            )));
        }
        for name in expected {
            let shape = params.get(name)?.shape();
            for (table, label) in [(&self.m, "m"), (&self.v, "v")] {
                let t = table.get(name).ok_or_else(|| {
                    Error::ManifestMismatch(format!("optimizer state missing {name}.{label}"))
                })?;
                if t.shape() != shape {
                    return Err(Error::ManifestMismatch(format!(
                        "optimizer {name}.{label} has shape {:?}, parameter has {:?}",
                        t.shape(),
                        shape
                    )));
                }
            }
        }
        if self.v.values().any(|t| t.data().iter().any(|&x| x < 0.0)) {
            return Err(Error::ManifestMismatch(
                "optimizer second moments must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update, in place. `grads` must cover exactly the
/// trainable parameter names.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    config.validate()?;
    if lr <= 0.0 {
        return Err(Error::invalid("adam_step", format!("learning rate {lr}")));
    }
    if grads.len() != state.m.len() {
        return Err(Error::ManifestMismatch(format!(
            "gradient table covers {} parameters, optimizer state {}",
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (name, grad) in grads {
        let m = state
            .m
            .get_mut(name)
            .ok_or_else(|| Error::ManifestMismatch(format!("gradient for unknown parameter {name}")))?;
        let v = state.v.get_mut(name).expect("m and v hold the same keys");
        let current = params.get(name)?;
        if grad.shape() != current.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{:?} for {name}", current.shape()),
                format!("{:?}", grad.shape()),
            ));
        }
        let mut updated = current.clone();
        let (md, vd, gd, pd) = (m.data_mut(), v.data_mut(), grad.data(), updated.data_mut());
        for i in 0..gd.len() {
            md[i] = config.beta1 * md[i] + (1.0 - config.beta1) * gd[i];
            vd[i] = config.beta2 * vd[i] + (1.0 - config.beta2) * gd[i] * gd[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
        }
        params.set(name, updated)?;
    }
    Ok(())
}

/// Constant initial rate, dropped once after a fixed number of epochs.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    if epoch < config.drop_after {
        config.lr_initial
    } else {
        config.lr_drop
    }
}
