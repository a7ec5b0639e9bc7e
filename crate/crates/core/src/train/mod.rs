//! Training: composite L1 loss, bias-corrected Adam with a two-phase
//! learning-rate schedule, mini-batch loop with gradient averaging, and
//! binary checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod loss;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{init_params, ModelConfig, ModelParams, Net};
use crate::ops::BnMode;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::video::{augment_flip, FrameSequence};

pub use adam::{adam_step, lr_schedule, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{composite_loss, LossBreakdown};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr_initial: f64,
    pub lr_drop: f64,
    pub drop_after: usize,
    pub post_drop_epochs: usize,
    pub batch_size: usize,
    pub lambda_up: f64,
    pub use_composite_loss: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_initial: 1e-4,
            lr_drop: 1e-5,
            drop_after: 40,
            post_drop_epochs: 15,
            batch_size: 8,
            lambda_up: 0.01,
            use_composite_loss: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return bad("beta1 must lie in (0,1)");
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta2 must lie in (0,1)");
        }
        if self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.lr_initial <= 0.0 || self.lr_drop <= 0.0 {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.lambda_up < 0.0 {
            return bad("lambda_up must be non-negative");
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.drop_after + self.post_drop_epochs
    }

    /// The weight actually applied to the upsampling term; the composite
    /// toggle reduces training to the reconstruction loss alone.
    pub fn effective_lambda(&self) -> f64 {
        if self.use_composite_loss {
            self.lambda_up
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub l_ir: f64,
    pub l_up: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub state: AdamState,
    pub history: Vec<EpochStats>,
}

/// One train-mode forward/backward on a single sample. Returns the gradient
/// of `l_ir + lambda*l_up` for every trainable parameter and the loss values;
/// folds the batch-norm running statistics observed during the pass back
/// into `params`.
pub fn loss_gradients(
    params: &mut ModelParams,
    model: &ModelConfig,
    frames: &FrameSequence,
    truth: &Tensor,
    lambda: f64,
) -> Result<(BTreeMap<String, Tensor>, LossBreakdown)> {
    let (table, breakdown, updates) = {
        let mut net = Net::new(params, model, BnMode::Train)?;
        let vars = net.forward(frames)?;
        let truth_var = net.input(truth.clone());
        let l_ir = net.l1_mean(vars.output, truth_var)?;
        let l_up = net.l1_mean(vars.upsampled, truth_var)?;
        let weighted = net.graph().scale(l_up, lambda);
        let total = net.graph().add(l_ir, weighted)?;
        let breakdown = LossBreakdown {
            l_ir: net.value(l_ir).item(),
            l_up: net.value(l_up).item(),
            total: net.value(total).item(),
        };
        let mut grads = net.backward(total)?;
        let table = net.param_grads(&mut grads);
        (table, breakdown, std::mem::take(&mut net.bn_updates))
    };
    for update in updates {
        params.set(&format!("{}.running_mean", update.prefix), update.running_mean)?;
        params.set(&format!("{}.running_var", update.prefix), update.running_var)?;
    }
    Ok((table, breakdown))
}

fn check_dataset(dataset: &[(FrameSequence, Tensor)], model: &ModelConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::invalid("train", "empty dataset"));
    }
    for (i, (frames, truth)) in dataset.iter().enumerate() {
        if frames.len() != model.frames() {
            return Err(Error::invalid(
                "train",
                format!("sample {i} has {} frames, config wants {}", frames.len(), model.frames()),
            ));
        }
        let expect = [3, frames.height() * model.scale, frames.width() * model.scale];
        if truth.shape() != expect {
            return Err(Error::shape("train", format!("{expect:?}"), format!("{:?}", truth.shape())));
        }
    }
    Ok(())
}

/// Full training run from a fresh initialization. Samples are shuffled each
/// epoch, flip-augmented, and batched; gradients are averaged over the batch
/// before each Adam update. Deterministic for a fixed seed.
pub fn train(
    dataset: &[(FrameSequence, Tensor)],
    model: &ModelConfig,
    config: &TrainConfig,
    sink: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    model.validate()?;
    config.validate()?;
    check_dataset(dataset, model)?;

    let mut params = init_params(model, config.seed)?;
    let mut state = AdamState::new(&params);
    // Decorrelated from the initialization stream.
    let mut rng = SplitMix64::new(config.seed.wrapping_add(1));
    let lambda = config.effective_lambda();
    let mut history = Vec::with_capacity(config.epochs());

    for epoch in 0..config.epochs() {
        let lr = lr_schedule(epoch, config);
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        rng.shuffle(&mut order);

        let mut sums = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            for &idx in batch {
                let (frames, truth) = &dataset[idx];
                let pair = (frames.clone(), truth.clone());
                let (frames, truth) = augment_flip(&pair, rng.next_u64())?;
                let (grads, sample) = loss_gradients(&mut params, model, &frames, &truth, lambda)?;
                for (name, grad) in grads {
                    match acc.get_mut(&name) {
                        Some(t) => t.add_assign(&grad)?,
                        None => {
                            acc.insert(name, grad);
                        }
                    }
                }
                sums.0 += sample.l_ir;
                sums.1 += sample.l_up;
                sums.2 += sample.total;
            }
            let inv = 1.0 / batch.len() as f64;
            for grad in acc.values_mut() {
                *grad = grad.scale(inv);
            }
            adam_step(&mut params, &acc, &mut state, lr, config)?;
        }

        let n = dataset.len() as f64;
        let stats = EpochStats {
            epoch,
            l_ir: sums.0 / n,
            l_up: sums.1 / n,
            total: sums.2 / n,
            lr,
        };
        sink(&stats);
        history.push(stats);
    }

    Ok(TrainOutcome { params, state, history })
}
