//! Runtime verification suites behind the gradcheck and selftest commands:
//! finite-difference checks for every differentiable kernel, an end-to-end
//! gradient check on a reduced network, and the structural invariants
//! (channel growth, attention normalization, residual identity, loss
//! gradient equivalence).

use crate::autodiff::{grad_check, Graph, Var, DEFAULT_GRAD_EPS};
use crate::error::Result;
use crate::model::{forward, init_params, ModelConfig, ModelParams, Net};
use crate::ops::{self, BnMode};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::train::loss_gradients;
use crate::video::FrameSequence;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const E2E_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn bounded(name: impl Into<String>, max_error: f64, tolerance: f64) -> CheckReport {
        CheckReport {
            name: name.into(),
            passed: max_error.is_finite() && max_error < tolerance,
            detail: format!("max error {max_error:.3e} (tolerance {tolerance:.0e})"),
        }
    }

    fn exact(name: impl Into<String>, max_error: f64) -> CheckReport {
        CheckReport {
            name: name.into(),
            passed: max_error == 0.0,
            detail: format!("max error {max_error:.3e} (exact match required)"),
        }
    }

    fn flag(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> CheckReport {
        CheckReport { name: name.into(), passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict}  {:<32} {}", self.name, self.detail)
    }
}

pub fn all_passed(reports: &[CheckReport]) -> bool {
    reports.iter().all(|r| r.passed)
}

fn rand_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    let data = (0..shape.iter().product::<usize>()).map(|_| rng.next_uniform(1.0)).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Push values away from zero so kinked ops (relu, abs) see no sign flips
/// within the finite-difference stencil.
fn away_from_kinks(t: &Tensor) -> Tensor {
    t.map(|v| v + 0.3 * if v >= 0.0 { 1.0 } else { -1.0 })
}

/// Weighted sum with fixed coefficients: gives every output element a
/// distinct influence on the scalar objective, so directions a plain mean
/// would miss (e.g. softmax's sum-to-one null space) stay observable.
fn probe_sum(graph: &mut Graph, var: Var, probe: &Tensor) -> Result<Var> {
    let value = graph.value(var);
    let total: f64 = value.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
    let weights = probe.clone();
    Ok(graph.push_op(Tensor::scalar(total), &[var], move |gout, _, _| {
        vec![weights.scale(gout.item())]
    }))
}

/// Step size for the per-op checks. Smaller than the grad_check default:
/// train-mode batchnorm has gradient components that nearly cancel, and at
/// 1e-3 the central-difference truncation error alone can graze the 1e-4
/// tolerance. Still orders of magnitude above the f64 roundoff floor.
const OP_GRAD_EPS: f64 = 1e-4;

/// Finite-difference the whole op registry; `trials` independent random
/// inputs per check.
pub fn op_gradient_checks(trials: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut rng = SplitMix64::new(seed);
    let mut reports = Vec::new();

    type Builder = Box<dyn Fn(&mut Graph, Var, &mut SplitMix64) -> Result<Var>>;
    let mut check = |name: &str,
                     shape: &[usize],
                     kinked: bool,
                     rng: &mut SplitMix64,
                     build: Builder|
     -> Result<()> {
        let mut worst = 0.0_f64;
        for _ in 0..trials {
            let mut input = rand_tensor(shape, rng);
            if kinked {
                input = away_from_kinks(&input);
            }
            let trial_rng = SplitMix64::new(rng.next_u64());
            let report = grad_check(
                name,
                |g, v| build(g, v, &mut trial_rng.clone()),
                &input,
                OP_GRAD_EPS,
            )?;
            worst = worst.max(report.max_rel_error);
        }
        reports.push(CheckReport::bounded(name, worst, OP_TOLERANCE));
        Ok(())
    };

    check(
        "conv2d.input",
        &[2, 5, 5],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let w = g.input(rand_tensor(&[3, 2, 3, 3], r));
            let b = g.input(rand_tensor(&[3], r));
            let y = g.conv2d(x, w, b)?;
            let p = rand_tensor(&[3, 5, 5], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "conv2d.weight",
        &[3, 2, 3, 3],
        false,
        &mut rng,
        Box::new(|g, w, r| {
            let x = g.input(rand_tensor(&[2, 5, 5], r));
            let b = g.input(rand_tensor(&[3], r));
            let y = g.conv2d(x, w, b)?;
            let p = rand_tensor(&[3, 5, 5], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "conv2d.bias",
        &[3],
        false,
        &mut rng,
        Box::new(|g, b, r| {
            let x = g.input(rand_tensor(&[2, 5, 5], r));
            let w = g.input(rand_tensor(&[3, 2, 3, 3], r));
            let y = g.conv2d(x, w, b)?;
            let p = rand_tensor(&[3, 5, 5], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "conv3d.input",
        &[2, 2, 4, 4],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let w = g.input(rand_tensor(&[2, 2, 3, 3, 3], r));
            let b = g.input(rand_tensor(&[2], r));
            let y = g.conv3d(x, w, b)?;
            let p = rand_tensor(&[2, 2, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "conv3d.weight",
        &[2, 2, 1, 3, 3],
        false,
        &mut rng,
        Box::new(|g, w, r| {
            let x = g.input(rand_tensor(&[2, 2, 4, 4], r));
            let b = g.input(rand_tensor(&[2], r));
            let y = g.conv3d(x, w, b)?;
            let p = rand_tensor(&[2, 2, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "relu",
        &[3, 4, 4],
        true,
        &mut rng,
        Box::new(|g, x, r| {
            let y = g.relu(x);
            let p = rand_tensor(&[3, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "softmax.frame-axis",
        &[2, 3, 4],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let y = g.softmax_axis(x, 1)?;
            let p = rand_tensor(&[2, 3, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "batchnorm.train.input",
        &[3, 4, 4],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let gamma = g.input(away_from_kinks(&rand_tensor(&[3], r)));
            let beta = g.input(rand_tensor(&[3], r));
            let (y, _) = g.batchnorm(
                x,
                gamma,
                beta,
                &Tensor::zeros(&[3]),
                &Tensor::full(&[3], 1.0),
                ops::BN_MOMENTUM,
                ops::BN_EPSILON,
                BnMode::Train,
            )?;
            let p = rand_tensor(&[3, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "batchnorm.train.gamma",
        &[3],
        false,
        &mut rng,
        Box::new(|g, gamma, r| {
            let x = g.input(rand_tensor(&[3, 4, 4], r));
            let beta = g.input(rand_tensor(&[3], r));
            let (y, _) = g.batchnorm(
                x,
                gamma,
                beta,
                &Tensor::zeros(&[3]),
                &Tensor::full(&[3], 1.0),
                ops::BN_MOMENTUM,
                ops::BN_EPSILON,
                BnMode::Train,
            )?;
            let p = rand_tensor(&[3, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "batchnorm.eval.input",
        &[3, 4, 4],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let gamma = g.input(rand_tensor(&[3], r));
            let beta = g.input(rand_tensor(&[3], r));
            let mean = rand_tensor(&[3], r);
            let var = rand_tensor(&[3], r).map(|v| 0.5 + v.abs());
            let (y, updated) = g.batchnorm(
                x,
                gamma,
                beta,
                &mean,
                &var,
                ops::BN_MOMENTUM,
                ops::BN_EPSILON,
                BnMode::Eval,
            )?;
            assert!(updated.is_none());
            let p = rand_tensor(&[3, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "pixel_shuffle",
        &[12, 3, 3],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let y = g.pixel_shuffle(x, 2)?;
            let p = rand_tensor(&[3, 6, 6], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "bicubic_resize",
        &[2, 4, 4],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let y = g.bicubic_resize(x, 4.0)?;
            let p = rand_tensor(&[2, 16, 16], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "gaussian_blur",
        &[2, 6, 6],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let y = g.gaussian_blur(x, 1.6)?;
            let p = rand_tensor(&[2, 6, 6], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "mul_broadcast_channel.features",
        &[3, 2, 4, 4],
        false,
        &mut rng,
        Box::new(|g, f, r| {
            let w = g.input(rand_tensor(&[1, 2, 4, 4], r));
            let y = g.mul_broadcast_channel(f, w)?;
            let p = rand_tensor(&[3, 2, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "mul_broadcast_channel.weights",
        &[1, 2, 4, 4],
        false,
        &mut rng,
        Box::new(|g, w, r| {
            let f = g.input(rand_tensor(&[3, 2, 4, 4], r));
            let y = g.mul_broadcast_channel(f, w)?;
            let p = rand_tensor(&[3, 2, 4, 4], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "concat.reshape",
        &[2, 3, 3],
        false,
        &mut rng,
        Box::new(|g, x, r| {
            let other = g.input(rand_tensor(&[1, 3, 3], r));
            let y = g.concat(0, &[x, other])?;
            let y = g.reshape(y, vec![27])?;
            let p = rand_tensor(&[27], r);
            probe_sum(g, y, &p)
        }),
    )?;
    check(
        "arithmetic.chain",
        &[3, 3],
        true,
        &mut rng,
        Box::new(|g, x, r| {
            let shift = g.input(rand_tensor(&[3, 3], r).scale(0.05));
            let y = g.add(x, shift)?;
            let y = g.scale(y, 1.7);
            let z = g.input(rand_tensor(&[3, 3], r).scale(0.05));
            let y = g.sub(y, z)?;
            let y = g.abs(y);
            Ok(g.mean(y))
        }),
    )?;

    Ok(reports)
}

/// Deliberately corrupted backward pass; the harness must flag it. Used as a
/// canary that the gradient checks can actually fail.
pub fn injected_fault_check(seed: u64) -> CheckReport {
    let mut rng = SplitMix64::new(seed);
    let input = rand_tensor(&[3, 3], &mut rng);
    let probe = rand_tensor(&[3, 3], &mut rng);
    let report = grad_check(
        "injected-fault",
        |g, x| {
            let doubled = g.value(x).scale(2.0);
            let bad = g.push_op(doubled, &[x], |gout, _, _| vec![gout.scale(2.2)]);
            probe_sum(g, bad, &probe)
        },
        &input,
        DEFAULT_GRAD_EPS,
    );
    match report {
        Ok(r) => CheckReport::bounded("injected-fault-canary", r.max_rel_error, OP_TOLERANCE),
        Err(e) => CheckReport::flag("injected-fault-canary", false, format!("error: {e}")),
    }
}

/// The small network used for end-to-end differentiation checks.
pub fn reduced_config() -> ModelConfig {
    ModelConfig {
        t: 1,
        base_channels: 8,
        inner_growth: 4,
        outer_growth: 8,
        inner_units: 4,
        outer_blocks_3d: 1,
        outer_blocks_2d: 1,
        scale: 4,
        attention_in_extraction: true,
        attention_in_fusion: true,
    }
}

fn random_frames(count: usize, h: usize, w: usize, rng: &mut SplitMix64) -> FrameSequence {
    let frames = (0..count)
        .map(|_| {
            let data = (0..3 * h * w).map(|_| rng.next_f64()).collect();
            Tensor::from_vec(vec![3, h, w], data).unwrap()
        })
        .collect();
    FrameSequence::new(frames).unwrap()
}

fn scalar_loss(
    params: &ModelParams,
    config: &ModelConfig,
    frames: &FrameSequence,
    target: &Tensor,
) -> Result<f64> {
    let mut net = Net::new(params, config, BnMode::Eval)?;
    let vars = net.forward(frames)?;
    let target_var = net.input(target.clone());
    let loss = net.l1_mean(vars.output, target_var)?;
    Ok(net.value(loss).item())
}

/// Central-difference the full forward pass against the analytic gradient at
/// `samples` randomly chosen parameter scalars.
pub fn e2e_gradient_check(samples: usize, seed: u64) -> Result<CheckReport> {
    let config = reduced_config();
    let mut params = init_params(&config, seed)?;
    let mut rng = SplitMix64::new(seed.wrapping_add(0x5eed));
    let frames = random_frames(config.frames(), 8, 8, &mut rng);

    // Offsetting the target keeps |output - target| away from its kink for
    // every perturbation the stencil applies.
    let base = forward(&frames, &params, &config)?;
    let target = base.map(|v| v + 0.5);

    let analytic = {
        let mut net = Net::new(&params, &config, BnMode::Eval)?;
        let vars = net.forward(&frames)?;
        let target_var = net.input(target.clone());
        let loss = net.l1_mean(vars.output, target_var)?;
        let mut grads = net.backward(loss)?;
        net.param_grads(&mut grads)
    };

    let slots: Vec<(String, usize)> = params
        .trainable()
        .map(|(name, tensor)| (name.clone(), tensor.numel()))
        .collect();
    let total: usize = slots.iter().map(|(_, n)| n).sum();
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < samples.min(total) {
        picked.insert(rng.next_index(total));
    }

    let eps = DEFAULT_GRAD_EPS;
    let mut worst = 0.0_f64;
    for flat in picked {
        let mut offset = flat;
        let (name, index) = slots
            .iter()
            .find_map(|(name, numel)| {
                if offset < *numel {
                    Some((name.clone(), offset))
                } else {
                    offset -= numel;
                    None
                }
            })
            .expect("flat index in range");

        let original = params.get(&name)?.clone();
        let mut plus = original.clone();
        plus.data_mut()[index] += eps;
        params.set(&name, plus)?;
        let loss_plus = scalar_loss(&params, &config, &frames, &target)?;

        let mut minus = original.clone();
        minus.data_mut()[index] -= eps;
        params.set(&name, minus)?;
        let loss_minus = scalar_loss(&params, &config, &frames, &target)?;
        params.set(&name, original)?;

        let numeric = (loss_plus - loss_minus) / (2.0 * eps);
        let a = analytic[&name].data()[index];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(CheckReport::bounded("e2e.reduced-forward", worst, E2E_TOLERANCE))
}

fn expected_widths(config: &ModelConfig) -> Vec<usize> {
    (0..=config.inner_units).map(|u| config.base_channels + u * config.inner_growth).collect()
}

fn growth_check(name: &str, config: &ModelConfig, seed: u64) -> Result<CheckReport> {
    let params = init_params(config, seed)?;
    let mut rng = SplitMix64::new(seed);
    let frames = random_frames(config.frames(), 6, 6, &mut rng);
    let mut net = Net::new(&params, config, BnMode::Eval)?;
    net.forward(&frames)?;

    let widths = expected_widths(config);
    let mut failures = Vec::new();
    for (scope, blocks) in [("fuse3d", config.outer_blocks_3d), ("recon2d", config.outer_blocks_2d)] {
        for k in 1..=blocks {
            let seen = net.trace.channels(&format!("{scope}.block{k}.in"));
            if seen != vec![config.base_channels * k] {
                failures.push(format!("{scope}.block{k}.in={seen:?}"));
            }
            let seen = net.trace.channels(&format!("{scope}.block{k}.width"));
            if seen != widths {
                failures.push(format!("{scope}.block{k}.width={seen:?}"));
            }
        }
        let seen = net.trace.channels(&format!("{scope}.final.in"));
        if seen != vec![config.base_channels * (blocks + 1)] {
            failures.push(format!("{scope}.final.in={seen:?}"));
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "inner {widths:?}, outer steps of {} as expected",
            config.base_channels
        )
    } else {
        failures.join("; ")
    };
    Ok(CheckReport::flag(format!("channel-growth.{name}"), failures.is_empty(), detail))
}

fn random_config(rng: &mut SplitMix64) -> ModelConfig {
    let base = [8, 12, 16][rng.next_index(3)];
    ModelConfig {
        t: 1 + rng.next_index(3),
        base_channels: base,
        inner_growth: [2, 4, 8][rng.next_index(3)],
        outer_growth: base,
        inner_units: 2 + rng.next_index(3),
        outer_blocks_3d: 1 + rng.next_index(3),
        outer_blocks_2d: 1 + rng.next_index(3),
        scale: 4,
        attention_in_extraction: rng.next_bool(),
        attention_in_fusion: rng.next_bool(),
    }
}

pub fn channel_growth_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let mut reports = vec![growth_check("default", &ModelConfig::default(), seed)?];
    let mut rng = SplitMix64::new(seed.wrapping_add(3));
    for i in 1..=3 {
        let config = random_config(&mut rng);
        reports.push(growth_check(&format!("random{i}"), &config, rng.next_u64())?);
    }
    Ok(reports)
}

/// Both attention sites: read the weights back through an all-ones channel
/// and check they sum to one at every pixel.
pub fn attention_normalization_check(seed: u64) -> Result<CheckReport> {
    let config = reduced_config();
    let params = init_params(&config, seed)?;
    let mut net = Net::new(&params, &config, BnMode::Eval)?;
    let mut rng = SplitMix64::new(seed.wrapping_add(7));

    let mut worst = 0.0_f64;
    let sites = [
        ("pre.attn.weight", config.base_channels, config.t + 1),
        ("fuse3d.block1.attn.weight", config.inner_peak(), config.fusion_depth()),
    ];
    for (proj_name, channels, depth) in sites {
        let mut features = rand_tensor(&[channels, depth, 5, 5], &mut rng);
        for n in 0..depth {
            for y in 0..5 {
                for x in 0..5 {
                    features.set(&[0, n, y, x], 1.0);
                }
            }
        }
        let f = net.input(features);
        let proj = net.param_var(proj_name)?;
        let out = net.temporal_attention(f, proj)?;
        let v = net.value(out);
        for y in 0..5 {
            for x in 0..5 {
                let total: f64 = (0..depth).map(|n| v.get(&[0, n, y, x])).sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    Ok(CheckReport::bounded("attention.normalization", worst, 1e-12))
}

/// A fresh network is exactly the bicubic upsampler, over `inputs` random
/// frame windows spread across two configurations.
pub fn residual_identity_check(inputs: usize, seed: u64) -> Result<CheckReport> {
    let mid = ModelConfig {
        t: 2,
        base_channels: 16,
        inner_growth: 8,
        outer_growth: 16,
        inner_units: 3,
        outer_blocks_3d: 2,
        outer_blocks_2d: 2,
        scale: 4,
        attention_in_extraction: true,
        attention_in_fusion: true,
    };
    let configs = [reduced_config(), mid];
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0_f64;
    for i in 0..inputs {
        let config = &configs[i % configs.len()];
        let params = init_params(config, rng.next_u64())?;
        let frames = random_frames(config.frames(), 6, 6, &mut rng);
        let out = forward(&frames, &params, config)?;
        let bicubic = ops::bicubic_resize(frames.reference(), config.scale as f64)?;
        let diff = out
            .data()
            .iter()
            .zip(bicubic.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    Ok(CheckReport::exact("residual.identity", worst))
}

/// The bicubic loss term shifts the reported value but not one parameter
/// gradient.
pub fn loss_equivalence_check(seed: u64) -> Result<CheckReport> {
    let config = reduced_config();
    let init = init_params(&config, seed)?;
    let mut rng = SplitMix64::new(seed.wrapping_add(11));
    let frames = random_frames(config.frames(), 6, 6, &mut rng);
    let truth_data = (0..3 * 24 * 24).map(|_| rng.next_f64()).collect();
    let truth = Tensor::from_vec(vec![3, 24, 24], truth_data).unwrap();

    let mut with = init.clone();
    let mut without = init;
    let (g_with, l_with) = loss_gradients(&mut with, &config, &frames, &truth, 0.01)?;
    let (g_without, l_without) = loss_gradients(&mut without, &config, &frames, &truth, 0.0)?;

    let mut worst = 0.0_f64;
    for (name, grad) in &g_with {
        let other = &g_without[name];
        for (a, b) in grad.data().iter().zip(other.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    let value_gap = (l_with.total - l_without.total - 0.01 * l_with.l_up).abs();
    worst = worst.max(value_gap);
    Ok(CheckReport::bounded("loss.gradient-equivalence", worst, 1e-12))
}

pub fn structural_checks(seed: u64) -> Result<Vec<CheckReport>> {
    let mut reports = channel_growth_checks(seed)?;
    reports.push(attention_normalization_check(seed)?);
    reports.push(residual_identity_check(10, seed)?);
    reports.push(loss_equivalence_check(seed)?);
    Ok(reports)
}

/// Everything: per-op gradients, structural invariants, and the end-to-end
/// reduced-network gradient check.
pub fn run_all(trials: usize, samples: usize, seed: u64) -> Result<Vec<CheckReport>> {
    let mut reports = op_gradient_checks(trials, seed)?;
    reports.extend(structural_checks(seed)?);
    reports.push(e2e_gradient_check(samples, seed)?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_suite_is_green() {
        let reports = op_gradient_checks(2, 77).unwrap();
        assert!(reports.len() >= 15);
        for r in &reports {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn structural_suite_is_green() {
        for r in structural_checks(78).unwrap() {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn e2e_check_passes_on_a_few_samples() {
        let report = e2e_gradient_check(6, 79).unwrap();
        assert!(report.passed, "{}", report.line());
    }

    #[test]
    fn injected_fault_is_caught() {
        let report = injected_fault_check(80);
        assert!(!report.passed, "the canary must fail: {}", report.line());
    }
}
