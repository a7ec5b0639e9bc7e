//! Shipping gate. One test per release criterion; each prints a single
//! PASS/FAIL line with the measured value and the pinned tolerance. Run
//!
//!   cargo test -p ddcn-cli --test acceptance -- --nocapture --test-threads=1
//!
//! to see the lines in order. Every tolerance lives here, not in the library,
//! so loosening one is visible in review.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use ddcn_core::metrics::{psnr_y, ssim_y, SSIM_K1, SSIM_K2, SSIM_RANGE, SSIM_SIGMA, SSIM_WINDOW};
use ddcn_core::model::{forward, init_params, manifest, ModelConfig};
use ddcn_core::ops::{bicubic_resize, conv2d, ConvSpec};
use ddcn_core::parallel;
use ddcn_core::rng::SplitMix64;
use ddcn_core::selftest::{self, CheckReport};
use ddcn_core::train::{adam_step, load_checkpoint, loss_gradients, AdamState, TrainConfig};
use ddcn_core::video::{
    crop_pair, degrade, rgb_to_y, save_sequence, DegradationConfig, FrameSequence,
};
use ddcn_core::Tensor;
use tempfile::tempdir;

const SEED: u64 = 0x5eed_2026;

fn criterion(name: &str, passed: bool, detail: &str) {
    println!("{}  {name:<28} {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "{name}: {detail}");
}

/// Collapse a report list: first failure wins, otherwise the given summary.
fn roll_up(reports: &[CheckReport], ok_detail: String) -> (bool, String) {
    match reports.iter().find(|r| !r.passed) {
        Some(bad) => (false, format!("{}: {}", bad.name, bad.detail)),
        None => (true, ok_detail),
    }
}

fn rand_frame(h: usize, w: usize, rng: &mut SplitMix64) -> Tensor {
    let data = (0..3 * h * w).map(|_| rng.next_f64()).collect();
    Tensor::from_vec(vec![3, h, w], data).unwrap()
}

#[test]
fn a01_operator_gradient_suite() {
    let start = Instant::now();
    let reports = selftest::op_gradient_checks(5, SEED).unwrap();
    let elapsed = start.elapsed();
    let (ok, detail) = roll_up(
        &reports,
        format!("{} kernel checks x 5 inputs, rel err < 1e-4, {elapsed:.2?}", reports.len()),
    );
    criterion("operator gradients", ok && elapsed < Duration::from_secs(60), &detail);
}

#[test]
fn a02_end_to_end_gradient() {
    let start = Instant::now();
    let report = selftest::e2e_gradient_check(50, SEED).unwrap();
    let elapsed = start.elapsed();
    criterion(
        "end-to-end gradient",
        report.passed && elapsed < Duration::from_secs(300),
        &format!("50 sampled parameters, {}, {elapsed:.2?}", report.detail),
    );
}

#[test]
fn a03_channel_growth() {
    let reports = selftest::channel_growth_checks(SEED).unwrap();
    let default_detail = reports[0].detail.clone();
    let (ok, detail) =
        roll_up(&reports, format!("{default_detail}; {} random configs agree", reports.len() - 1));
    criterion("channel growth", ok, &detail);
}

#[test]
fn a04_attention_normalization() {
    let report = selftest::attention_normalization_check(SEED).unwrap();
    criterion("attention normalization", report.passed, &report.detail);
}

#[test]
fn a05_residual_identity() {
    let report = selftest::residual_identity_check(10, SEED).unwrap();
    criterion("residual identity", report.passed, &format!("10 fresh models, {}", report.detail));
}

#[test]
fn a06_loss_gradient_equivalence() {
    let report = selftest::loss_equivalence_check(SEED).unwrap();
    criterion("loss equivalence", report.passed, &report.detail);
}

/// Smooth two-sinusoid pattern; the translation makes the five frames
/// genuinely different views of the same signal.
fn toy_pattern(h: usize, w: usize, shift_y: f64, shift_x: f64) -> Tensor {
    let tau = std::f64::consts::TAU;
    let mut t = Tensor::zeros(&[3, h, w]);
    for c in 0..3 {
        let phase = c as f64 * 2.1;
        for y in 0..h {
            for x in 0..w {
                let yy = y as f64 + shift_y;
                let xx = x as f64 + shift_x;
                let v = 0.5
                    + 0.18 * ((tau / 11.0) * (xx + 0.6 * yy) + phase).sin()
                    + 0.12 * ((tau / 17.0) * (yy - 0.8 * xx) - phase).cos();
                t.set(&[c, y, x], v.clamp(0.0, 1.0));
            }
        }
    }
    t
}

#[test]
fn a07_single_sequence_overfit() {
    let start = Instant::now();
    let hr_frames: Vec<Tensor> = (0..5)
        .map(|k| {
            let s = k as f64 - 2.0;
            toy_pattern(96, 96, 1.5 * s, 2.0 * s)
        })
        .collect();
    let hr = FrameSequence::new(hr_frames).unwrap();
    let lr = degrade(&hr, &DegradationConfig { sigma: 1.6, scale: 4, crop: 96 }).unwrap();
    let truth = hr.reference().clone();
    let baseline = psnr_y(&bicubic_resize(lr.reference(), 4.0).unwrap(), &truth).unwrap();

    let model = ModelConfig {
        t: 2,
        base_channels: 16,
        inner_growth: 8,
        outer_growth: 16,
        inner_units: 4,
        outer_blocks_3d: 2,
        outer_blocks_2d: 2,
        scale: 4,
        attention_in_extraction: true,
        attention_in_fusion: true,
    };
    let mut params = init_params(&model, SEED).unwrap();
    let mut state = AdamState::new(&params);
    let train_config = TrainConfig::default();

    let target = 35.0_f64.max(baseline + 3.0);
    let mut psnr = f64::NEG_INFINITY;
    let mut steps = 0usize;
    while steps < 1000 {
        let (grads, _) = loss_gradients(&mut params, &model, &lr, &truth, 0.01).unwrap();
        adam_step(&mut params, &grads, &mut state, 1e-3, &train_config).unwrap();
        steps += 1;
        if steps % 5 == 0 {
            psnr = psnr_y(&forward(&lr, &params, &model).unwrap(), &truth).unwrap();
            if psnr >= target {
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = psnr >= 35.0 && psnr >= baseline + 3.0 && elapsed < Duration::from_secs(900);
    criterion(
        "single-sequence overfit",
        ok,
        &format!(
            "{psnr:.2} dB (need >= 35 and >= bicubic {baseline:.2} + 3) after {steps} of 1000 Adam steps, {elapsed:.1?}"
        ),
    );
}

#[test]
fn a08_degradation_pipeline() {
    let mut rng = SplitMix64::new(SEED ^ 8);
    let hr_frames: Vec<Tensor> = (0..3).map(|_| rand_frame(264, 264, &mut rng)).collect();
    let hr = FrameSequence::new(hr_frames).unwrap();
    let config = DegradationConfig { sigma: 1.6, scale: 4, crop: 256 };
    let (lr, truth) = crop_pair(&hr, 4, 8, &config).unwrap();
    let shapes_ok = lr.len() == 3
        && lr.reference().shape() == [3, 64, 64]
        && truth.shape() == [3, 256, 256];

    // Normalized blur plus pure decimation keeps a constant image constant.
    let flat = FrameSequence::new(vec![Tensor::full(&[3, 64, 64], 0.42); 3]).unwrap();
    let lr_flat =
        degrade(&flat, &DegradationConfig { sigma: 1.6, scale: 4, crop: 64 }).unwrap();
    let drift = lr_flat
        .frames()
        .iter()
        .flat_map(|f| f.data().iter())
        .map(|v| (v - 0.42).abs())
        .fold(0.0, f64::max);

    criterion(
        "degradation pipeline",
        shapes_ok && drift < 1e-12,
        &format!(
            "256x256 crop -> {}x{} LR, constant-image drift {drift:.1e} (tolerance 1e-12)",
            lr.width(),
            lr.height()
        ),
    );
}

/// Direct per-window SSIM with explicit weighted central moments; no shared
/// code with the library path beyond the published constants.
fn ssim_window_oracle(a: &Tensor, b: &Tensor) -> f64 {
    let ya = rgb_to_y(a).unwrap();
    let yb = rgb_to_y(b).unwrap();
    let (h, w) = (ya.shape()[1], ya.shape()[2]);
    let mut taps = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut norm = 0.0;
    for (i, t) in taps.iter_mut().enumerate() {
        *t = (-((i as f64 - center) / SSIM_SIGMA).powi(2) / 2.0).exp();
        norm += *t;
    }
    for t in &mut taps {
        *t /= norm;
    }
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for top in 0..=h - SSIM_WINDOW {
        for left in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let weight = taps[i] * taps[j];
                    ma += weight * ya.get(&[0, top + i, left + j]);
                    mb += weight * yb.get(&[0, top + i, left + j]);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let weight = taps[i] * taps[j];
                    let da = ya.get(&[0, top + i, left + j]) - ma;
                    let db = yb.get(&[0, top + i, left + j]) - mb;
                    va += weight * da * da;
                    vb += weight * db * db;
                    cov += weight * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn a09_metric_oracles() {
    // The luma coefficients sum to 219, so a flat RGB offset of dy/219
    // shifts Y by exactly dy gray levels; PSNR then has a closed form.
    let offset_pair = |dy: f64| {
        (Tensor::full(&[3, 8, 8], 0.2), Tensor::full(&[3, 8, 8], 0.2 + dy / 219.0))
    };
    let (a, b) = offset_pair(25.5);
    let gap20 = (psnr_y(&a, &b).unwrap() - 20.0).abs();
    let (a, b) = offset_pair(2.55);
    let gap40 = (psnr_y(&a, &b).unwrap() - 40.0).abs();

    let mut rng = SplitMix64::new(SEED ^ 9);
    let frame = rand_frame(16, 16, &mut rng);
    let identity = ssim_y(&frame, &frame).unwrap();

    let mut oracle_gap = 0.0_f64;
    for _ in 0..3 {
        let a = rand_frame(16, 16, &mut rng);
        let b = rand_frame(16, 16, &mut rng);
        oracle_gap = oracle_gap.max((ssim_y(&a, &b).unwrap() - ssim_window_oracle(&a, &b)).abs());
    }

    let ok = gap20 < 1e-9 && gap40 < 1e-9 && identity == 1.0 && oracle_gap < 1e-10;
    criterion(
        "metric oracles",
        ok,
        &format!(
            "psnr off by {gap20:.1e}/{gap40:.1e} at 20/40 dB, ssim(a,a)={identity}, window oracle gap {oracle_gap:.1e}"
        ),
    );
}

fn ddcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddcn")).args(args).output().expect("spawn ddcn")
}

fn expect_ok(out: &Output) {
    assert_eq!(
        out.status.code(),
        Some(0),
        "ddcn failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_training_data(root: &Path, frames: usize) -> String {
    let seq = root.join("seq_a");
    let frames: Vec<Tensor> = (0..frames)
        .map(|k| {
            let s = k as f64;
            toy_pattern(24, 24, 0.5 * s, 1.0 * s)
        })
        .collect();
    save_sequence(&FrameSequence::new(frames).unwrap(), &seq).unwrap();
    let manifest_path = root.join("manifest.txt");
    fs::write(&manifest_path, "seq_a\n").unwrap();
    manifest_path.display().to_string()
}

const SMALL_RUN: &str = "\
frames = 3
base_channels = 8
inner_growth = 4
outer_growth = 8
inner_units = 2
outer_blocks_3d = 1
outer_blocks_2d = 1
crop = 16
batch_size = 2
drop_after = 2
post_drop_epochs = 0
lr_initial = 1e-3
";

#[test]
fn a10_determinism() {
    let tmp = tempdir().unwrap();
    let manifest_path = write_training_data(tmp.path(), 3);
    let config_path = tmp.path().join("run.cfg");
    fs::write(&config_path, SMALL_RUN).unwrap();

    let run = |tag: &str| {
        let ckpt = tmp.path().join(format!("{tag}.ddck"));
        let csv = tmp.path().join(format!("{tag}.csv"));
        let out = ddcn(&[
            "--threads", "1", "train",
            "--config", config_path.to_str().unwrap(),
            "--data", &manifest_path,
            "--out", ckpt.to_str().unwrap(),
            "--loss-csv", csv.to_str().unwrap(),
            "--seed", "9",
        ]);
        expect_ok(&out);
        (fs::read(&ckpt).unwrap(), fs::read(&csv).unwrap())
    };
    let (ckpt1, csv1) = run("first");
    let (ckpt2, csv2) = run("second");
    let repeats_match = ckpt1 == ckpt2 && csv1 == csv2;

    // Worker count must not change a single bit of a convolution.
    let mut rng = SplitMix64::new(SEED ^ 10);
    let input =
        Tensor::from_vec(vec![6, 24, 24], (0..6 * 24 * 24).map(|_| rng.next_f64()).collect())
            .unwrap();
    let weight = Tensor::from_vec(
        vec![4, 6, 3, 3],
        (0..4 * 6 * 9).map(|_| rng.next_uniform(0.5)).collect(),
    )
    .unwrap();
    let bias =
        Tensor::from_vec(vec![4], (0..4).map(|_| rng.next_uniform(0.5)).collect()).unwrap();
    let spec = ConvSpec::same2d(3, 3).unwrap();
    parallel::set_threads(1);
    let single = conv2d(&input, &weight, &bias, &spec).unwrap();
    let mut thread_gap = 0.0_f64;
    for workers in [2, 3, 8] {
        parallel::set_threads(workers);
        let multi = conv2d(&input, &weight, &bias, &spec).unwrap();
        let gap = single
            .data()
            .iter()
            .zip(multi.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        thread_gap = thread_gap.max(gap);
    }
    parallel::set_threads(1);

    criterion(
        "determinism",
        repeats_match && thread_gap < 1e-10,
        &format!(
            "checkpoint {} / loss csv {} across reruns, thread-count gap {thread_gap:.1e}",
            if ckpt1 == ckpt2 { "byte-identical" } else { "DIFFERS" },
            if csv1 == csv2 { "byte-identical" } else { "DIFFERS" },
        ),
    );
}

#[test]
fn a11_ablation_plumbing() {
    let tmp = tempdir().unwrap();
    let manifest_path = write_training_data(tmp.path(), 7);
    let config_path = tmp.path().join("run.cfg");
    fs::write(&config_path, SMALL_RUN).unwrap();

    let run = |tag: &str, extra: &[&str]| {
        let ckpt = tmp.path().join(format!("{tag}.ddck"));
        let csv = tmp.path().join(format!("{tag}.csv"));
        let ckpt_arg = ckpt.display().to_string();
        let csv_arg = csv.display().to_string();
        let mut args: Vec<&str> = vec![
            "train",
            "--config", config_path.to_str().unwrap(),
            "--data", &manifest_path,
            "--out", &ckpt_arg,
            "--loss-csv", &csv_arg,
            "--epochs", "1",
            "--seed", "3",
        ];
        args.extend_from_slice(extra);
        expect_ok(&ddcn(&args));
        (load_checkpoint(&ckpt).unwrap(), fs::read_to_string(&csv).unwrap())
    };

    let (base3, csv3) = run("w3", &["--frames", "3"]);
    let (base5, _) = run("w5", &["--frames", "5"]);
    let (base7, _) = run("w7", &["--frames", "7"]);
    let (plain, _) = run("noattn", &["--frames", "3", "--no-attn-extract", "--no-attn-fusion"]);
    let (_, csv_ir) = run("ironly", &["--frames", "3", "--loss", "ir-only"]);

    // Window length lands in T and, through the fusion depth, in the width
    // of the collapse convolution; nothing else moves.
    let collapse_in = |ckpt: &ddcn_core::train::Checkpoint| {
        ckpt.params.get("fuse.collapse.weight").unwrap().shape()[1]
    };
    let windows_ok = [(&base3, 1usize, 40usize), (&base5, 2, 56), (&base7, 3, 72)]
        .iter()
        .all(|(ckpt, t, width)| ckpt.config.t == *t && collapse_in(ckpt) == *width);

    // Checkpoints carry exactly the parameter set their config advertises.
    // Stored names come back sorted, so sort the manifest side too.
    let names = |config: &ModelConfig| -> Vec<String> {
        let mut names: Vec<String> =
            manifest(config).unwrap().into_iter().map(|e| e.name).collect();
        names.sort();
        names
    };
    let stored: Vec<String> = base3.params.names().cloned().collect();
    let manifest_ok = stored == names(&base3.config) && plain.config != base3.config;

    // Attention toggles remove the three projection tensors and nothing else.
    let plain_stored: Vec<String> = plain.params.names().cloned().collect();
    let dropped: Vec<&String> =
        stored.iter().filter(|n| !plain_stored.contains(n)).collect();
    let attn_ok = dropped
        == vec!["fuse3d.block1.attn.weight", "post.attn.weight", "pre.attn.weight"]
        && plain_stored.iter().all(|n| stored.contains(n));

    // Composite loss reports total = l_ir + 0.01 * l_up; the ablation drops
    // the weighted term but still reports l_up.
    let row = |csv: &str| -> Vec<f64> {
        csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect()
    };
    let full = row(&csv3);
    let ir_only = row(&csv_ir);
    let loss_ok = (full[3] - (full[1] + 0.01 * full[2])).abs() < 1e-12
        && full[2] > 0.0
        && ir_only[3] == ir_only[1]
        && ir_only[1] == full[1];

    criterion(
        "ablation plumbing",
        windows_ok && manifest_ok && attn_ok && loss_ok,
        &format!(
            "windows 3/5/7 -> collapse widths {}/{}/{}; attention off drops {} tensors; ir-only total==l_ir",
            collapse_in(&base3),
            collapse_in(&base5),
            collapse_in(&base7),
            dropped.len(),
        ),
    );
}
