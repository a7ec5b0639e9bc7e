//! End-to-end tests of the `ddcn` binary: every subcommand, the exit-code
//! contract (0 ok, 1 usage, 2 data, 3 failed checks), and the on-disk
//! artifacts each command leaves behind.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ddcn_core::model::{init_params, ModelConfig};
use ddcn_core::ops::bicubic_resize;
use ddcn_core::train::load_checkpoint;
use ddcn_core::video::{load_frame, load_sequence, save_frame, save_sequence, FrameSequence};
use ddcn_core::Tensor;
use tempfile::tempdir;

fn ddcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddcn")).args(args).output().expect("spawn ddcn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn pattern_frame(h: usize, w: usize, k: usize) -> Tensor {
    let mut t = Tensor::zeros(&[3, h, w]);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = 0.5
                    + 0.3 * ((x as f64 + 2.0 * k as f64) * 0.7 + c as f64).sin()
                    + 0.15 * ((y as f64 - k as f64) * 0.45).cos();
                t.set(&[c, y, x], v.clamp(0.0, 1.0));
            }
        }
    }
    t
}

fn write_sequence(dir: &Path, count: usize, h: usize, w: usize) {
    let frames = (0..count).map(|k| pattern_frame(h, w, k)).collect();
    save_sequence(&FrameSequence::new(frames).unwrap(), dir).unwrap();
}

/// Small model and crop so a full train/infer cycle takes well under a second.
const TINY_CONFIG: &str = "\
# test harness settings
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

fn tiny_model() -> ModelConfig {
    ModelConfig {
        t: 1,
        base_channels: 8,
        inner_growth: 4,
        outer_growth: 8,
        inner_units: 2,
        outer_blocks_3d: 1,
        outer_blocks_2d: 1,
        scale: 4,
        attention_in_extraction: true,
        attention_in_fusion: true,
    }
}

/// Lays out HR data, a manifest and the tiny config file; returns their paths.
fn training_fixture(root: &Path, seq_frames: usize) -> (String, String) {
    let seq = root.join("seq_a");
    write_sequence(&seq, seq_frames, 24, 24);
    let manifest = root.join("manifest.txt");
    fs::write(&manifest, "seq_a\n").unwrap();
    let config = root.join("run.cfg");
    fs::write(&config, TINY_CONFIG).unwrap();
    (manifest.display().to_string(), config.display().to_string())
}

#[test]
fn degrade_writes_quarter_resolution_sequences() {
    let tmp = tempdir().unwrap();
    write_sequence(&tmp.path().join("hr/seq_a"), 3, 32, 32);
    write_sequence(&tmp.path().join("hr/seq_b"), 3, 32, 32);
    let manifest = tmp.path().join("hr/manifest.txt");
    fs::write(&manifest, "# two clips\nseq_a\nseq_b\n").unwrap();
    let out_root = tmp.path().join("lr");

    let out = ddcn(&[
        "degrade",
        "--in",
        manifest.to_str().unwrap(),
        "--out",
        out_root.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("32x32 -> 8x8"));

    for seq in ["seq_a", "seq_b"] {
        let lr = load_sequence(out_root.join(seq)).unwrap();
        assert_eq!(lr.len(), 3);
        assert_eq!(lr.reference().shape(), &[3, 8, 8]);
    }
}

#[test]
fn degrade_with_a_missing_manifest_is_a_data_error() {
    let tmp = tempdir().unwrap();
    let out = ddcn(&[
        "degrade",
        "--in",
        tmp.path().join("absent.txt").to_str().unwrap(),
        "--out",
        tmp.path().join("lr").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn zero_epoch_training_writes_the_seed_initialization() {
    let tmp = tempdir().unwrap();
    let (manifest, config) = training_fixture(tmp.path(), 3);
    let ckpt = tmp.path().join("model.ddck");

    let out = ddcn(&[
        "train", "--config", &config, "--data", &manifest, "--out",
        ckpt.to_str().unwrap(), "--epochs", "0", "--seed", "11",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("dataset: 1 sample(s)"));

    let loaded = load_checkpoint(&ckpt).unwrap();
    assert_eq!(loaded.epoch, 0);
    assert_eq!(loaded.adam.as_ref().map(|s| s.step()), Some(0));
    assert_eq!(loaded.config.t, 1);
    assert_eq!(loaded.config.base_channels, 8);

    let expected = init_params(&tiny_model(), 11).unwrap().quantized();
    for name in expected.names() {
        assert_eq!(
            loaded.params.get(&name).unwrap().data(),
            expected.get(&name).unwrap().data(),
            "parameter {name} differs from the seed initialization"
        );
    }

    let csv = fs::read_to_string(tmp.path().join("model.ddck.loss.csv")).unwrap();
    assert_eq!(csv, "epoch,l_ir,l_up,total,lr\n");
}

#[test]
fn fresh_checkpoint_inference_matches_bicubic_upsampling() {
    let tmp = tempdir().unwrap();
    let (manifest, config) = training_fixture(tmp.path(), 3);
    let ckpt = tmp.path().join("model.ddck");
    let out = ddcn(&[
        "train", "--config", &config, "--data", &manifest, "--out",
        ckpt.to_str().unwrap(), "--epochs", "0",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let lr_dir = tmp.path().join("lr_seq");
    write_sequence(&lr_dir, 3, 8, 8);
    let pred = tmp.path().join("pred.ppm");
    let out = ddcn(&[
        "infer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--in",
        lr_dir.to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("(8x8)"));
    assert!(stdout(&out).contains("(32x32)"));

    // Zero-initialized sub-pixel head: the network output is exactly the
    // bicubic upsampling of the reference frame, so the files match byte
    // for byte.
    let reference = load_sequence(&lr_dir).unwrap().reference().clone();
    let expected = bicubic_resize(&reference, 4.0).unwrap();
    let expected_path = tmp.path().join("expected.ppm");
    save_frame(&expected, &expected_path).unwrap();
    assert_eq!(fs::read(&pred).unwrap(), fs::read(&expected_path).unwrap());
}

#[test]
fn inference_rejects_a_mismatched_window_length() {
    let tmp = tempdir().unwrap();
    let (manifest, config) = training_fixture(tmp.path(), 3);
    let ckpt = tmp.path().join("model.ddck");
    let out = ddcn(&[
        "train", "--config", &config, "--data", &manifest, "--out",
        ckpt.to_str().unwrap(), "--epochs", "0",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let lr_dir = tmp.path().join("five");
    write_sequence(&lr_dir, 5, 8, 8);
    let out = ddcn(&[
        "infer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--in",
        lr_dir.to_str().unwrap(),
        "--out",
        tmp.path().join("pred.ppm").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("expects 2T+1 = 3"), "stderr: {}", stderr(&out));
}

#[test]
fn eval_scores_identical_frames_at_the_caps() {
    let tmp = tempdir().unwrap();
    let truth_dir = tmp.path().join("truth");
    let pred_dir = tmp.path().join("pred");
    fs::create_dir_all(&truth_dir).unwrap();
    fs::create_dir_all(&pred_dir).unwrap();
    for k in 0..2 {
        let frame = pattern_frame(16, 16, k);
        save_frame(&frame, truth_dir.join(format!("frame_{k:04}.ppm"))).unwrap();
        save_frame(&frame, pred_dir.join(format!("frame_{k:04}.ppm"))).unwrap();
    }

    let csv_path = tmp.path().join("scores.csv");
    let out = ddcn(&[
        "eval",
        "--pred",
        pred_dir.to_str().unwrap(),
        "--truth",
        truth_dir.to_str().unwrap(),
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let csv = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "sequence,frame,psnr_db,ssim");
    assert_eq!(lines[1], "pred,frame_0000,100,1");
    assert_eq!(lines[2], "pred,frame_0001,100,1");
    assert_eq!(lines[3], "mean,all,100,1");
    assert_eq!(lines.len(), 4);
}

#[test]
fn eval_without_an_output_path_prints_the_report() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("frames");
    fs::create_dir_all(&dir).unwrap();
    save_frame(&pattern_frame(16, 16, 0), dir.join("f.ppm")).unwrap();
    let out = ddcn(&[
        "eval",
        "--pred",
        dir.to_str().unwrap(),
        "--truth",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("sequence,frame,psnr_db,ssim\n"));
    assert!(stdout(&out).contains("frames,f,100,1"));
}

#[test]
fn eval_rejects_mismatched_frame_counts() {
    let tmp = tempdir().unwrap();
    let truth_dir = tmp.path().join("truth");
    let pred_dir = tmp.path().join("pred");
    fs::create_dir_all(&truth_dir).unwrap();
    fs::create_dir_all(&pred_dir).unwrap();
    save_frame(&pattern_frame(16, 16, 0), truth_dir.join("a.ppm")).unwrap();
    save_frame(&pattern_frame(16, 16, 1), truth_dir.join("b.ppm")).unwrap();
    save_frame(&pattern_frame(16, 16, 0), pred_dir.join("a.ppm")).unwrap();

    let out = ddcn(&[
        "eval",
        "--pred",
        pred_dir.to_str().unwrap(),
        "--truth",
        truth_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("1 prediction frame(s) vs 2 truth frame(s)"));
}

#[test]
fn gradcheck_passes_and_an_injected_fault_trips_it() {
    let out = ddcn(&["gradcheck", "--trials", "1", "--samples", "2", "--seed", "4"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("all 18 checks passed"));

    let out = ddcn(&[
        "gradcheck", "--trials", "1", "--samples", "2", "--seed", "4", "--inject-fault",
    ]);
    assert_eq!(code(&out), 3);
    let text = stdout(&out);
    assert!(text.contains("FAIL  injected-fault-canary"), "stdout: {text}");
    assert!(stderr(&out).contains("1 check(s) failed"));
}

#[test]
fn selftest_reports_every_check() {
    let out = ddcn(&["selftest", "--seed", "6"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("all 25 checks passed"), "stdout: {text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 25);
}

#[test]
fn usage_errors_exit_with_code_one() {
    let out = ddcn(&["no-such-command"]);
    assert_eq!(code(&out), 1);

    let tmp = tempdir().unwrap();
    let (manifest, config) = training_fixture(tmp.path(), 3);
    let out = ddcn(&[
        "train", "--config", &config, "--data", &manifest, "--out",
        tmp.path().join("m.ddck").to_str().unwrap(), "--frames", "4",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--frames must be 3, 5 or 7"));

    let out = ddcn(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for sub in ["degrade", "train", "infer", "eval", "gradcheck", "selftest"] {
        assert!(text.contains(sub), "help is missing {sub}");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempdir().unwrap();
    let (manifest, _) = training_fixture(tmp.path(), 3);
    let config = tmp.path().join("bad.cfg");
    fs::write(&config, "frames = 3\nbogus_key = 1\n").unwrap();
    let out = ddcn(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--data",
        &manifest,
        "--out",
        tmp.path().join("m.ddck").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus_key"), "stderr: {}", stderr(&out));
}

#[test]
fn training_rejects_frames_smaller_than_the_crop() {
    let tmp = tempdir().unwrap();
    let (manifest, _) = training_fixture(tmp.path(), 5); // 24x24 frames
    let out = ddcn(&[
        "train",
        "--data",
        &manifest,
        "--out",
        tmp.path().join("m.ddck").to_str().unwrap(),
        "--epochs",
        "0",
    ]);
    // Default config crops 256x256: the 24x24 fixture cannot supply it.
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("smaller than crop 256"), "stderr: {}", stderr(&out));
}
