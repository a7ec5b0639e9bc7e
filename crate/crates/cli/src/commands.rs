//! Command implementations. Each returns `Ok(())` or a `CliError` whose
//! exit code distinguishes usage problems, data/model errors, and failed
//! verification checks.

use std::path::{Path, PathBuf};

use ddcn_core::model::forward;
use ddcn_core::selftest;
use ddcn_core::train::{load_checkpoint, save_checkpoint, train};
use ddcn_core::video::{
    self, assemble_dataset, load_frame, load_manifest, load_sequence, save_frame, save_sequence,
    DegradationConfig,
};
use ddcn_core::{metrics, Error};

use crate::args;
use crate::config::RunConfig;
use crate::report::{loss_csv, metrics_csv, MetricRow};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
    ChecksFailed(usize),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::ChecksFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::ChecksFailed(n) => write!(f, "{n} check(s) failed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        CliError::Data(e)
    }
}

pub fn cmd_degrade(args: &args::DegradeArgs) -> Result<(), CliError> {
    let dirs = load_manifest(&args.input)?;
    // The training crop is irrelevant here; keep it aligned so the config
    // validates for any scale.
    let config =
        DegradationConfig { sigma: args.sigma, scale: args.scale, crop: 64 * args.scale };
    std::fs::create_dir_all(&args.output)
        .map_err(|e| Error::io(args.output.display().to_string(), e))?;
    for dir in &dirs {
        let name = dir
            .file_name()
            .ok_or_else(|| Error::invalid("degrade", format!("{}: no directory name", dir.display())))?;
        let hr = load_sequence(dir)?;
        let lr = video::degrade(&hr, &config)?;
        let out_dir = args.output.join(name);
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
        save_sequence(&lr, &out_dir)?;
        println!(
            "{} -> {}: {} frames, {}x{} -> {}x{}",
            dir.display(),
            out_dir.display(),
            lr.len(),
            hr.width(),
            hr.height(),
            lr.width(),
            lr.height()
        );
    }
    Ok(())
}

fn apply_train_overrides(run: &mut RunConfig, args: &args::TrainArgs) -> Result<(), CliError> {
    if let Some(frames) = args.frames {
        if ![3, 5, 7].contains(&frames) {
            return Err(CliError::Usage(format!("--frames must be 3, 5 or 7, got {frames}")));
        }
        run.set_frames(frames)?;
    }
    if args.no_attn_extract {
        run.model.attention_in_extraction = false;
    }
    if args.no_attn_fusion {
        run.model.attention_in_fusion = false;
    }
    if let Some(choice) = args.loss {
        run.train.use_composite_loss = matches!(choice, args::LossChoice::Composite);
    }
    if let Some(seed) = args.seed {
        run.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        if epochs <= run.train.drop_after {
            run.train.drop_after = epochs;
            run.train.post_drop_epochs = 0;
        } else {
            run.train.post_drop_epochs = epochs - run.train.drop_after;
        }
    }
    run.validate()?;
    Ok(())
}

pub fn cmd_train(args: &args::TrainArgs) -> Result<(), CliError> {
    let mut run = match &args.config {
        Some(path) => RunConfig::parse_file(path)?,
        None => RunConfig::default(),
    };
    apply_train_overrides(&mut run, args)?;

    let dirs = load_manifest(&args.data)?;
    let dataset = assemble_dataset(&dirs, run.model.frames(), &run.degrade, run.train.seed)?;
    println!(
        "dataset: {} sample(s), window {} frames, LR {}x{}",
        dataset.len(),
        run.model.frames(),
        dataset[0].0.width(),
        dataset[0].0.height()
    );

    let outcome = train(&dataset, &run.model, &run.train, &mut |s| {
        println!(
            "epoch {:>4}  l_ir {:.6}  l_up {:.6}  total {:.6}  lr {:.1e}",
            s.epoch, s.l_ir, s.l_up, s.total, s.lr
        );
    })?;

    save_checkpoint(
        &outcome.params,
        &run.model,
        Some(&outcome.state),
        run.train.epochs() as u32,
        &args.output,
    )?;
    println!("checkpoint: {}", args.output.display());

    let csv_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.loss.csv", args.output.display())));
    std::fs::write(&csv_path, loss_csv(&outcome.history))
        .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    println!("loss history: {}", csv_path.display());
    Ok(())
}

pub fn cmd_infer(args: &args::InferArgs) -> Result<(), CliError> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let frames = load_sequence(&args.input)?;
    let expected = checkpoint.config.frames();
    if frames.len() != expected {
        return Err(CliError::Data(Error::invalid(
            "infer",
            format!(
                "{} holds {} frames; this checkpoint expects 2T+1 = {expected}",
                args.input.display(),
                frames.len()
            ),
        )));
    }
    let output = forward(&frames, &checkpoint.params, &checkpoint.config)?;
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    save_frame(&output, &args.output)?;
    println!(
        "{} ({}x{}) -> {} ({}x{})",
        args.input.display(),
        frames.width(),
        frames.height(),
        args.output.display(),
        output.shape()[2],
        output.shape()[1]
    );
    Ok(())
}

fn ppm_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let display = dir.display().to_string();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(&display, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "ppm"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid("eval", format!("{display}: no .ppm files")));
    }
    Ok(files)
}

pub fn cmd_eval(args: &args::EvalArgs) -> Result<(), CliError> {
    let pred_files = ppm_files(&args.pred)?;
    let truth_files = ppm_files(&args.truth)?;
    if pred_files.len() != truth_files.len() {
        return Err(CliError::Data(Error::invalid(
            "eval",
            format!(
                "{} prediction frame(s) vs {} truth frame(s)",
                pred_files.len(),
                truth_files.len()
            ),
        )));
    }
    let sequence = args
        .pred
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.pred.display().to_string());

    let mut rows = Vec::with_capacity(pred_files.len());
    for (p, t) in pred_files.iter().zip(&truth_files) {
        let pred = load_frame(p)?;
        let truth = load_frame(t)?;
        let report = metrics::score_pair(&pred, &truth, args.crop_border)?;
        let frame = p.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push(MetricRow { sequence: sequence.clone(), frame, report });
    }
    let csv = metrics_csv(&rows);
    match &args.output {
        Some(path) => {
            std::fs::write(path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
            println!("report: {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn finish_checks(reports: &[selftest::CheckReport]) -> Result<(), CliError> {
    for report in reports {
        println!("{}", report.line());
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        println!("all {} checks passed", reports.len());
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}

pub fn cmd_gradcheck(args: &args::GradcheckArgs) -> Result<(), CliError> {
    let mut reports = selftest::op_gradient_checks(args.trials, args.seed)?;
    reports.push(selftest::e2e_gradient_check(args.samples, args.seed)?);
    if args.inject_fault {
        reports.push(selftest::injected_fault_check(args.seed));
    }
    finish_checks(&reports)
}

pub fn cmd_selftest(args: &args::SelftestArgs) -> Result<(), CliError> {
    let reports = selftest::run_all(3, 25, args.seed)?;
    finish_checks(&reports)
}
