//! The `mlrn` command-line driver:
//! `mlrn <degrade|train|eval|infer|gradcheck|ablate> [--config FILE]
//! [--set key=value]... [positionals]`.
//!
//! Exit codes: 0 success, 1 quality/assertion failure (gradcheck over
//! threshold, partial degrade, missing eval counterparts), 2 usage/config/
//! I-O failure. Commands validate fully before side effects.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{ConfigError, RunConfig};
use crate::image::{
    load_image, load_or_compute_mean, png_files, save_image, DatasetSpec, ImagePair, Split,
};
use crate::metrics::{ChannelMode, DirEvaluation, ImageScore, MetricReport};
use crate::model::{layer_schedule, parameter_count, MlrnConfig, Model};
use crate::tensor::{grad_check, Shape, Tensor, TensorError};
use crate::training::{infer_image, train, TrainReport};

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn quality(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::usage(e.to_string())
    }
}

macro_rules! usage_from {
    ($($ty:ty),+) => {$(
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Failure {
                Failure::usage(e.to_string())
            }
        }
    )+};
}
usage_from!(
    crate::image::ImageError,
    crate::metrics::MetricError,
    crate::model::ModelError,
    crate::training::TrainError,
    crate::tensor::TensorError,
    std::io::Error
);

#[derive(Parser)]
#[command(name = "mlrn", version, about = "Single-image super-resolution toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bicubic-downsample a directory of HR PNGs into LR_x{r} sets.
    Degrade {
        /// Directory of HR PNGs.
        hr_dir: PathBuf,
        /// Output directory (default ./runs/<timestamp>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated scale factors.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3, 4])]
        scales: Vec<usize>,
    },
    /// Train a model per the run config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Flat dotted-key overrides, e.g. --set train.epochs=2.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the bicubic baseline) on a dataset.
    Eval {
        /// Checkpoint path; omit with --baseline bicubic.
        checkpoint: Option<PathBuf>,
        /// "bicubic": score plain bicubic upscaling instead of a model.
        #[arg(long)]
        baseline: Option<String>,
        /// Dataset root (a directory of PNGs, or one containing HR/).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scale: usize,
        /// Metric channel mode: y or rgb (default y).
        #[arg(long)]
        mode: Option<String>,
        /// Border shave in pixels (default: the scale factor).
        #[arg(long)]
        shave: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Super-resolve one PNG with a trained checkpoint.
    Infer {
        checkpoint: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Verify analytic gradients of every primitive and a tiny end-to-end
    /// model against central finite differences.
    Gradcheck {
        /// Maximum allowed relative error.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        epsilon: f64,
    },
    /// Train the four GFF/RSC variants with shared seeds and emit the
    /// comparison table plus per-epoch curves.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Degrade { hr_dir, out, scales } => {
            cmd_degrade(&hr_dir, &out_dir_or_default(out), &scales)
        }
        Command::Train { config, set, out } => {
            cmd_train(config.as_deref(), &set, &out_dir_or_default(out))
        }
        Command::Eval {
            checkpoint,
            baseline,
            data,
            scale,
            mode,
            shave,
            out,
        } => cmd_eval(
            checkpoint.as_deref(),
            baseline.as_deref(),
            &data,
            scale,
            mode.as_deref(),
            shave,
            &out_dir_or_default(out),
        ),
        Command::Infer {
            checkpoint,
            input,
            output,
        } => cmd_infer(&checkpoint, &input, &output),
        Command::Gradcheck { threshold, epsilon } => cmd_gradcheck(threshold, epsilon),
        Command::Ablate { config, set, out } => {
            cmd_ablate(config.as_deref(), &set, &out_dir_or_default(out))
        }
    };
    match result {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.code
        }
    }
}

fn out_dir_or_default(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| {
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        PathBuf::from("runs").join(format!("run-{stamp}"))
    })
}

/// Dataset layout resolution: `<root>/HR` when present, otherwise the
/// directory itself; LR_x{r} beside HR is picked up automatically.
fn resolve_dataset(data: &Path, scale: usize) -> (PathBuf, DatasetSpec) {
    let (root, hr_dir) = if data.join("HR").is_dir() {
        (data.to_path_buf(), data.join("HR"))
    } else {
        (data.to_path_buf(), data.to_path_buf())
    };
    let lr_dir = root.join(format!("LR_x{scale}"));
    let spec = DatasetSpec {
        hr_dir,
        lr_dir: lr_dir.is_dir().then_some(lr_dir),
        scale,
        split: Split::Train,
    };
    (root, spec)
}

fn cmd_degrade(hr_dir: &Path, out_dir: &Path, scales: &[usize]) -> Result<(), Failure> {
    for &scale in scales {
        if !matches!(scale, 2 | 3 | 4) {
            return Err(Failure::usage(format!(
                "unsupported scale {scale}: expected 2, 3, or 4"
            )));
        }
    }
    let files = png_files(hr_dir)?;
    if files.is_empty() {
        return Err(Failure::usage(format!(
            "no PNG files in {}",
            hr_dir.display()
        )));
    }

    std::fs::create_dir_all(out_dir)?;
    let mut failures: Vec<String> = Vec::new();
    for &scale in scales {
        let lr_dir = out_dir.join(format!("LR_x{scale}"));
        std::fs::create_dir_all(&lr_dir)?;
        let mut written = 0usize;
        for (stem, path) in &files {
            let result = load_image(path).and_then(|hr| {
                let pair = crate::image::degrade(&hr, scale)?;
                if pair.hr.width() != hr.width() || pair.hr.height() != hr.height() {
                    println!(
                        "{stem}: {}x{} cropped to {}x{} for x{scale}, LR {}x{}",
                        hr.width(),
                        hr.height(),
                        pair.hr.width(),
                        pair.hr.height(),
                        pair.lr.width(),
                        pair.lr.height()
                    );
                }
                save_image(&pair.lr, &lr_dir.join(format!("{stem}.png")))
            });
            match result {
                Ok(()) => written += 1,
                Err(e) => failures.push(format!("{stem} (x{scale}): {e}")),
            }
        }
        println!("x{scale}: {written} LR images written to {}", lr_dir.display());
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed: {f}");
        }
        return Err(Failure::quality(format!(
            "{} file(s) failed to degrade",
            failures.len()
        )));
    }
    Ok(())
}

/// Ingest train/val datasets and the cached mean for a run config.
fn prepare_data(
    config: &RunConfig,
) -> Result<(Vec<ImagePair>, Vec<ImagePair>, Vec<f64>), Failure> {
    let hr = config.require_hr_dir()?;
    let (root, mut spec) = resolve_dataset(&hr, config.model.scale);
    if let Some(lr) = &config.data.lr_dir {
        spec.lr_dir = Some(PathBuf::from(lr));
    }
    let train_pairs = spec.ingest()?;
    let mean = load_or_compute_mean(&spec, &root)?;

    let val_pairs = match &config.data.val_hr_dir {
        Some(dir) => {
            let (_, val_spec) = resolve_dataset(Path::new(dir), config.model.scale);
            let mut val_spec = val_spec;
            val_spec.split = Split::Val;
            val_spec.ingest()?
        }
        // Default validation split: the last 10 ingested training images.
        None => {
            let n = train_pairs.len();
            train_pairs[n.saturating_sub(10)..].to_vec()
        }
    };
    Ok((train_pairs, val_pairs, mean))
}

fn run_training(
    config: &RunConfig,
    out_dir: &Path,
) -> Result<(Model, TrainReport, Vec<f64>), Failure> {
    config.model.validate()?;
    config.train.validate()?;
    let (train_pairs, val_pairs, mean) = prepare_data(config)?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.json"), config.to_json_pretty())?;

    let model = Model::build(config.model, config.train.seed)?;
    let report = train(
        &model,
        &train_pairs,
        &val_pairs,
        &mean,
        &config.train,
        out_dir,
    )?;
    Ok((model, report, mean))
}

fn cmd_train(
    config_path: Option<&Path>,
    overrides: &[String],
    out_dir: &Path,
) -> Result<(), Failure> {
    let config = RunConfig::load(config_path, overrides)?;
    let (_, report, _) = run_training(&config, out_dir)?;
    let last = report.records.last().expect("at least one epoch");
    println!(
        "trained {} epochs; final mean L1 loss {:.6}",
        report.records.len(),
        last.mean_l1_loss
    );
    if let Some(psnr) = report.best_val_psnr {
        println!(
            "best validation PSNR {:.2} dB at epoch {}",
            psnr,
            report.best_epoch.unwrap()
        );
    }
    if let Some(psnr) = last.val_psnr_db {
        println!("final validation PSNR {psnr:.2} dB");
    }
    println!("log and checkpoints under {}", out_dir.display());
    Ok(())
}

fn parse_mode(mode: Option<&str>) -> Result<ChannelMode, Failure> {
    match mode {
        None | Some("y") => Ok(ChannelMode::Y),
        Some("rgb") => Ok(ChannelMode::Rgb),
        Some(other) => Err(Failure::usage(format!(
            "unknown metric mode '{other}' (expected y or rgb)"
        ))),
    }
}

fn cmd_eval(
    checkpoint: Option<&Path>,
    baseline: Option<&str>,
    data: &Path,
    scale: usize,
    mode: Option<&str>,
    shave: Option<usize>,
    out_dir: &Path,
) -> Result<(), Failure> {
    let mode = parse_mode(mode)?;
    let shave = shave.unwrap_or(scale);

    enum Scorer {
        Bicubic,
        Checkpoint(Model, Vec<f64>),
    }
    let scorer = match (checkpoint, baseline) {
        (None, Some("bicubic")) => Scorer::Bicubic,
        (None, Some(other)) => {
            return Err(Failure::usage(format!(
                "unknown baseline '{other}' (only 'bicubic' is supported)"
            )))
        }
        (Some(path), None) => {
            let (model, mean) = Model::load_with_mean(path)?;
            if model.config().scale != scale {
                return Err(Failure::usage(format!(
                    "checkpoint was trained for scale {} but --scale {scale} was requested",
                    model.config().scale
                )));
            }
            Scorer::Checkpoint(model, mean)
        }
        (Some(_), Some(_)) => {
            return Err(Failure::usage(
                "pass either a checkpoint or --baseline, not both",
            ))
        }
        (None, None) => {
            return Err(Failure::usage(
                "pass a checkpoint path or --baseline bicubic",
            ))
        }
    };

    let (_, spec) = resolve_dataset(data, scale);
    let pairs = spec.ingest()?;

    let mut scores = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let sr = match &scorer {
            Scorer::Bicubic => crate::image::bicubic_resize_f(
                &pair.lr.to_float(),
                pair.hr.height(),
                pair.hr.width(),
            )?
            .quantize(),
            Scorer::Checkpoint(model, mean) => {
                infer_image(model, &pair.lr.to_float(), mean)?.quantize()
            }
        };
        scores.push(ImageScore {
            image_id: pair.source_id.clone(),
            report: crate::metrics::report(&pair.hr, &sr, shave, mode)?,
        });
    }
    let evaluation = DirEvaluation {
        scores,
        missing: Vec::new(),
        scale,
        channel_mode: mode,
        shave,
    };

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("eval.csv"), evaluation.to_csv())?;
    let avg = evaluation.average();
    println!("{}", summary_line(&avg));
    Ok(())
}

/// Table-style console summary: "PSNR/SSIM: 33.66/0.9299".
fn summary_line(report: &MetricReport) -> String {
    if report.psnr_db.is_finite() {
        format!("PSNR/SSIM: {:.2}/{:.4}", report.psnr_db, report.ssim)
    } else {
        format!("PSNR/SSIM: inf/{:.4}", report.ssim)
    }
}

fn cmd_infer(checkpoint: &Path, input: &Path, output: &Path) -> Result<(), Failure> {
    let (model, mean) = Model::load_with_mean(checkpoint)?;
    let img = load_image(input)?;
    if img.channels() != model.config().in_channels {
        return Err(Failure::usage(format!(
            "{}: image has {} channel(s) but the model expects {}",
            input.display(),
            img.channels(),
            model.config().in_channels
        )));
    }
    let started = Instant::now();
    let sr = infer_image(&model, &img.to_float(), &mean)?.quantize();
    let elapsed = started.elapsed().as_secs_f64();
    save_image(&sr, output)?;
    println!(
        "{}x{} -> {}x{} in {elapsed:.2}s ({})",
        img.width(),
        img.height(),
        sr.width(),
        sr.height(),
        output.display()
    );
    Ok(())
}

fn cmd_gradcheck(threshold: f64, epsilon: f64) -> Result<(), Failure> {
    let report = standard_gradcheck(epsilon)?;
    let mut worst: Option<(&str, f64)> = None;
    for (name, err) in &report {
        let status = if *err < threshold { "ok" } else { "FAIL" };
        println!("{name:<14} max rel err {err:.3e}  {status}");
        if worst.map_or(true, |(_, w)| *err > w) {
            worst = Some((name, *err));
        }
    }
    match worst {
        Some((name, err)) if err >= threshold => Err(Failure::quality(format!(
            "gradient check failed: {name} has max rel err {err:.3e} >= threshold {threshold:.1e}"
        ))),
        _ => {
            println!("all gradients within {threshold:.1e}");
            Ok(())
        }
    }
}

/// Uniform values in `(-amplitude, amplitude)`.
fn random_values(rng: &mut ChaCha20Rng, count: usize, amplitude: f64) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (unit * 2.0 - 1.0) * amplitude
        })
        .collect()
}

/// Uniform values with magnitude in `[low, low + span)`, sign random —
/// keeps ReLU inputs away from the kink at zero.
fn random_values_away_from_zero(
    rng: &mut ChaCha20Rng,
    count: usize,
    low: f64,
    span: f64,
) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let magnitude = low + unit * span;
            if rng.next_u64() & 1 == 1 {
                magnitude
            } else {
                -magnitude
            }
        })
        .collect()
}

fn leaf(shape: Shape, values: Vec<f64>) -> Tensor {
    Tensor::from_values(shape, values).expect("value count matches shape")
}

/// The fixed gradient-check suite: every primitive plus an end-to-end tiny
/// model (G=2, N=1, r=2 on an 8x8 input). Returns `(op, max rel err over
/// leaves)` for exactly {conv2d, relu, concat, add, pixel_shuffle, l1_loss,
/// end_to_end}.
pub fn standard_gradcheck(epsilon: f64) -> Result<Vec<(&'static str, f64)>, TensorError> {
    let mut report = Vec::new();
    let max_of = |errs: Vec<f64>| errs.into_iter().fold(0.0, f64::max);

    // conv2d: random input/weight/bias through an L1 head.
    {
        let mut rng = ChaCha20Rng::seed_from_u64(102);
        let input = leaf(Shape::new(1, 2, 4, 4), random_values(&mut rng, 32, 1.0));
        let weight = leaf(Shape::new(3, 2, 3, 3), random_values(&mut rng, 54, 0.5));
        let bias = leaf(Shape::new(1, 3, 1, 1), random_values(&mut rng, 3, 0.2));
        let target = leaf(Shape::new(1, 3, 4, 4), random_values(&mut rng, 48, 2.0));
        let build = move |leaves: &[Tensor]| {
            let params = crate::tensor::ConvParams::same_size(
                leaves[1].clone(),
                leaves[2].clone(),
            )?;
            leaves[0].conv2d(&params)?.l1_loss(&target)
        };
        let errs = grad_check(&build, &[input, weight, bias], epsilon)?;
        report.push(("conv2d", max_of(errs)));
    }

    // relu: inputs kept away from the kink.
    {
        let mut rng = ChaCha20Rng::seed_from_u64(202);
        let input = leaf(
            Shape::new(1, 2, 3, 3),
            random_values_away_from_zero(&mut rng, 18, 0.1, 1.0),
        );
        let target = leaf(Shape::new(1, 2, 3, 3), random_values(&mut rng, 18, 3.0));
        let build = move |leaves: &[Tensor]| leaves[0].relu().l1_loss(&target);
        let errs = grad_check(&build, &[input], epsilon)?;
        report.push(("relu", max_of(errs)));
    }

    // concat: gradient slices back to each input's channel range.
    {
        let mut rng = ChaCha20Rng::seed_from_u64(303);
        let a = leaf(Shape::new(1, 2, 3, 3), random_values(&mut rng, 18, 1.0));
        let b = leaf(Shape::new(1, 3, 3, 3), random_values(&mut rng, 27, 1.0));
        let target = leaf(Shape::new(1, 5, 3, 3), random_values(&mut rng, 45, 2.0));
        let build = move |leaves: &[Tensor]| {
            crate::tensor::concat_channels(&[leaves[0].clone(), leaves[1].clone()])?
                .l1_loss(&target)
        };
        let errs = grad_check(&build, &[a, b], epsilon)?;
        report.push(("concat", max_of(errs)));
    }

    // add: nested residual chain x + relu(x), then again.
    {
        let mut rng = ChaCha20Rng::seed_from_u64(404);
        let x = leaf(
            Shape::new(1, 2, 3, 3),
            random_values_away_from_zero(&mut rng, 18, 0.1, 1.0),
        );
        let target = leaf(Shape::new(1, 2, 3, 3), random_values(&mut rng, 18, 4.0));
        let build = move |leaves: &[Tensor]| {
            let x = &leaves[0];
            let y = x.add(&x.relu())?;
            let z = y.add(&y.relu())?;
            z.l1_loss(&target)
        };
        let errs = grad_check(&build, &[x], epsilon)?;
        report.push(("add", max_of(errs)));
    }

    // pixel_shuffle: exact inverse rearrangement of the gradient.
    {
        let mut rng = ChaCha20Rng::seed_from_u64(505);
        let x = leaf(Shape::new(1, 8, 3, 3), random_values(&mut rng, 72, 1.0));
        let target = leaf(Shape::new(1, 2, 6, 6), random_values(&mut rng, 72, 2.0));
        let build = move |leaves: &[Tensor]| leaves[0].pixel_shuffle(2)?.l1_loss(&target);
        let errs = grad_check(&build, &[x], epsilon)?;
        report.push(("pixel_shuffle", max_of(errs)));
    }

    // l1_loss directly.
    {
        let mut rng = ChaCha20Rng::seed_from_u64(606);
        let x = leaf(Shape::new(1, 2, 3, 3), random_values(&mut rng, 18, 1.0));
        let target = leaf(Shape::new(1, 2, 3, 3), random_values(&mut rng, 18, 1.0));
        let build = move |leaves: &[Tensor]| leaves[0].l1_loss(&target);
        let errs = grad_check(&build, &[x], epsilon)?;
        report.push(("l1_loss", max_of(errs)));
    }

    // End to end: every parameter of a tiny model.
    {
        let config = MlrnConfig {
            g: 2,
            n_blocks: 1,
            scale: 2,
            use_gff: true,
            use_rsc: true,
            in_channels: 3,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(705);
        let mut leaves = Vec::new();
        for spec in layer_schedule(&config) {
            let w_shape = Shape::new(spec.c_out, spec.c_in, spec.kernel, spec.kernel);
            let fan_in = (spec.c_in * spec.kernel * spec.kernel) as f64;
            leaves.push(leaf(
                w_shape,
                random_values(&mut rng, w_shape.count(), (3.0 / fan_in).sqrt()),
            ));
            leaves.push(leaf(
                Shape::new(1, spec.c_out, 1, 1),
                random_values(&mut rng, spec.c_out, 0.1),
            ));
        }
        let input = leaf(Shape::new(1, 3, 8, 8), random_values(&mut rng, 192, 1.0));
        let target = leaf(Shape::new(1, 3, 16, 16), random_values(&mut rng, 768, 1.0));
        let build = move |leaves: &[Tensor]| {
            let model = Model::from_param_tensors(config, leaves)
                .expect("schedule-shaped leaves assemble");
            match model.forward(&input) {
                Ok(sr) => sr.l1_loss(&target),
                Err(crate::model::ModelError::Tensor(e)) => Err(e),
                Err(other) => unreachable!("forward on valid config: {other}"),
            }
        };
        let errs = grad_check(&build, &leaves, epsilon)?;
        report.push(("end_to_end", max_of(errs)));
    }

    Ok(report)
}

const VARIANTS: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

fn cmd_ablate(
    config_path: Option<&Path>,
    overrides: &[String],
    out_dir: &Path,
) -> Result<(), Failure> {
    let base = RunConfig::load(config_path, overrides)?;
    base.model.validate()?;
    base.train.validate()?;

    let mut labels = Vec::new();
    let mut curves: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut finals = Vec::new();
    let mut counts = Vec::new();
    for (use_gff, use_rsc) in VARIANTS {
        let mut config = base.clone();
        config.model.use_gff = use_gff;
        config.model.use_rsc = use_rsc;
        let label = config.model.variant_label();
        let variant_dir = out_dir.join(label);
        let (model, report, _) = run_training(&config, &variant_dir)?;

        let curve: Vec<(usize, f64)> = report
            .records
            .iter()
            .filter_map(|r| r.val_psnr_db.map(|p| (r.epoch, p)))
            .collect();
        let final_psnr = curve.last().map(|&(_, p)| p).unwrap_or(f64::NAN);
        println!("{label}: {} params, final val PSNR {final_psnr:.2} dB", model.parameter_count());
        labels.push(label);
        counts.push(model.parameter_count());
        finals.push(final_psnr);
        curves.push(curve);
    }

    // Per-epoch curves, one column per variant (Fig-4-style data).
    let mut csv = String::from("epoch");
    for label in &labels {
        csv.push(',');
        csv.push_str(label);
    }
    csv.push('\n');
    let epochs: Vec<usize> = curves[0].iter().map(|&(e, _)| e).collect();
    for (row, &epoch) in epochs.iter().enumerate() {
        csv.push_str(&epoch.to_string());
        for curve in &curves {
            csv.push_str(&format!(",{:.6}", curve[row].1));
        }
        csv.push('\n');
    }
    std::fs::write(out_dir.join("ablation_curves.csv"), &csv)?;

    let mut table = String::new();
    table.push_str(&format!(
        "{:<8}{:>10}{:>10}{:>10}{:>12}\n",
        "", labels[0], labels[1], labels[2], labels[3]
    ));
    let mark = |on: bool| if on { "Y" } else { "x" };
    table.push_str(&format!(
        "{:<8}{:>10}{:>10}{:>10}{:>12}\n",
        "GFF",
        mark(VARIANTS[0].0),
        mark(VARIANTS[1].0),
        mark(VARIANTS[2].0),
        mark(VARIANTS[3].0)
    ));
    table.push_str(&format!(
        "{:<8}{:>10}{:>10}{:>10}{:>12}\n",
        "RSC",
        mark(VARIANTS[0].1),
        mark(VARIANTS[1].1),
        mark(VARIANTS[2].1),
        mark(VARIANTS[3].1)
    ));
    table.push_str(&format!(
        "{:<8}{:>10.2}{:>10.2}{:>10.2}{:>12.2}\n",
        "PSNR", finals[0], finals[1], finals[2], finals[3]
    ));
    table.push_str(&format!(
        "{:<8}{:>10}{:>10}{:>10}{:>12}\n",
        "params", counts[0], counts[1], counts[2], counts[3]
    ));
    print!("{table}");
    std::fs::write(out_dir.join("ablation_summary.txt"), table)?;

    // Sanity: the closed-form count must match what was built.
    for ((use_gff, use_rsc), &count) in VARIANTS.iter().zip(&counts) {
        let mut config = base.model;
        config.use_gff = *use_gff;
        config.use_rsc = *use_rsc;
        assert_eq!(parameter_count(&config), count);
    }
    Ok(())
}
