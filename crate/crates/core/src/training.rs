//! L1 training with Adam: batch assembly from the seeded patch stream,
//! the halving learning-rate schedule, per-epoch logging, checkpointing,
//! and whole-image validation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{
    augment, bicubic_resize_f, denormalize, normalize, sample_patch, ImageError, ImageF,
    ImagePair,
};
use crate::metrics::{psnr, ssim, ChannelMode, MetricError};
use crate::model::{Model, ModelError};
use crate::tensor::{Shape, Tensor, TensorError};

/// Optimization hyperparameters. Defaults follow the training recipe:
/// batches of 16 HR patches of 192x192, Adam with beta1 0.9 / beta2 0.999 /
/// eps 1e-8, learning rate 1e-4 halving every 200 epochs, 1000 iterations
/// per epoch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_hr: usize,
    pub lr0: f64,
    pub halve_every: usize,
    pub iters_per_epoch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            patch_hr: 192,
            lr0: 1e-4,
            halve_every: 200,
            iters_per_epoch: 1000,
            epochs: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0
            || self.patch_hr == 0
            || self.halve_every == 0
            || self.iters_per_epoch == 0
            || self.epochs == 0
            || self.eval_every == 0
        {
            return Err(TrainError::InvalidConfig(
                "batch_size, patch_hr, halve_every, iters_per_epoch, epochs, eval_every must be positive",
            ));
        }
        if !(self.lr0 > 0.0) || !(self.eps > 0.0) {
            return Err(TrainError::InvalidConfig("lr0 and eps must be positive"));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0) || !(0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(TrainError::InvalidConfig("beta1, beta2 must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("model is built for scale {model} but the dataset pairs are scale {dataset}")]
    ScaleMismatch { model: usize, dataset: usize },
    #[error("training requires a nonempty dataset")]
    EmptyDataset,
    #[error("parameter {0} has no gradient; run backward before the optimizer step")]
    MissingGradient(String),
    #[error("optimizer state holds {state} slots but the model has {model} parameters")]
    StateMismatch { state: usize, model: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// First/second moment estimates per parameter tensor plus the shared step
/// counter.
pub struct AdamState {
    t: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    /// Zero-initialized moments matching the given parameter tensors.
    pub fn new(params: &[(String, Tensor)]) -> AdamState {
        AdamState {
            t: 0,
            moments: params
                .iter()
                .map(|(_, p)| {
                    let count = p.shape().count();
                    (vec![0.0; count], vec![0.0; count])
                })
                .collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over all parameters. Gradients must be
/// populated; the caller zeroes them afterwards.
pub fn adam_step(
    params: &[(String, Tensor)],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), TrainError> {
    if params.len() != state.moments.len() {
        return Err(TrainError::StateMismatch {
            state: state.moments.len(),
            model: params.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for ((name, param), (m, v)) in params.iter().zip(state.moments.iter_mut()) {
        let grad = param
            .grad()
            .ok_or_else(|| TrainError::MissingGradient(name.clone()))?;
        let mut values = param.values();
        for i in 0..values.len() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        param.set_values(&values)?;
    }
    Ok(())
}

/// Step size at a given (0-based) epoch: `lr0 / 2^floor(epoch/halve_every)`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    config.lr0 / f64::powi(2.0, (epoch / config.halve_every) as i32)
}

/// One logged epoch.
#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_l1_loss: f64,
    pub lr: f64,
    pub val_psnr_db: Option<f64>,
    pub wall_seconds: f64,
}

/// Outcome of a training run.
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_psnr: Option<f64>,
    pub final_checkpoint: PathBuf,
}

/// Training log CSV. `wall_seconds` is wall-clock telemetry; everything
/// else is a pure function of config and seeds.
pub fn log_to_csv(records: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_l1_loss,lr,val_psnr_db,wall_seconds\n");
    for r in records {
        let val = r
            .val_psnr_db
            .map(|p| format!("{p:.6}"))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.10},{:e},{},{:.3}",
            r.epoch, r.mean_l1_loss, r.lr, val, r.wall_seconds
        );
    }
    out
}

/// Stack aligned LR/HR patches into `(batch, c, h, w)` tensors, mean
/// subtracted.
fn assemble_batch(
    pairs: &[ImagePair],
    mean: &[f64],
    patch_hr: usize,
    batch_size: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(Tensor, Tensor), TrainError> {
    let mut lr_values = Vec::new();
    let mut hr_values = Vec::new();
    let mut lr_shape = None;
    let mut hr_shape = None;
    for _ in 0..batch_size {
        let idx = (rng.next_u64() % pairs.len() as u64) as usize;
        let (lr_patch, hr_patch) = sample_patch(&pairs[idx], patch_hr, rng)?;
        let (lr_patch, hr_patch) = augment(lr_patch, hr_patch, rng);
        let lr_patch = normalize(&lr_patch, mean)?;
        let hr_patch = normalize(&hr_patch, mean)?;
        lr_shape = Some((lr_patch.channels(), lr_patch.height(), lr_patch.width()));
        hr_shape = Some((hr_patch.channels(), hr_patch.height(), hr_patch.width()));
        lr_values.extend_from_slice(lr_patch.planes());
        hr_values.extend_from_slice(hr_patch.planes());
    }
    let (lc, lh, lw) = lr_shape.expect("batch_size > 0");
    let (hc, hh, hw) = hr_shape.expect("batch_size > 0");
    let lr = Tensor::from_values(Shape::new(batch_size, lc, lh, lw), lr_values)?;
    let hr = Tensor::from_values(Shape::new(batch_size, hc, hh, hw), hr_values)?;
    Ok((lr, hr))
}

/// Super-resolve one LR image with the model: mean-subtract, forward, add
/// the mean back, quantize.
pub fn infer_image(model: &Model, lr: &ImageF, mean: &[f64]) -> Result<ImageF, TrainError> {
    let input = normalize(lr, mean)?.to_tensor();
    let sr = model.forward(&input)?;
    let sr_img = ImageF::from_tensor(&sr, 0);
    Ok(denormalize(&sr_img, mean)?)
}

/// Average PSNR/SSIM of the model over whole images (Y channel, shave =
/// scale). Evaluation is side-effect free.
pub fn evaluate_model(
    model: &Model,
    pairs: &[ImagePair],
    mean: &[f64],
) -> Result<(f64, f64), TrainError> {
    let scale = model.config().scale;
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut finite = 0usize;
    for pair in pairs {
        let sr = infer_image(model, &pair.lr.to_float(), mean)?.quantize();
        let p = psnr(&pair.hr, &sr, scale, ChannelMode::Y)?;
        let s = ssim(&pair.hr, &sr, scale, ChannelMode::Y)?;
        if p.is_finite() {
            psnr_sum += p;
            finite += 1;
        }
        ssim_sum += s;
    }
    let avg_psnr = if finite == 0 {
        f64::INFINITY
    } else {
        psnr_sum / finite as f64
    };
    Ok((avg_psnr, ssim_sum / pairs.len() as f64))
}

/// Average PSNR/SSIM of plain bicubic upscaling over the same pairs — the
/// Table-2-style baseline and the reference point for the toy-training
/// improvement check.
pub fn evaluate_bicubic_baseline(pairs: &[ImagePair]) -> Result<(f64, f64), TrainError> {
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    let mut finite = 0usize;
    for pair in pairs {
        let scale = pair.scale;
        let sr = bicubic_resize_f(
            &pair.lr.to_float(),
            pair.hr.height(),
            pair.hr.width(),
        )?
        .quantize();
        let p = psnr(&pair.hr, &sr, scale, ChannelMode::Y)?;
        let s = ssim(&pair.hr, &sr, scale, ChannelMode::Y)?;
        if p.is_finite() {
            psnr_sum += p;
            finite += 1;
        }
        ssim_sum += s;
    }
    let avg_psnr = if finite == 0 {
        f64::INFINITY
    } else {
        psnr_sum / finite as f64
    };
    Ok((avg_psnr, ssim_sum / pairs.len() as f64))
}

/// Run the training loop: per epoch, `iters_per_epoch` steps of sample ->
/// normalize -> forward -> L1 -> backward -> Adam -> zero grads, with
/// validation and checkpointing every `eval_every` epochs (and at the end).
///
/// Writes `train_log.csv`, epoch checkpoints, `best.json`, and `final.mlrn`
/// under `out_dir`. Fully determined by (model, config, seed) apart from
/// the wall-clock column.
pub fn train(
    model: &Model,
    train_pairs: &[ImagePair],
    val_pairs: &[ImagePair],
    mean: &[f64],
    config: &TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for pair in train_pairs.iter().chain(val_pairs) {
        if pair.scale != model.config().scale {
            return Err(TrainError::ScaleMismatch {
                model: model.config().scale,
                dataset: pair.scale,
            });
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| TrainError::Io {
        path: out_dir.to_path_buf(),
        source: e,
    })?;

    let params = model.param_tensors();
    let mut state = AdamState::new(&params);
    let mut data_rng = ChaCha20Rng::seed_from_u64(config.seed);

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let lr = lr_schedule(epoch, config);
        let mut loss_sum = 0.0;
        for _ in 0..config.iters_per_epoch {
            let (lr_batch, hr_batch) = assemble_batch(
                train_pairs,
                mean,
                config.patch_hr,
                config.batch_size,
                &mut data_rng,
            )?;
            let sr = model.forward(&lr_batch)?;
            let loss = sr.l1_loss(&hr_batch)?;
            loss.backward()?;
            adam_step(&params, &mut state, lr, config.beta1, config.beta2, config.eps)?;
            model.zero_grad();
            loss_sum += loss.item();
        }

        let evaluate_now =
            (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs;
        let val_psnr = if evaluate_now && !val_pairs.is_empty() {
            let (p, _) = evaluate_model(model, val_pairs, mean)?;
            let ckpt = out_dir.join(format!("ckpt_epoch_{epoch:04}.mlrn"));
            model.save_with_mean(&ckpt, Some(mean))?;
            if best.map_or(true, |(_, b)| p > b) {
                best = Some((epoch, p));
                let best_json = serde_json::json!({
                    "epoch": epoch,
                    "val_psnr_db": p,
                    "file": ckpt.file_name().unwrap().to_str().unwrap(),
                });
                std::fs::write(
                    out_dir.join("best.json"),
                    serde_json::to_string_pretty(&best_json).unwrap(),
                )
                .map_err(|e| TrainError::Io {
                    path: out_dir.join("best.json"),
                    source: e,
                })?;
            }
            Some(p)
        } else {
            None
        };

        records.push(EpochRecord {
            epoch,
            mean_l1_loss: loss_sum / config.iters_per_epoch as f64,
            lr,
            val_psnr_db: val_psnr,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }

    let final_checkpoint = out_dir.join("final.mlrn");
    model.save_with_mean(&final_checkpoint, Some(mean))?;
    std::fs::write(out_dir.join("train_log.csv"), log_to_csv(&records)).map_err(|e| {
        TrainError::Io {
            path: out_dir.join("train_log.csv"),
            source: e,
        }
    })?;

    Ok(TrainReport {
        best_epoch: best.map(|(e, _)| e),
        best_val_psnr: best.map(|(_, p)| p),
        records,
        final_checkpoint,
    })
}
