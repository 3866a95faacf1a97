//! Optimization loop: mini-batch SGD with per-sample backward accumulation,
//! per-epoch train-loss/validation-MAE logging, and divergence detection.

use std::io::Write as _;
use std::path::Path;

use sod_core::loss::{total_loss, SaliencyPair};
use sod_core::metrics::{self, GrayMap, MetricsReport};
use sod_core::network::Model;
use sod_core::nn::Sgd;
use sod_core::rng::Rng;
use sod_core::tensor::{ResampleMode, Tensor};

use crate::config::TrainConfig;
use crate::error::{CliError, IoContext, Result};
use crate::synth::{augment, Sample};

#[derive(Clone, Debug)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    /// Average loss of the very first optimization step, before any update.
    pub first_step_loss: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Sample tensors resized to the model's square input resolution. Images
/// are interpolated; the ground truth is resampled nearest to stay binary.
fn sample_tensors(sample: &Sample, res: usize) -> Result<(Tensor, Tensor, Tensor)> {
    let (rgb, depth, gt) = sample.tensors();
    if sample.h == res && sample.w == res {
        return Ok((rgb, depth, gt));
    }
    Ok((
        rgb.resample(res, res, ResampleMode::Bilinear)?,
        depth.resample(res, res, ResampleMode::Bilinear)?,
        gt.resample(res, res, ResampleMode::Nearest)?,
    ))
}

/// Mean absolute error of eval-mode forward passes over `val`.
fn validation_mae(model: &Model, val: &[Sample]) -> Result<f64> {
    if val.is_empty() {
        return Ok(f64::NAN);
    }
    let res = model.config.input;
    let mut total = 0.0;
    for s in val {
        let (rgb, depth, gt) = sample_tensors(s, res)?;
        let out = model.forward(&rgb, &depth, false)?;
        let pred = GrayMap::new(res, res, out.saliency.data().to_vec())?;
        let gt = GrayMap::new(res, res, gt.data().to_vec())?;
        total += metrics::mae(&pred, &gt)?;
    }
    Ok(total / val.len() as f64)
}

/// Run the full schedule. Writes `train_log.csv` under `out_dir` when given.
pub fn train_model(
    cfg: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    out_dir: Option<&Path>,
    verbose: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(CliError::contract("training split is empty"));
    }
    let mut model = Model::build(cfg.model.clone(), cfg.seed)?;
    let opt = Sgd {
        lr: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    let base = Rng::seed_from_u64(cfg.seed);
    let mut shuffle_rng = base.split(0x5417);
    let mut aug_rng = base.split(0xA06);
    let res = cfg.model.input;

    let mut first_step_loss = f64::NAN;
    let mut global_step = 0usize;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            Sgd::zero_grad(&mut model);
            let mut step_loss = 0.0;
            for &idx in batch {
                let sample = if cfg.augment {
                    augment(&train[idx], &mut aug_rng)
                } else {
                    train[idx].clone()
                };
                let (rgb, depth, gt) = sample_tensors(&sample, res)?;
                let out = model.forward(&rgb, &depth, true)?;
                let pair = SaliencyPair::new(out.saliency, gt.clone())?;
                let side: Result<Vec<_>> = out
                    .side
                    .into_iter()
                    .map(|s| SaliencyPair::new(s, gt.clone()).map_err(CliError::from))
                    .collect();
                // Scale each sample's loss by 1/batch so accumulated
                // gradients average over the batch.
                let loss = total_loss(&pair, &side?, &cfg.loss)?
                    .scale(1.0 / batch.len() as f64);
                loss.backward()?;
                step_loss += loss.item()?;
            }
            if !step_loss.is_finite() {
                return Err(CliError::contract(format!(
                    "training diverged: loss is not finite at step {global_step}"
                )));
            }
            if global_step == 0 {
                first_step_loss = step_loss;
            }
            opt.step(&mut model)?;
            epoch_loss += step_loss;
            steps += 1;
            global_step += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss: epoch_loss / steps as f64,
            val_mae: validation_mae(&model, val)?,
        };
        if verbose {
            println!(
                "epoch {:3}: train_loss={:.6} val_mae={:.6}",
                record.epoch, record.train_loss, record.val_mae
            );
        }
        epochs.push(record);
    }

    if let Some(dir) = out_dir {
        write_train_log(dir, &epochs)?;
    }
    Ok(TrainOutcome {
        model,
        first_step_loss,
        epochs,
    })
}

fn write_train_log(dir: &Path, epochs: &[EpochRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).io_ctx(format!("creating {}", dir.display()))?;
    let path = dir.join("train_log.csv");
    let mut f =
        std::fs::File::create(&path).io_ctx(format!("writing {}", path.display()))?;
    let mut text = String::from("epoch,train_loss,val_mae\n");
    for r in epochs {
        text.push_str(&format!("{},{:.10},{:.10}\n", r.epoch, r.train_loss, r.val_mae));
    }
    f.write_all(text.as_bytes()).io_ctx(format!("writing {}", path.display()))?;
    Ok(())
}

/// Full-resolution inference over a split, evaluated with the 8-bit
/// metric protocol (predictions quantized to 0..255 first).
pub fn evaluate_model(model: &Model, samples: &[Sample]) -> Result<MetricsReport> {
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let (rgb, depth, _) = s.tensors();
        let (bytes, h, w) = model.predict(&rgb, &depth)?;
        let pred = GrayMap::new(h, w, bytes.iter().map(|&b| b as f64 / 255.0).collect())?;
        let gt = GrayMap::new(s.h, s.w, s.gt.clone())?;
        pairs.push((pred, gt));
    }
    metrics::evaluate_dataset(&pairs).map_err(CliError::from)
}
