//! Fitting a saliency network: loss, optimizer, augmentation, checkpoints
//! and the epoch loop.

pub mod augment;
pub mod checkpoint;
pub mod loss;
pub mod optim;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{augment, Augmentation};
pub use loss::{balance_weight, balanced_bce_loss, check_binary, BalancedBce, DeltaMode, LossConfig};
pub use optim::{sgd_step, Sgd, SgdConfig};

use crate::autograd::Tape;
use crate::error::{Error, Result};
use crate::nnops::BnMode;
use crate::srnet::Model;
use crate::tensor::Tensor;

/// An image `(1, 3, H, W)` in [0, 1] with its binary mask `(1, 1, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub mask: Tensor,
}

impl Sample {
    pub fn new(image: Tensor, mask: Tensor) -> Result<Self> {
        let (i, m) = (image.shape(), mask.shape());
        if i.n != 1 || i.c != 3 || m.n != 1 || m.c != 1 || (i.h, i.w) != (m.h, m.w) {
            return Err(Error::ShapeMismatch {
                op: "sample",
                left: i,
                right: m,
            });
        }
        check_binary(&mask)?;
        Ok(Sample { image, mask })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossConfig,
    pub sgd: SgdConfig,
    pub augment: bool,
    pub seed: u64,
    /// Written after every epoch when set.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            loss: LossConfig::default(),
            sgd: SgdConfig::default(),
            augment: true,
            seed: 0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

impl EpochLog {
    /// `epoch,mean_loss,wall_seconds`
    pub fn csv(&self) -> String {
        format!("{},{},{:.3}", self.epoch, self.mean_loss, self.wall_seconds)
    }
}

/// Train-mode forward and backward on one batch. Returns the loss and the
/// gradients keyed by parameter name; running statistics are updated.
pub fn loss_and_gradients(model: &mut Model, batch: &[Sample], loss: &LossConfig) -> Result<(f64, BTreeMap<String, Tensor>)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let images: Vec<Tensor> = batch.iter().map(|s| s.image.clone()).collect();
    let masks: Vec<Tensor> = batch.iter().map(|s| s.mask.clone()).collect();
    let mut tape = Tape::new();
    let pass = model.record(&mut tape, Tensor::stack(&images)?, BnMode::Train)?;
    let l = tape.balanced_bce(pass.output, Tensor::stack(&masks)?, *loss)?;
    let grads = tape.backward(l)?;
    model.update_running_stats(&tape, &pass);
    let named = pass
        .params
        .iter()
        .map(|(name, id)| (name.clone(), grads[id].clone()))
        .collect();
    Ok((tape.value(l).data()[0], named))
}

/// One SGD step on `batch`; returns the pre-step loss.
pub fn train_step(model: &mut Model, sgd: &mut Sgd, batch: &[Sample], loss: &LossConfig) -> Result<f64> {
    let (l, grads) = loss_and_gradients(model, batch, loss)?;
    sgd.step(&mut model.params, &grads)?;
    Ok(l)
}

/// Shuffled mini-batch SGD. `on_epoch` sees each epoch's log line as soon as
/// it is available.
pub fn train(model: &mut Model, data: &[Sample], cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<Vec<EpochLog>> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    cfg.loss.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(cfg.sgd);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        Augmentation::draw(&mut rng).apply(&data[i])
                    } else {
                        data[i].clone()
                    }
                })
                .collect();
            total += train_step(model, &mut sgd, &batch, &cfg.loss)?;
            steps += 1;
        }
        let log = EpochLog {
            epoch,
            mean_loss: total / steps as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some(path) = &cfg.checkpoint {
            checkpoint::save(path, &model.params)?;
        }
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}
