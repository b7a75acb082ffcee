use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{DensityMap, EmbeddingMatrix, Grid, DEFAULT_SIGMA};

use super::loss::{contrastive_loss, density_mse_loss, patch_factor, split_patches, DEFAULT_POSITIVE_THRESHOLD};
use super::model::ProjectionModel;
use super::optim::{AdamW, AdamWConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub contrastive_epochs: usize,
    pub mse_epochs: usize,
    pub lr: f64,
    pub decay: f64,
    pub decay_every: u64,
    pub weight_decay: f64,
    pub positive_threshold: f64,
    pub batch_size: usize,
    /// Multiplier applied to ground-truth densities before the MSE stage.
    ///
    /// The default `2π·σ²` (σ = 2 px) lifts each unit-mass kernel to a peak
    /// of 1, the scale the decoder thresholds are expressed in.
    pub target_scale: f64,
    /// Kernel width used when ground truth is rendered from points.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            contrastive_epochs: 20,
            mse_epochs: 200,
            lr: 1e-4,
            decay: 0.33,
            decay_every: 100,
            weight_decay: 0.01,
            positive_threshold: DEFAULT_POSITIVE_THRESHOLD,
            batch_size: 3,
            target_scale: 2.0 * std::f64::consts::PI * DEFAULT_SIGMA * DEFAULT_SIGMA,
            sigma: DEFAULT_SIGMA,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if self.decay_every == 0 || self.batch_size == 0 {
            return Err(Error::invalid("decay_every and batch_size must be >= 1"));
        }
        if !(self.weight_decay >= 0.0) || !(self.target_scale > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0; target_scale and sigma must be > 0"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            base_lr: self.lr,
            weight_decay: self.weight_decay,
            decay: self.decay,
            decay_every: self.decay_every,
            ..AdamWConfig::default()
        }
    }
}

/// One window's worth of training data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub patches: EmbeddingMatrix,
    pub grid: (usize, usize),
    pub text: Vec<f32>,
    /// Pixel-resolution ground truth covering the window.
    pub density: DensityMap,
}

impl TrainSample {
    pub fn new(patches: EmbeddingMatrix, grid: (usize, usize), text: Vec<f32>, density: DensityMap) -> Result<Self> {
        if patches.rows() != grid.0 * grid.1 {
            return Err(Error::data(format!(
                "{} patches do not form a {}x{} grid",
                patches.rows(),
                grid.0,
                grid.1
            )));
        }
        patch_factor((density.height(), density.width()), grid)?;
        Ok(Self {
            patches,
            grid,
            text,
            density,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Contrastive,
    Mse,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Contrastive => "contrastive",
            Stage::Mse => "mse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub stage: Stage,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: ProjectionModel,
    pub history: Vec<EpochLoss>,
    /// Learning rate used by every optimizer step, in order.
    pub lr_trace: Vec<f64>,
}

impl TrainReport {
    pub fn stage_losses(&self, stage: Stage) -> Vec<f64> {
        self.history.iter().filter(|e| e.stage == stage).map(|e| e.loss).collect()
    }
}

/// Renders a history as `epoch,stage,loss` CSV.
pub fn history_csv(history: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,stage,loss\n");
    for e in history {
        out.push_str(&format!("{},{},{}\n", e.epoch, e.stage, e.loss));
    }
    out
}

/// Two-stage training: contrastive epochs, then MSE epochs, one optimizer
/// throughout. Deterministic for a fixed seed.
pub fn train(model: ProjectionModel, dataset: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::data("training dataset is empty"));
    }
    cfg.validate()?;
    for s in dataset {
        model.check_inputs(&s.patches, &s.text)?;
    }

    let splits = dataset
        .iter()
        .map(|s| split_patches(&s.density, s.grid, cfg.positive_threshold))
        .collect::<Result<Vec<_>>>()?;
    let usable: Vec<usize> = splits
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.positives.is_empty() && !s.negatives.is_empty())
        .map(|(i, _)| i)
        .collect();
    if cfg.contrastive_epochs > 0 && usable.is_empty() {
        return Err(Error::data(
            "no training sample has both positive and negative patches",
        ));
    }
    let targets = dataset
        .iter()
        .map(|s| {
            let scaled = s.density.values().iter().map(|&v| (v as f64 * cfg.target_scale) as f32).collect();
            Grid::new(s.density.height(), s.density.width(), scaled)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut model = model;
    let mut opt = AdamW::new(cfg.optimizer(), model.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.contrastive_epochs + cfg.mse_epochs);
    let mut lr_trace = Vec::new();

    let stages = [
        (Stage::Contrastive, cfg.contrastive_epochs, usable),
        (Stage::Mse, cfg.mse_epochs, (0..dataset.len()).collect::<Vec<_>>()),
    ];
    for (stage, epochs, pool) in stages {
        let mut order = pool;
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let mut grad = vec![0.0; model.params().len()];
                for &i in batch {
                    let s = &dataset[i];
                    let (loss, g) = match stage {
                        Stage::Contrastive => contrastive_loss(
                            &model,
                            &s.patches,
                            &s.text,
                            &splits[i].positives,
                            &splits[i].negatives,
                        )?,
                        Stage::Mse => density_mse_loss(&model, &s.patches, s.grid, &s.text, &targets[i])?,
                    };
                    total += loss;
                    for (a, b) in grad.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                let inv = 1.0 / batch.len() as f64;
                grad.iter_mut().for_each(|g| *g *= inv);
                lr_trace.push(opt.step(model.params_mut(), &grad)?);
            }
            let loss = total / order.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("{stage} loss diverged at epoch {epoch}")));
            }
            history.push(EpochLoss { stage, epoch, loss });
        }
    }
    Ok(TrainReport {
        model,
        history,
        lr_trace,
    })
}
