//! Line-oriented `key = value` training configuration.
//!
//! Blank lines and `#` comments are ignored. Recognised keys:
//!
//! ```text
//! contrastive_epochs  mse_epochs  lr  decay  decay_every  weight_decay
//! positive_threshold  batch_size  target_scale  sigma  seed
//! init (identity | random | zeros)  init_scale
//! ```

use std::fmt;
use std::str::FromStr;

use crate::align::{ProjectionModel, TrainConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ModelInit {
    /// Identity weights; requires equal patch and text dimensions.
    #[default]
    Identity,
    /// Gaussian weights with the configured scale, seeded by the train seed.
    Random,
    Zeros,
}

impl FromStr for ModelInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(ModelInit::Identity),
            "random" => Ok(ModelInit::Random),
            "zeros" => Ok(ModelInit::Zeros),
            other => Err(Error::invalid(format!("unknown init `{other}`"))),
        }
    }
}

impl fmt::Display for ModelInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelInit::Identity => "identity",
            ModelInit::Random => "random",
            ModelInit::Zeros => "zeros",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainJob {
    pub train: TrainConfig,
    pub init: ModelInit,
    pub init_scale: f64,
}

impl Default for TrainJob {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            init: ModelInit::default(),
            init_scale: 0.1,
        }
    }
}

impl TrainJob {
    pub fn initial_model(&self, image_dim: usize, text_dim: usize) -> Result<ProjectionModel> {
        match self.init {
            ModelInit::Identity => {
                if image_dim != text_dim {
                    return Err(Error::invalid(format!(
                        "identity init needs equal dims, got {image_dim} and {text_dim}"
                    )));
                }
                ProjectionModel::identity(image_dim)
            }
            ModelInit::Random => ProjectionModel::random(image_dim, text_dim, self.init_scale, self.train.seed),
            ModelInit::Zeros => ProjectionModel::zeros(image_dim, text_dim),
        }
    }

    /// Renders every key, one per line, in a form [`parse_config`] accepts.
    pub fn to_config_string(&self) -> String {
        let t = &self.train;
        format!(
            "contrastive_epochs = {}\nmse_epochs = {}\nlr = {}\ndecay = {}\ndecay_every = {}\n\
             weight_decay = {}\npositive_threshold = {}\nbatch_size = {}\ntarget_scale = {}\n\
             sigma = {}\nseed = {}\ninit = {}\ninit_scale = {}\n",
            t.contrastive_epochs,
            t.mse_epochs,
            t.lr,
            t.decay,
            t.decay_every,
            t.weight_decay,
            t.positive_threshold,
            t.batch_size,
            t.target_scale,
            t.sigma,
            t.seed,
            self.init,
            self.init_scale
        )
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("line {line}: cannot parse `{value}` for `{key}`")))
}

pub fn parse_config(text: &str) -> Result<TrainJob> {
    let mut job = TrainJob::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("line {line}: expected `key = value`")))?;
        let (key, value) = (key.trim(), value.trim());
        let t = &mut job.train;
        match key {
            "contrastive_epochs" => t.contrastive_epochs = parse_value(key, value, line)?,
            "mse_epochs" => t.mse_epochs = parse_value(key, value, line)?,
            "lr" => t.lr = parse_value(key, value, line)?,
            "decay" => t.decay = parse_value(key, value, line)?,
            "decay_every" => t.decay_every = parse_value(key, value, line)?,
            "weight_decay" => t.weight_decay = parse_value(key, value, line)?,
            "positive_threshold" => t.positive_threshold = parse_value(key, value, line)?,
            "batch_size" => t.batch_size = parse_value(key, value, line)?,
            "target_scale" => t.target_scale = parse_value(key, value, line)?,
            "sigma" => t.sigma = parse_value(key, value, line)?,
            "seed" => t.seed = parse_value(key, value, line)?,
            "init" => job.init = value.parse()?,
            "init_scale" => job.init_scale = parse_value(key, value, line)?,
            other => return Err(Error::invalid(format!("line {line}: unknown key `{other}`"))),
        }
    }
    job.train.validate()?;
    Ok(job)
}
