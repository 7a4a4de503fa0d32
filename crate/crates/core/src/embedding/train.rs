//! SGD training of the projection matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampler::{NegativeRule, TripletSampler};
use super::triplet::{
    tde_gradient, tde_loss, tpe_gradient, triplet_log_probability, triplet_probability,
};
use super::{pca_init, EmbeddingMatrix};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Triplet probability embedding: minimize the triplet NLL.
    Tpe,
    /// Triplet distance embedding: hinge loss on squared-distance margins.
    Tde,
}

/// Step decay: the learning rate is multiplied by `factor` every `interval` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrDecay {
    pub factor: f64,
    pub interval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub target_dim: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub negative_pool_size: usize,
    pub seed: u64,
    pub method: Method,
    /// Hinge margin; TDE only.
    pub margin: f64,
    pub lr_decay: Option<LrDecay>,
    /// Triplets averaged per update.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            target_dim: 128,
            learning_rate: 0.01,
            iterations: 10_000,
            negative_pool_size: 2000,
            seed: 0,
            method: Method::Tpe,
            margin: 0.2,
            lr_decay: None,
            batch_size: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.target_dim == 0 || self.target_dim > input_dim {
            return bad(format!(
                "target_dim {} must be in 1..={input_dim}",
                self.target_dim
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if self.negative_pool_size == 0 || self.batch_size == 0 {
            return bad("negative_pool_size and batch_size must be at least 1".into());
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be nonnegative".into());
        }
        if let Some(d) = self.lr_decay {
            if d.interval == 0 || !(d.factor > 0.0 && d.factor.is_finite()) {
                return bad("lr_decay needs a positive factor and interval".into());
            }
        }
        Ok(())
    }

    fn learning_rate_at(&self, iteration: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.factor.powi((iteration / d.interval) as i32),
            None => self.learning_rate,
        }
    }
}

/// One row of the training log; `p` and `loss` are batch means for the
/// sampled triplets, evaluated before the update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub p: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub matrix: EmbeddingMatrix,
    pub log: Vec<LogEntry>,
}

/// Trains `W` from a PCA initialization with the method named in `cfg`.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate(dataset.dim())?;
    let mut w = pca_init(dataset, cfg.target_dim)?;
    let mut log = Vec::with_capacity(cfg.iterations);
    if cfg.iterations == 0 {
        return Ok(TrainOutput { matrix: w, log });
    }
    let sampler = TripletSampler::new(dataset)?;
    let rule = match cfg.method {
        Method::Tpe => NegativeRule::MinProbability,
        Method::Tde => NegativeRule::MaxViolation { alpha: cfg.margin },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grad = EmbeddingMatrix::zeros(w.rows(), w.cols());
    let batch = cfg.batch_size as f64;

    for iter in 0..cfg.iterations {
        grad.data_mut().fill(0.0);
        let (mut p_sum, mut loss_sum) = (0.0, 0.0);
        for _ in 0..cfg.batch_size {
            let t = sampler.sample(&w, cfg.negative_pool_size, rule, &mut rng)?;
            p_sum += triplet_probability(&w, &t, dataset);
            let (loss, g) = match cfg.method {
                Method::Tpe => (
                    -triplet_log_probability(&w, &t, dataset),
                    tpe_gradient(&w, &t, dataset),
                ),
                Method::Tde => (
                    tde_loss(&w, &t, cfg.margin, dataset),
                    tde_gradient(&w, &t, cfg.margin, dataset),
                ),
            };
            loss_sum += loss;
            grad.add_scaled(1.0, &g);
        }
        w.add_scaled(-cfg.learning_rate_at(iter) / batch, &grad);
        if !w.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }
        log.push(LogEntry {
            iter,
            p: p_sum / batch,
            loss: loss_sum / batch,
        });
    }
    Ok(TrainOutput { matrix: w, log })
}

/// [`train`] with the method forced to TPE.
pub fn train_tpe(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train(
        dataset,
        &TrainConfig {
            method: Method::Tpe,
            ..cfg.clone()
        },
    )
}

/// [`train`] with the method forced to TDE.
pub fn train_tde(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    train(
        dataset,
        &TrainConfig {
            method: Method::Tde,
            ..cfg.clone()
        },
    )
}
