//! Seeded minibatch SGD for endpoint models, and full-dataset evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, MlpConfig, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOpts {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            learning_rate: 0.1,
            batch_size: 256,
            epochs: 100,
            seed: 0,
            momentum: 0.0,
        }
    }
}

impl TrainOpts {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn check_data(config: &MlpConfig, data: &Dataset) -> Result<()> {
    if data.dim() != config.input_dim() {
        return Err(Error::shape(
            "dataset features",
            config.input_dim(),
            data.dim(),
        ));
    }
    if data.class_count != config.class_count() {
        return Err(Error::shape(
            "dataset class count",
            config.class_count(),
            data.class_count,
        ));
    }
    Ok(())
}

/// Per-epoch training loss, recorded by [`train_with_history`].
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    /// Mean minibatch loss of each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains from a He initialization drawn from `opts.seed`.
pub fn train(config: &MlpConfig, data: &Dataset, opts: &TrainOpts) -> Result<ModelParams> {
    Ok(train_with_history(config, data, opts)?.0)
}

pub fn train_with_history(
    config: &MlpConfig,
    data: &Dataset,
    opts: &TrainOpts,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = ModelParams::init_he(config, &mut rng)?;
    continue_training(init, data, opts, &mut rng)
}

/// SGD from given parameters. One epoch reshuffles the rows with `rng` and
/// walks them in `batch_size` chunks, keeping the final partial chunk.
pub fn continue_training(
    mut params: ModelParams,
    data: &Dataset,
    opts: &TrainOpts,
    rng: &mut ChaCha8Rng,
) -> Result<(ModelParams, TrainHistory)> {
    opts.validate()?;
    params.validate()?;
    check_data(&params.config, data)?;

    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 0..opts.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(opts.batch_size) {
            let inputs = data.features.select_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grad) = nn::loss_and_grad_ce(&params, &inputs, &labels)?;
            if opts.momentum > 0.0 {
                velocity.scale(opts.momentum);
                velocity.axpy(1.0, &grad)?;
                params.axpy(-opts.learning_rate, &velocity)?;
            } else {
                params.axpy(-opts.learning_rate, &grad)?;
            }
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        log::trace!("epoch {epoch}: loss {mean:.6}");
        history.epoch_loss.push(mean);
    }
    params.validate()?;
    Ok((params, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Full-dataset mean cross-entropy and argmax accuracy. Ties in the argmax
/// go to the lowest class index.
pub fn evaluate(params: &ModelParams, data: &Dataset) -> Result<Evaluation> {
    check_data(&params.config, data)?;
    let probs = nn::predict_proba(params, &data.features)?;
    let loss = nn::cross_entropy(&probs, &data.labels)?;
    let correct = probs
        .rows_iter()
        .zip(&data.labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / data.len() as f64,
    })
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}
