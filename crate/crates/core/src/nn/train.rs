use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{DropoutSource, Mode, Network};
use super::Tensor;
use crate::error::{Error, Result};
use crate::eval;
use crate::rng::{self, RunRng};
use crate::spectra::{Dataset, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_adam: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Return the parameters from the epoch with the best validation AUC
    /// instead of the last epoch.
    pub select_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_adam: 1e-8,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            select_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon_adam > 0.0) {
            return Err(Error::config("epsilon_adam must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_auc: Option<f64>,
}

/// Stacks spectra into a `[batch, 288, 1]` input tensor.
pub fn batch_tensor<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> Tensor {
    let mut data = Vec::new();
    let mut n = 0;
    for s in spectra {
        data.extend_from_slice(&s.values);
        n += 1;
    }
    let len = data.len().checked_div(n).unwrap_or(0);
    Tensor::from_parts_unchecked(vec![n, len, 1], data)
}

/// Inference-mode class probabilities per spectrum, in dataset order.
pub fn predict_proba(net: &Network, spectra: &[Spectrum]) -> Result<Vec<[f64; 2]>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(spectra.len());
    for chunk in spectra.chunks(CHUNK) {
        let p = net.predict_batch(&batch_tensor(chunk))?;
        out.extend(p.data().chunks_exact(2).map(|r| [r[0], r[1]]));
    }
    Ok(out)
}

/// Owns a network, its optimizer state and the run's random stream; one call
/// to [`Trainer::train_epoch`] is one shuffled pass over a dataset.
pub struct Trainer {
    pub network: Network,
    pub adam: AdamState,
    pub config: TrainConfig,
    rng: RunRng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(network: Network, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&network.params);
        let rng = rng::stream(config.seed, "train", 0);
        Ok(Trainer {
            network,
            adam,
            config,
            rng,
            epochs_done: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// One epoch of mini-batch Adam; returns the sample-weighted mean loss.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::argument("empty training set"));
        }
        let epoch = self.epochs_done + 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        self.network.set_mode(Mode::Train);
        let mut total = 0.0;
        for (bi, idx) in order.chunks(self.config.batch_size).enumerate() {
            let x = batch_tensor(idx.iter().map(|&i| &data.spectra[i]));
            let labels: Vec<usize> = idx.iter().map(|&i| data.spectra[i].label.index()).collect();
            let trace = self.network.forward_train(&x, DropoutSource::Sample(&mut self.rng))?;
            let (loss, grads) = self.network.backward(&trace, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    message: format!("loss is {loss}"),
                });
            }
            adam_step(&mut self.network.params, &grads, &mut self.adam, &self.config).map_err(|e| {
                Error::Divergence {
                    epoch,
                    batch: bi,
                    message: e.to_string(),
                }
            })?;
            self.network.update_running_stats(&trace.bn_stats)?;
            self.network.touch();
            total += loss * idx.len() as f64;
        }
        self.network.set_mode(Mode::Eval);
        self.epochs_done = epoch;
        Ok(total / data.len() as f64)
    }
}

pub struct TrainOutcome {
    /// Selected parameters (best validation epoch, or last).
    pub network: Network,
    /// Optimizer state after the final epoch.
    pub adam: AdamState,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; 0 means the initialization.
    pub selected_epoch: usize,
}

fn valid_auc(net: &Network, valid: &Dataset) -> Result<Option<f64>> {
    if !valid.has_both_classes() {
        return Ok(None);
    }
    let probs = predict_proba(net, &valid.spectra)?;
    let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    Ok(Some(eval::auc_from_scores(&scores, &valid.labels())?))
}

/// Trains `net` for `config.epochs` epochs, logging the training loss and
/// the validation AUC after every epoch.
pub fn train(
    net: Network,
    train_set: &Dataset,
    valid_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    train_set.validate()?;
    if !train_set.has_both_classes() {
        return Err(Error::argument("training set must contain both classes"));
    }
    let mut trainer = Trainer::new(net, config.clone())?;
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Network)> = None;
    for _ in 0..config.epochs {
        let loss = trainer.train_epoch(train_set)?;
        let auc = match valid_set {
            Some(v) => valid_auc(&trainer.network, v)?,
            None => None,
        };
        let epoch = trainer.epochs_done();
        info!("epoch {epoch}: train loss {loss:.5}, valid AUC {auc:?}");
        log.push(EpochRecord {
            epoch,
            train_loss: loss,
            valid_auc: auc,
        });
        if let (true, Some(a)) = (config.select_best, auc) {
            if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
                debug!("epoch {epoch}: new best validation AUC");
                best = Some((a, epoch, trainer.network.clone()));
            }
        }
    }
    let Trainer { network, adam, .. } = trainer;
    let (network, selected_epoch) = match best {
        Some((_, e, n)) => (n, e),
        None => (network, log.len()),
    };
    Ok(TrainOutcome {
        network,
        adam,
        log,
        selected_epoch,
    })
}

/// Mean cross-entropy of a network over a dataset in inference mode.
pub fn dataset_loss(net: &Network, data: &Dataset) -> Result<f64> {
    let probs = predict_proba(net, &data.spectra)?;
    let flat: Vec<f64> = probs.iter().flatten().copied().collect();
    let t = Tensor::new(vec![probs.len(), 2], flat)?;
    Ok(super::layers::cross_entropy_loss(
        &t,
        &data.labels().iter().map(|c| c.index()).collect::<Vec<_>>(),
    ))
}
