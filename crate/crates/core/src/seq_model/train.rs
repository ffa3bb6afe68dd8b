use std::io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledSequenceDataset, Sample};
use super::lstm::LstmModel;
use super::{ModelConfig, ModelError};
use crate::eval::Verdict;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Adam {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's training samples, with dropout.
    pub loss: f64,
    pub train_accuracy: f64,
}

impl EpochStats {
    pub fn write_csv<W: io::Write>(history: &[EpochStats], sink: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        for s in history {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains on the chronological training split of `dataset`.
pub fn train(dataset: &LabeledSequenceDataset, config: &ModelConfig) -> Result<(LstmModel, Vec<EpochStats>), ModelError> {
    config.validate()?;
    if dataset.lookback != config.lookback || dataset.features != config.features {
        return Err(ModelError::InvalidConfig(format!(
            "dataset has lookback {} and {} features, config expects {} and {}",
            dataset.lookback, dataset.features, config.lookback, config.features
        )));
    }
    let (train_set, _) = dataset.split(config.train_fraction);
    train_on(&train_set.samples, config)
}

/// Trains on every sample given.
pub fn train_on(samples: &[Sample], config: &ModelConfig) -> Result<(LstmModel, Vec<EpochStats>), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let positives = samples.iter().filter(|s| s.label == 1).count();
    if positives == 0 || positives == samples.len() {
        return Err(ModelError::SingleClass);
    }
    let mut model = LstmModel::new(config.clone(), config.seed)?;
    for s in samples {
        model.check_input(&s.inputs)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Keep shuffling and dropout independent of the initialization draws.
    rng.set_stream(1);
    let mut adam = Adam::new(model.params().len(), config.learning_rate);
    let mut grads = vec![0.0; model.params().len()];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let dropout = config.dropout_rate > 0.0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            grads.fill(0.0);
            for &k in batch {
                let s = &samples[k];
                let masks = dropout.then(|| model.sample_masks(&mut rng));
                let cache = model.forward_cached(&s.inputs, masks);
                if (cache.probability() >= 0.5) == (s.label == 1) {
                    correct += 1;
                }
                loss += model.backward(&cache, f64::from(s.label), &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= scale);
            adam.step(model.params_mut(), &grads);
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(ModelError::DivergedNonFinite { epoch });
            }
        }
        let stats = EpochStats {
            epoch,
            loss: loss / samples.len() as f64,
            train_accuracy: correct as f64 / samples.len() as f64,
        };
        log::debug!("epoch {epoch}: loss {:.5} accuracy {:.4}", stats.loss, stats.train_accuracy);
        history.push(stats);
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// Fraction of verdicts matching the sample labels.
    pub accuracy: f64,
}

/// Verdict is attack when `p >= 0.5`.
pub fn predict(model: &LstmModel, samples: &[Sample]) -> Result<Prediction, ModelError> {
    let probabilities = samples.iter().map(|s| model.probability(&s.inputs)).collect::<Result<Vec<f64>, _>>()?;
    let verdicts: Vec<Verdict> =
        probabilities.iter().map(|&p| if p >= 0.5 { Verdict::Attack } else { Verdict::Benign }).collect();
    let correct = verdicts.iter().zip(samples).filter(|(v, s)| v.is_attack() == (s.label == 1)).count();
    let accuracy = if samples.is_empty() { f64::NAN } else { correct as f64 / samples.len() as f64 };
    Ok(Prediction { probabilities, verdicts, accuracy })
}
