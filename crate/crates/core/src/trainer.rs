//! Mini-batch Adam training with validation-based model selection.

use std::time::Instant;

use log::info;
use thiserror::Error;

use crate::corpus::{Dataset, TermVector};
use crate::encdec::{Dropout, Model, ModelShape, VocabMismatch};
use crate::objective::{loss_lk, ObjectiveError};
use crate::retrieval::{hash_documents, precision_at_k, RetrievalError, RetrievalIndex};
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, RngStream};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss {loss} at iteration {iter} (document {doc_id})")]
    NonFiniteLoss { iter: u64, doc_id: usize, loss: f64 },
    #[error("non-finite gradient at iteration {iter} in {param}")]
    NonFiniteGradient { iter: u64, param: String },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Vocab(#[from] VocabMismatch),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub bits: usize,
    pub rank: usize,
    pub components: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub decay_interval: u64,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub keep_prob: f64,
    /// Iterations between validation events; `0` means once per epoch.
    pub eval_interval: u64,
    /// Retrieval depth for validation precision.
    pub eval_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bits: 32,
            rank: 10,
            components: 10,
            hidden: vec![500, 500],
            learning_rate: 0.001,
            decay_interval: 10_000,
            decay_factor: 0.96,
            batch_size: 100,
            epochs: 30,
            keep_prob: 0.9,
            eval_interval: 0,
            eval_k: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if self.bits == 0 {
            return bad("bits must be at least 1");
        }
        if self.components == 0 {
            return bad("components must be at least 1");
        }
        if self.rank > self.bits {
            return bad("rank must not exceed bits");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(self.decay_factor > 0.0) || !self.decay_factor.is_finite() {
            return bad("decay_factor must be positive");
        }
        if self.decay_interval == 0 {
            return bad("decay_interval must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep_prob must be in (0, 1]");
        }
        if self.eval_k == 0 {
            return bad("eval_k must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }

    /// `lr₀ · factor^⌊t / interval⌋`.
    pub fn learning_rate_at(&self, iter: u64) -> f64 {
        self.learning_rate * self.decay_factor.powi((iter / self.decay_interval) as i32)
    }

    pub fn shape(&self, vocab_size: usize) -> ModelShape {
        ModelShape::new(vocab_size, self.hidden.clone(), self.bits, self.rank)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t ≥ 1`; zeroes the gradients.
pub fn adam_step<T: Scalar, S: ParamStore<T> + ?Sized>(store: &mut S, lr: f64, t: u64, cfg: AdamConfig) {
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::one() - T::of(cfg.beta1.powi(t as i32));
    let c2 = T::one() - T::of(cfg.beta2.powi(t as i32));
    let (lr, eps) = (T::of(lr), T::of(cfg.eps));
    for p in store.params_mut() {
        let n = p.value.len();
        let (v, g, m1, m2) = (
            p.value.as_mut_slice(),
            p.grad.as_slice(),
            p.first_moment.as_mut_slice(),
            p.second_moment.as_mut_slice(),
        );
        for i in 0..n {
            m1[i] = b1 * m1[i] + (T::one() - b1) * g[i];
            m2[i] = b2 * m2[i] + (T::one() - b2) * g[i] * g[i];
            let mh = m1[i] / c1;
            let vh = m2[i] / c2;
            v[i] -= lr * mh / (vh.sqrt() + eps);
        }
        p.zero_grad();
    }
}

/// One validation event.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub iter: u64,
    /// Mean loss over batches since the previous event.
    pub loss: f64,
    pub val_precision: Option<f64>,
    pub lr: f64,
    pub elapsed_s: f64,
}

impl LogEntry {
    /// `iter loss val_precision lr elapsed_s`, tab-separated.
    pub fn to_line(&self) -> String {
        let p = self.val_precision.map_or_else(|| "nan".to_string(), |p| format!("{p:.6}"));
        format!("{}\t{:.6}\t{}\t{:.8}\t{:.3}", self.iter, self.loss, p, self.lr, self.elapsed_s)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Best model on validation precision, or the final model without a
    /// validation split.
    pub model: Model<T>,
    pub log: Vec<LogEntry>,
    pub best_val_precision: Option<f64>,
    pub iterations: u64,
    /// Mean loss of every step, in order.
    pub step_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

/// Validation precision@K with validation documents querying the training set.
pub fn validation_precision<T: Scalar>(
    model: &Model<T>,
    train: &[TermVector],
    validation: &[TermVector],
    k: usize,
) -> Result<f64, TrainError> {
    let index = RetrievalIndex::build(hash_documents(model, train)?)?;
    let queries = hash_documents(model, validation)?;
    Ok(precision_at_k(&queries, &index, k)?)
}

/// Gradient accumulation over one batch; returns its mean loss.
pub fn train_step<T: Scalar>(
    model: &mut Model<T>,
    batch: &[&TermVector],
    config: &TrainConfig,
    iter: u64,
    rng: &mut RngStream,
) -> Result<f64, TrainError> {
    let scale = T::of(1.0 / batch.len() as f64);
    let mut total = 0.0;
    for (j, x) in batch.iter().enumerate() {
        let mut dropout_rng = rng.substream_indexed("dropout", iter * config.batch_size as u64 + j as u64);
        let dropout = (config.keep_prob < 1.0).then(|| Dropout {
            keep_prob: config.keep_prob,
            rng: &mut dropout_rng,
        });
        let mut out = loss_lk(model, x, config.components, dropout, rng)?;
        let loss = out.loss.to_f64_lossless();
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iter,
                doc_id: x.doc_id,
                loss,
            });
        }
        total += loss;
        out.tape.backprop(model, scale)?;
    }
    if let Some(p) = model.params().into_iter().find(|p| !p.grad.all_finite()) {
        return Err(TrainError::NonFiniteGradient {
            iter,
            param: p.name.clone(),
        });
    }
    Ok(total / batch.len() as f64)
}

/// Trains from scratch on `data.train`, selecting on `data.validation`.
pub fn train<T: Scalar>(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome<T>, TrainError> {
    train_with(config, data, |_| {})
}

/// [`train`] with a callback for every log entry as it is produced.
pub fn train_with<T: Scalar>(
    config: &TrainConfig,
    data: &Dataset,
    mut on_log: impl FnMut(&LogEntry),
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let root = RngStream::new(config.seed);
    let mut model = Model::<T>::new(config.shape(data.vocab_size), &mut root.substream("init"));
    let mut shuffle_rng = root.substream("shuffle");
    let mut noise_rng = root.substream("noise");
    let adam = AdamConfig::default();
    let start = Instant::now();

    let batches_per_epoch = data.train.len().div_ceil(config.batch_size) as u64;
    let eval_interval = if config.eval_interval == 0 {
        batches_per_epoch
    } else {
        config.eval_interval
    };

    let mut log = Vec::new();
    let mut step_losses = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut best: Option<(f64, Model<T>)> = None;
    let mut iter = 0u64;
    let mut window = (0.0, 0usize);

    for epoch in 0..config.epochs {
        let epoch_start = Instant::now();
        let order = shuffle_rng.permutation(data.train.len());
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TermVector> = chunk.iter().map(|&i| &data.train[i]).collect();
            let loss = train_step(&mut model, &batch, config, iter, &mut noise_rng)?;
            iter += 1;
            let lr = config.learning_rate_at(iter - 1);
            adam_step(&mut model, lr, iter, adam);
            step_losses.push(loss);
            window.0 += loss;
            window.1 += 1;

            if iter.is_multiple_of(eval_interval) {
                let val_precision = if data.validation.is_empty() {
                    None
                } else {
                    Some(validation_precision(&model, &data.train, &data.validation, config.eval_k)?)
                };
                let entry = LogEntry {
                    iter,
                    loss: window.0 / window.1 as f64,
                    val_precision,
                    lr,
                    elapsed_s: start.elapsed().as_secs_f64(),
                };
                info!("epoch {epoch} {}", entry.to_line());
                on_log(&entry);
                log.push(entry);
                window = (0.0, 0);
                if let Some(p) = val_precision {
                    if best.as_ref().is_none_or(|(b, _)| p > *b) {
                        best = Some((p, model.clone()));
                    }
                }
            }
        }
        epoch_seconds.push(epoch_start.elapsed().as_secs_f64());
    }

    let (best_val_precision, model) = match best {
        Some((p, m)) => (Some(p), m),
        None => (None, model),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_val_precision,
        iterations: iter,
        step_losses,
        epoch_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encdec::encode_checkpoint;
    use crate::synthetic::{synthetic_dataset, SyntheticSpec};
    use crate::tensor::{Matrix, Param};

    struct One(Param<f64>);

    impl ParamStore<f64> for One {
        fn params(&self) -> Vec<&Param<f64>> {
            vec![&self.0]
        }
        fn params_mut(&mut self) -> Vec<&mut Param<f64>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn adam_matches_scalar_oracle() {
        let grads = [0.3, -1.2, 0.05, 2.0, -0.7];
        let mut store = One(Param::new("x", Matrix::from_vec(1, 1, vec![0.5])));
        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        let lr = 0.01;
        for (t, &g) in grads.iter().enumerate() {
            let t = t + 1;
            store.0.grad[(0, 0)] = g;
            adam_step(&mut store, lr, t as u64, AdamConfig::default());
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + 1e-8);
            assert!((store.0.value[(0, 0)] - x).abs() < 1e-12);
            assert_eq!(store.0.grad[(0, 0)], 0.0);
        }
    }

    #[test]
    fn adam_zero_and_constant_gradient() {
        let mut store = One(Param::new("x", Matrix::from_vec(1, 1, vec![1.5])));
        adam_step(&mut store, 0.1, 1, AdamConfig::default());
        assert_eq!(store.0.value[(0, 0)], 1.5);

        let mut store = One(Param::new("x", Matrix::from_vec(1, 1, vec![0.0])));
        let mut prev = 0.0;
        for t in 1..=2000 {
            store.0.grad[(0, 0)] = 3.0;
            adam_step(&mut store, 0.01, t, AdamConfig::default());
            let now = store.0.value[(0, 0)];
            assert!(((prev - now) - 0.01).abs() < 1e-6);
            prev = now;
        }
    }

    #[test]
    fn learning_rate_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(0), 0.001);
        assert_eq!(c.learning_rate_at(9_999), 0.001);
        assert_eq!(c.learning_rate_at(10_000), 0.001 * 0.96);
        assert_eq!(c.learning_rate_at(25_000), 0.001 * 0.96f64.powi(2));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.components = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            bits: 4,
            rank: 5,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    fn toy() -> (Dataset, TrainConfig) {
        let spec = SyntheticSpec {
            docs: 20,
            classes: 2,
            vocab_size: 40,
            doc_len: 30,
            ..SyntheticSpec::default()
        };
        let data = synthetic_dataset(&spec, 0.0, 0.0, 5);
        let config = TrainConfig {
            bits: 8,
            rank: 2,
            components: 3,
            hidden: vec![16],
            learning_rate: 0.01,
            batch_size: 5,
            epochs: 50,
            keep_prob: 1.0,
            seed: 1,
            ..TrainConfig::default()
        };
        (data, config)
    }

    #[test]
    fn loss_decreases_on_toy_corpus() {
        let (data, config) = toy();
        let out = train::<f64>(&config, &data).unwrap();
        assert_eq!(out.iterations, 200);
        let head: f64 = out.step_losses[..40].iter().sum::<f64>() / 40.0;
        let tail: f64 = out.step_losses[160..].iter().sum::<f64>() / 40.0;
        assert!(tail < head, "loss {head} -> {tail}");
        assert!(out.step_losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn fixed_seed_gives_identical_checkpoints() {
        let (data, mut config) = toy();
        config.epochs = 3;
        config.keep_prob = 0.8;
        let a = train::<f64>(&config, &data).unwrap();
        let b = train::<f64>(&config, &data).unwrap();
        assert_eq!(encode_checkpoint(&a.model), encode_checkpoint(&b.model));
        assert_eq!(a.step_losses, b.step_losses);
    }

    #[test]
    fn diagonal_posterior_run_completes() {
        let (data, mut config) = toy();
        config.rank = 0;
        config.components = 1;
        config.epochs = 4;
        let out = train::<f64>(&config, &data).unwrap();
        assert!(out.model.encoder.factor.is_none());
        assert!(out.step_losses.iter().all(|l| l.is_finite()));
    }
}
