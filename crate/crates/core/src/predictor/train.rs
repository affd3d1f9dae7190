use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::PredictorHead;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Huber threshold.
    pub delta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 0.3,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.98,
            weight_decay: 0.01,
            adam_eps: 1e-8,
            epochs: 3,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate and weight_decay must be non-negative".into());
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay.
///
/// Each step applies `p -= lr * wd * p` directly to the parameters, then the
/// bias-corrected moment update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamW {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let decay = 1.0 - self.lr * self.weight_decay;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *p *= decay;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-sample training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Minibatch training with dropout on.
///
/// The shuffle order and every dropout mask come from one ChaCha stream seeded
/// by `cfg.seed`; gradients are accumulated serially, so two runs with the same
/// seed produce bitwise-identical heads and loss traces.
pub fn train(head: &mut PredictorHead, data: &[(Vec<f64>, Vec<f64>)], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let dims = head.dims();
    for (x, y) in data {
        if x.len() != dims.d {
            return Err(Error::DimensionMismatch { what: "embedding", expected: dims.d, found: x.len() });
        }
        if y.len() != dims.n_models {
            return Err(Error::DimensionMismatch { what: "target", expected: dims.n_models, found: y.len() });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(head.params().len(), cfg);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad_acc = vec![0.0; head.params().len()];
    let mut steps = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad_acc.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_sum = 0.0;
            for &idx in batch {
                let (x, y) = &data[idx];
                let mask = head.sample_mask(&mut rng);
                let (loss, grads) = head.backward(x, y, cfg.delta, Some(&mask))?;
                batch_sum += loss;
                for (a, g) in grad_acc.iter_mut().zip(&grads.values) {
                    *a += g;
                }
            }
            if !batch_sum.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: steps });
            }
            let scale = 1.0 / batch.len() as f64;
            grad_acc.iter_mut().for_each(|g| *g *= scale);
            opt.step(head.params_mut(), &grad_acc);
            steps += 1;
            epoch_sum += batch_sum;
        }
        epoch_losses.push(epoch_sum / data.len() as f64);
    }
    Ok(TrainReport { epoch_losses, steps })
}

/// Mean loss over a dataset with dropout off.
pub fn evaluate(head: &PredictorHead, data: &[(Vec<f64>, Vec<f64>)], delta: f64) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (x, y) in data {
        let pred = head.predict(x)?;
        sum += super::ops::huber_loss(&pred, y, delta)?;
    }
    Ok(sum / data.len() as f64)
}
