//! Mini-batch training with decoupled weight decay and a warmup + cosine
//! learning-rate schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::{backward, cross_entropy, extract_embedding, forward};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tokenizer::TokenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Seed of the per-epoch data shuffle.
    pub shuffle_seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            peak_lr: 1e-3,
            min_lr: 1e-5,
            warmup_steps: 50,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            clip_norm: Some(1.0),
            shuffle_seed: 0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.peak_lr > 0.0) || self.min_lr < 0.0 || self.min_lr > self.peak_lr {
            return Err(Error::Config(format!(
                "learning rates must satisfy 0 <= min_lr ({}) <= peak_lr ({}) and peak_lr > 0",
                self.min_lr, self.peak_lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size)
    }

    /// Learning rate at optimizer step `step` (0-based) out of
    /// `total_steps`: linear ramp from 0 to `peak_lr` over `warmup_steps`,
    /// then cosine decay to `min_lr`.
    pub fn learning_rate(&self, step: usize, total_steps: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let span = total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.min_lr + 0.5 * (self.peak_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledSample<T> {
    pub tokens: TokenSequence<T>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub val_rank1: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

/// Decoupled-weight-decay Adam state.
#[derive(Debug, Clone)]
struct AdamW<T> {
    first: ModelParams<T>,
    second: ModelParams<T>,
    decay_mask: Vec<bool>,
    steps: i32,
}

impl<T: Scalar> AdamW<T> {
    fn new(config: &ModelConfig) -> Self {
        // decay projection matrices only; biases, norms and embeddings are exempt
        let decay_mask = ModelParams::<T>::tensor_names(config)
            .iter()
            .map(|n| n.ends_with(".weight") && !n.starts_with("pos_embed"))
            .collect();
        Self {
            first: ModelParams::zeros_like(config),
            second: ModelParams::zeros_like(config),
            decay_mask,
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64, s: &Schedule) {
        self.steps += 1;
        let (b1, b2) = (T::of(s.beta1), T::of(s.beta2));
        let c1 = T::one() - T::of(s.beta1.powi(self.steps));
        let c2 = T::one() - T::of(s.beta2.powi(self.steps));
        let (lr, wd, eps) = (T::of(lr), T::of(s.weight_decay), T::of(s.adam_eps));
        for ((((p, g), m), v), &decay) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
            .zip(&self.decay_mask)
        {
            for (((pv, &gv), mv), vv) in p.data.iter_mut().zip(&g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let update = (*mv / c1) / ((*vv / c2).sqrt() + eps);
                let decay_term = if decay { wd * *pv } else { T::zero() };
                *pv -= lr * (update + decay_term);
            }
        }
    }
}

struct SampleResult<T> {
    loss: T,
    correct: bool,
    grads: ModelParams<T>,
}

fn sample_step<T: Scalar>(params: &ModelParams<T>, sample: &LabeledSample<T>) -> Result<SampleResult<T>> {
    let out = forward(params, &sample.tokens)?;
    let (loss, d_logits) = cross_entropy(&out.logits, sample.label);
    let predicted = out
        .logits
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, &z)| if z > best.1 { (i, z) } else { best })
        .0;
    let zeros = vec![T::zero(); params.config.embedding_dim];
    let (grads, _) = backward(params, &out, &zeros, &d_logits, false);
    Ok(SampleResult {
        loss,
        correct: predicted == sample.label,
        grads,
    })
}

/// Leave-one-out rank-1 accuracy of cosine nearest neighbours: the share
/// of samples whose most similar other sample carries the same label.
pub fn leave_one_out_rank1<T: Scalar>(params: &ModelParams<T>, samples: &[LabeledSample<T>]) -> Result<f64> {
    let embeddings = samples
        .par_iter()
        .map(|s| extract_embedding(params, &s.tokens))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = 0usize;
    for (i, ei) in embeddings.iter().enumerate() {
        let mut best: Option<(T, usize)> = None;
        for (j, ej) in embeddings.iter().enumerate() {
            if i == j {
                continue;
            }
            let s = ei.iter().zip(ej).map(|(&a, &b)| a * b).sum::<T>();
            if best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, j));
            }
        }
        if let Some((_, j)) = best {
            hits += usize::from(samples[j].label == samples[i].label);
        }
    }
    Ok(hits as f64 / samples.len().max(1) as f64)
}

/// Owns the parameters being optimized. If a step fails, the parameters
/// still hold the last successfully applied update.
pub struct Trainer<T: Scalar> {
    params: ModelParams<T>,
    optimizer: AdamW<T>,
    schedule: Schedule,
    step: usize,
    total_steps: usize,
    log: TrainLog,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(params: ModelParams<T>, schedule: Schedule, train_len: usize) -> Result<Self> {
        schedule.validate()?;
        let optimizer = AdamW::new(&params.config);
        let total_steps = schedule.epochs * schedule.steps_per_epoch(train_len);
        Ok(Self {
            params,
            optimizer,
            schedule,
            step: 0,
            total_steps,
            log: TrainLog::default(),
        })
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn into_parts(self) -> (ModelParams<T>, TrainLog) {
        (self.params, self.log)
    }

    pub fn run_epoch(
        &mut self,
        epoch: usize,
        data: &[LabeledSample<T>],
        val: Option<&[LabeledSample<T>]>,
    ) -> Result<EpochRecord> {
        let num_classes = self.params.config.num_classes;
        if let Some(bad) = data.iter().find(|s| s.label >= num_classes) {
            return Err(Error::Validation(format!(
                "training label {} outside [0, {num_classes})",
                bad.label
            )));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.schedule.shuffle_seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        let mut lr = 0.0;
        for batch in order.chunks(self.schedule.batch_size) {
            let params = &self.params;
            let results = batch
                .par_iter()
                .map(|&i| sample_step(params, &data[i]))
                .collect::<Result<Vec<_>>>()?;
            // ordered reduction keeps the update independent of thread count
            let inv = T::one() / T::of_usize(batch.len());
            let mut grads = ModelParams::zeros_like(&self.params.config);
            let mut batch_loss = 0.0;
            for r in &results {
                if !r.loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        step: self.step,
                        message: format!("non-finite loss {} (lr {lr:.3e})", r.loss),
                    });
                }
                grads.add_scaled(&r.grads, inv);
                batch_loss += r.loss.to_f64_lossy();
                correct += usize::from(r.correct);
            }
            if let Some(clip) = self.schedule.clip_norm {
                let norm = grads.l2_norm().to_f64_lossy();
                if !norm.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        step: self.step,
                        message: "non-finite gradient norm".into(),
                    });
                }
                if norm > clip {
                    grads.scale(T::of(clip / norm));
                }
            }
            lr = self.schedule.learning_rate(self.step, self.total_steps);
            let mut candidate = self.params.clone();
            self.optimizer.step(&mut candidate, &grads, lr, &self.schedule);
            if !candidate.is_finite() {
                return Err(Error::Training {
                    epoch,
                    step: self.step,
                    message: "parameters became non-finite".into(),
                });
            }
            self.params = candidate;
            self.step += 1;
            loss_sum += batch_loss;
        }
        let val_rank1 = match val {
            Some(v) if v.len() > 1 => Some(leave_one_out_rank1(&self.params, v)?),
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / data.len().max(1) as f64,
            train_accuracy: correct as f64 / data.len().max(1) as f64,
            val_rank1,
            learning_rate: lr,
        };
        self.log.epochs.push(record.clone());
        Ok(record)
    }
}

/// Train from `init` (or a fresh initialization from `config`) for the
/// full schedule.
pub fn train<T: Scalar>(
    config: &ModelConfig,
    init: Option<ModelParams<T>>,
    data: &[LabeledSample<T>],
    val: Option<&[LabeledSample<T>]>,
    schedule: &Schedule,
) -> Result<(ModelParams<T>, TrainLog)> {
    if data.is_empty() {
        return Err(Error::Validation("empty training set".into()));
    }
    let params = match init {
        Some(p) => {
            if p.config.in_dim_per_token != config.in_dim_per_token
                || p.config.embed_width != config.embed_width
                || p.config.depth != config.depth
            {
                return Err(Error::Config("warm-start checkpoint does not match the model configuration".into()));
            }
            p
        }
        None => ModelParams::init(config)?,
    };
    let mut trainer = Trainer::new(params, schedule.clone(), data.len())?;
    for epoch in 0..schedule.epochs {
        trainer.run_epoch(epoch, data, val)?;
    }
    Ok(trainer.into_parts())
}
