//! Loss, optimizer, epoch loop, seeding, and metric tracking.
//!
//! The protocol: Adam (lr 2e-4, standard betas), batches of 100, softmax
//! cross-entropy, a full shuffled pass per epoch with gradients averaged per
//! batch, test accuracy evaluated every epoch, and best-epoch selection over
//! the history.
//!
//! Within a batch, samples are processed by parallel workers over fixed
//! contiguous chunks and the per-chunk gradients are reduced in chunk order,
//! so results are reproducible for a given worker count.

use crate::data_io::{BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::layers::{Model, ModelGrad};
use crate::precision::Real;
use rayon::prelude::*;

/// Adam hyperparameters. Only the learning rate is protocol-specific; the
/// rest are the standard defaults.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_learning_rate(lr: f64) -> Self {
        AdamParams {
            learning_rate: lr,
            ..Default::default()
        }
    }
}

/// First/second-moment accumulators shaped like the model parameters, plus
/// the shared step counter.
pub struct AdamState<T: Real> {
    params: AdamParams,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &Model<T>, params: AdamParams) -> Self {
        let shapes: Vec<usize> = model.param_blocks().iter().map(|b| b.len()).collect();
        AdamState {
            params,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update; increments the step counter.
    pub fn step(&mut self, model: &mut Model<T>, grad: &ModelGrad<T>) -> Result<()> {
        let blocks = model.param_blocks_mut();
        if blocks.len() != grad.blocks().len() {
            return Err(Error::dimension("adam blocks", blocks.len(), grad.blocks().len()));
        }
        self.t += 1;
        let b1 = T::from_f64(self.params.beta1);
        let b2 = T::from_f64(self.params.beta2);
        let one = T::one();
        let lr = T::from_f64(self.params.learning_rate);
        let eps = T::from_f64(self.params.epsilon);
        let m_corr = T::from_f64(1.0 - self.params.beta1.powi(self.t as i32));
        let v_corr = T::from_f64(1.0 - self.params.beta2.powi(self.t as i32));

        for ((params, g_block), (m_block, v_block)) in blocks
            .into_iter()
            .zip(grad.blocks())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if params.len() != g_block.len() {
                return Err(Error::dimension("adam block size", params.len(), g_block.len()));
            }
            for i in 0..params.len() {
                let g = g_block[i];
                m_block[i] = b1 * m_block[i] + (one - b1) * g;
                v_block[i] = b2 * v_block[i] + (one - b2) * g * g;
                let m_hat = m_block[i] / m_corr;
                let v_hat = v_block[i] / v_corr;
                params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Softmax cross-entropy with max-subtraction; returns the loss and the
/// logit gradient `softmax - onehot`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::dimension("cross-entropy label", format!("< {}", logits.len()), label));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::numeric("cross_entropy", "non-finite logits"));
    }
    let max = logits.iter().fold(logits[0], |a, &b| a.max(b));
    let mut exp_sum = T::zero();
    let mut grad: Vec<T> = Vec::with_capacity(logits.len());
    for &l in logits {
        let e = (l - max).exp();
        exp_sum = exp_sum + e;
        grad.push(e);
    }
    let loss = exp_sum.ln() - (logits[label] - max);
    for (i, g) in grad.iter_mut().enumerate() {
        *g = *g / exp_sum;
        if i == label {
            *g = *g - T::one();
        }
    }
    Ok((loss, grad))
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epoch-loop settings. `workers` fixes both the parallelism and the
/// gradient reduction chunking.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub workers: usize,
}

/// One row of the metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_acc,test_acc,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.3}",
            self.epoch, self.train_loss, self.train_acc, self.test_acc, self.seconds
        )
    }
}

struct ChunkResult<T: Real> {
    grad: ModelGrad<T>,
    loss_sum: f64,
    correct: usize,
}

fn process_chunk<T: Real>(
    model: &Model<T>,
    data: &Dataset<T>,
    indices: &[usize],
) -> Result<ChunkResult<T>> {
    let mut grad = ModelGrad::zeros_like(model);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for &idx in indices {
        let sample = data.sample(idx);
        let (logits, trace) = model.forward_traced(sample.planes)?;
        let (loss, logit_grad) = cross_entropy(&logits, sample.label as usize)
            .map_err(|e| Error::numeric("train batch", format!("sample {idx}: {e}")))?;
        loss_sum += loss.as_f64();
        if argmax(&logits) == sample.label as usize {
            correct += 1;
        }
        let sample_grad = model.backward(&trace, &logit_grad)?;
        grad.add_assign(&sample_grad);
    }
    Ok(ChunkResult {
        grad,
        loss_sum,
        correct,
    })
}

fn chunk_indices(batch: &[usize], workers: usize) -> Vec<&[usize]> {
    let workers = workers.max(1).min(batch.len().max(1));
    let chunk = batch.len().div_ceil(workers);
    batch.chunks(chunk.max(1)).collect()
}

/// One full shuffled pass: per batch, average the per-sample gradients and
/// take one optimizer step. Returns (mean train loss, train accuracy).
pub fn train_epoch<T: Real>(
    model: &mut Model<T>,
    optimizer: &mut AdamState<T>,
    train: &Dataset<T>,
    config: &TrainConfig,
    epoch: usize,
    pool: &rayon::ThreadPool,
) -> Result<(f64, f64)> {
    if train.len() == 0 {
        return Err(Error::config("training set is empty"));
    }
    let plan = BatchPlan::shuffled(train.len(), config.batch_size, config.seed, epoch as u64)?;
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for batch in plan.batches() {
        let chunks = chunk_indices(batch, config.workers);
        let results: Vec<Result<ChunkResult<T>>> = pool.install(|| {
            chunks
                .par_iter()
                .map(|chunk| process_chunk(model, train, chunk))
                .collect()
        });
        let mut batch_grad: Option<ModelGrad<T>> = None;
        for result in results {
            let chunk = result?;
            loss_sum += chunk.loss_sum;
            correct += chunk.correct;
            match batch_grad.as_mut() {
                None => batch_grad = Some(chunk.grad),
                Some(acc) => acc.add_assign(&chunk.grad),
            }
        }
        let mut grad = batch_grad.expect("non-empty batch");
        grad.scale(T::from_f64(1.0 / batch.len() as f64));
        optimizer.step(model, &grad)?;
    }
    let n = train.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Argmax classification accuracy and mean loss; does not mutate anything.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    data: &Dataset<T>,
    workers: usize,
    pool: &rayon::ThreadPool,
) -> Result<(f64, f64)> {
    if data.len() == 0 {
        return Err(Error::config("evaluation set is empty"));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let chunks = chunk_indices(&indices, workers.max(1) * 4);
    let results: Vec<Result<(f64, usize)>> = pool.install(|| {
        chunks
            .par_iter()
            .map(|chunk| {
                let mut loss_sum = 0.0;
                let mut correct = 0usize;
                for &idx in chunk.iter() {
                    let sample = data.sample(idx);
                    let logits = model.forward(sample.planes)?;
                    let (loss, _) = cross_entropy(&logits, sample.label as usize)?;
                    loss_sum += loss.as_f64();
                    if argmax(&logits) == sample.label as usize {
                        correct += 1;
                    }
                }
                Ok((loss_sum, correct))
            })
            .collect()
    });
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for r in results {
        let (l, c) = r?;
        loss_sum += l;
        correct += c;
    }
    let n = data.len() as f64;
    Ok((correct as f64 / n, loss_sum / n))
}

/// Maximum test accuracy over the history and the earliest epoch reaching it.
pub fn best_epoch_selection(history: &[EpochMetrics]) -> Result<(f64, usize)> {
    if history.is_empty() {
        return Err(Error::Summary {
            message: "empty epoch history".into(),
        });
    }
    let mut best = &history[0];
    for m in history.iter().skip(1) {
        if m.test_acc > best.test_acc {
            best = m;
        }
    }
    Ok((best.test_acc, best.epoch))
}

/// Mean and sample standard deviation (n-1 divisor) over per-seed best
/// accuracies.
pub fn multi_seed_summary(best_accuracies: &[f64]) -> Result<(f64, f64)> {
    let n = best_accuracies.len();
    if n < 2 {
        return Err(Error::Summary {
            message: format!("need at least 2 seeds for a summary, got {n}"),
        });
    }
    let mean = best_accuracies.iter().sum::<f64>() / n as f64;
    let var = best_accuracies
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    Ok((mean, var.sqrt()))
}

/// Thread pool with a fixed worker count.
pub fn make_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("failed to build thread pool: {e}")))
}
