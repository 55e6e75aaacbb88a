//! Minibatch training of confusion classifiers.
//!
//! Single-task and multi-task training share one loop: a network with one
//! head per splitting in the task list. Multi-task training passes all `K`
//! splittings, single-task training passes one.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use super::{balanced_rate, half_errors, make_splittings, ConfusionCurve, Side, Splitting};
use crate::dataset::{GriddedDataset, Partition};
use crate::error::{usage, Error, Result};
use crate::nn::{log_sigmoid, sigmoid, Adam, AdamConfig, Model, NetworkSpec};
use crate::Rng;

/// Rows per shard when evaluating a partition.
const EVAL_SHARD: usize = 1024;

/// Epoch count, minibatch size and the seed for minibatch shuffling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// Per-head metrics after an epoch; epoch 0 is the untrained network.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean balanced loss over the epoch's minibatches (for epoch 0, the
    /// balanced loss of the initial network on the full training partition).
    /// NaN if no minibatch contained both sides of the splitting.
    pub train_loss: Vec<f64>,
    /// Balanced validation error rate.
    pub valid_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: Adam,
    /// Splitting handled by each head, in head order.
    pub splittings: Vec<Splitting>,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn curve(&self, epoch: usize) -> Result<ConfusionCurve> {
        let record = self.history.get(epoch).ok_or_else(|| usage!("no record for epoch {epoch}"))?;
        ConfusionCurve::from_splittings(&self.splittings, record.valid_error.clone())
    }

    pub fn final_curve(&self) -> ConfusionCurve {
        let last = self.history.last().expect("history always holds epoch 0");
        ConfusionCurve::from_splittings(&self.splittings, last.valid_error.clone()).expect("validated at training time")
    }

    /// Per-head minimum of the validation error over all recorded epochs.
    pub fn min_over_epochs_curve(&self) -> ConfusionCurve {
        let errors = (0..self.splittings.len())
            .map(|h| self.history.iter().map(|r| r.valid_error[h]).fold(f64::INFINITY, f64::min))
            .collect();
        ConfusionCurve::from_splittings(&self.splittings, errors).expect("validated at training time")
    }

    /// Validation error of one head across epochs.
    pub fn trace(&self, head: usize) -> Vec<f64> {
        self.history.iter().map(|r| r.valid_error[head]).collect()
    }

    /// First epoch at which a head's validation error is at or below `threshold`.
    pub fn epochs_to_threshold(&self, head: usize, threshold: f64) -> Option<usize> {
        self.history.iter().find(|r| r.valid_error[head] <= threshold).map(|r| r.epoch)
    }
}

/// One network with `K` heads trained on the mean of the `K` balanced losses.
pub fn train_multi_task(
    dataset: &GriddedDataset,
    spec: &NetworkSpec,
    adam: AdamConfig,
    schedule: Schedule,
) -> Result<TrainOutcome> {
    train_heads(dataset, make_splittings(dataset.grid()), spec, adam, schedule)
}

/// A binary classifier for splitting `node` alone.
pub fn train_single_task(
    dataset: &GriddedDataset,
    node: usize,
    spec: &NetworkSpec,
    adam: AdamConfig,
    schedule: Schedule,
) -> Result<TrainOutcome> {
    let splitting = *make_splittings(dataset.grid())
        .get(node)
        .ok_or_else(|| usage!("node {node} outside 0..{}", dataset.n_splittings()))?;
    train_heads(dataset, vec![splitting], spec, adam, schedule)
}

fn train_heads(
    dataset: &GriddedDataset,
    splittings: Vec<Splitting>,
    spec: &NetworkSpec,
    adam: AdamConfig,
    schedule: Schedule,
) -> Result<TrainOutcome> {
    if spec.output_heads != splittings.len() {
        return Err(usage!("network has {} heads but {} splittings are trained", spec.output_heads, splittings.len()));
    }
    if spec.input_dim != dataset.feature_dim() {
        return Err(usage!("network input {} does not match feature length {}", spec.input_dim, dataset.feature_dim()));
    }
    if schedule.batch_size == 0 {
        return Err(usage!("batch size must be positive"));
    }
    let mut model = Model::new(spec.clone())?;
    let mut optimizer = Adam::new(adam, spec)?;
    let n_points = dataset.grid().len();

    let initial = evaluate(&model, &dataset.train, &splittings, n_points)?;
    let valid = evaluate(&model, &dataset.valid, &splittings, n_points)?;
    let mut history = vec![EpochRecord { epoch: 0, train_loss: initial.loss, valid_error: valid.error }];

    let mut rng = Rng::seed_from_u64(schedule.seed);
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    for epoch in 1..=schedule.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = vec![0.0; splittings.len()];
        let mut loss_batches = vec![0usize; splittings.len()];
        for batch in order.chunks(schedule.batch_size) {
            let x = dataset.train.features.select(Axis(0), batch);
            let grid_index: Vec<usize> = batch.iter().map(|&i| dataset.train.grid_index[i]).collect();
            let cache = model.forward_cached(x.view())?;
            let (losses, logit_grad) = batch_loss(cache.logits.view(), &grid_index, &splittings, n_points);
            for (h, loss) in losses.into_iter().enumerate() {
                if let Some(loss) = loss {
                    if !loss.is_finite() {
                        return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, head {h}")));
                    }
                    loss_sum[h] += loss;
                    loss_batches[h] += 1;
                }
            }
            let grads = model.backward(&cache, logit_grad.view())?;
            optimizer.step(&mut model, &grads)?;
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("non-finite parameters after epoch {epoch}")));
        }
        let train_loss = loss_sum.iter().zip(&loss_batches).map(|(&s, &n)| if n > 0 { s / n as f64 } else { f64::NAN }).collect();
        let valid = evaluate(&model, &dataset.valid, &splittings, n_points)?;
        history.push(EpochRecord { epoch, train_loss, valid_error: valid.error });
    }
    Ok(TrainOutcome { model, adam: optimizer, splittings, history })
}

/// Per-head balanced losses of one minibatch and `∂L/∂logits` of the
/// multi-task loss `L = (1/K) Σ_k L_k`. A head whose splitting has an empty
/// side within the batch contributes neither loss nor gradient.
fn batch_loss(
    logits: ArrayView2<f64>,
    grid_index: &[usize],
    splittings: &[Splitting],
    n_points: usize,
) -> (Vec<Option<f64>>, Array2<f64>) {
    let heads = splittings.len();
    let mut below_prefix = vec![0usize; n_points + 1];
    for &g in grid_index {
        below_prefix[g + 1] += 1;
    }
    for p in 0..n_points {
        below_prefix[p + 1] += below_prefix[p];
    }
    let total = grid_index.len();
    let mut grad = Array2::zeros(logits.dim());
    let mut losses = Vec::with_capacity(heads);
    let scale = 1.0 / heads as f64;
    for (h, split) in splittings.iter().enumerate() {
        let n_below = below_prefix[split.index + 1];
        let n_above = total - n_below;
        if n_below == 0 || n_above == 0 {
            losses.push(None);
            continue;
        }
        let w_below = 0.5 / n_below as f64;
        let w_above = 0.5 / n_above as f64;
        let mut loss = 0.0;
        for (i, &g) in grid_index.iter().enumerate() {
            let z = logits[[i, h]];
            match split.side_of(g) {
                // d/dz [-ln σ(-z)] = σ(z)
                Side::Below => {
                    loss -= w_below * log_sigmoid(-z);
                    grad[[i, h]] = scale * w_below * sigmoid(z);
                }
                // d/dz [-ln σ(z)] = σ(z) - 1
                Side::Above => {
                    loss -= w_above * log_sigmoid(z);
                    grad[[i, h]] = scale * w_above * (sigmoid(z) - 1.0);
                }
            }
        }
        losses.push(Some(loss));
    }
    (losses, grad)
}

struct Evaluation {
    loss: Vec<f64>,
    error: Vec<f64>,
}

#[derive(Clone)]
struct ShardTotals {
    loss_below: Vec<f64>,
    loss_above: Vec<f64>,
    err_below: Vec<usize>,
    err_above: Vec<usize>,
}

/// Balanced loss and error rate of every head on a full partition.
///
/// Rows are split into fixed-size shards evaluated on the current rayon pool
/// and reduced in shard order, so results do not depend on the thread count.
fn evaluate(model: &Model, part: &Partition, splittings: &[Splitting], n_points: usize) -> Result<Evaluation> {
    let heads = splittings.len();
    let n = part.len();
    let shards: Vec<(usize, usize)> = (0..n).step_by(EVAL_SHARD).map(|s| (s, (s + EVAL_SHARD).min(n))).collect();
    let totals = shards
        .par_iter()
        .map(|&(start, end)| -> Result<ShardTotals> {
            let logits = model.logits(part.features.slice(s![start..end, ..]))?;
            let mut t = ShardTotals {
                loss_below: vec![0.0; heads],
                loss_above: vec![0.0; heads],
                err_below: vec![0; heads],
                err_above: vec![0; heads],
            };
            for (row, &g) in logits.outer_iter().zip(&part.grid_index[start..end]) {
                for (h, split) in splittings.iter().enumerate() {
                    let z = row[h];
                    let side = split.side_of(g);
                    let wrong = half_errors(sigmoid(z), side);
                    match side {
                        Side::Below => {
                            t.loss_below[h] -= log_sigmoid(-z);
                            t.err_below[h] += wrong;
                        }
                        Side::Above => {
                            t.loss_above[h] -= log_sigmoid(z);
                            t.err_above[h] += wrong;
                        }
                    }
                }
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;

    let counts = part.counts_per_point(n_points);
    let mut loss = Vec::with_capacity(heads);
    let mut error = Vec::with_capacity(heads);
    for (h, split) in splittings.iter().enumerate() {
        let n_below: usize = counts[split.below()].iter().sum();
        let n_above: usize = counts[split.above()].iter().sum();
        if n_below == 0 || n_above == 0 {
            return Err(usage!("splitting {} has an empty side in the evaluation data", split.index));
        }
        let (mut lb, mut la, mut eb, mut ea) = (0.0, 0.0, 0, 0);
        for t in &totals {
            lb += t.loss_below[h];
            la += t.loss_above[h];
            eb += t.err_below[h];
            ea += t.err_above[h];
        }
        loss.push(0.5 * (lb / n_below as f64 + la / n_above as f64));
        error.push(balanced_rate(eb, n_below, ea, n_above));
    }
    Ok(Evaluation { loss, error })
}
