use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::losses::{loss_with_grad, LossKind, Normals};
use crate::par::Execution;

use super::adamw::{AdamW, AdamWConfig};
use super::model::{ModelOutput, Network};

/// One training pair: a normalized map (flat `Θ×L`) and its targets.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub map: &'a [f64],
    pub targets: Normals,
}

impl<'a> Example<'a> {
    pub fn from_sample(s: &'a Sample) -> Self {
        Example {
            map: &s.map.values,
            targets: s.targets(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Seeds the shuffling stream.
    pub seed: u64,
    /// Threshold used for the detection rate logged each epoch.
    pub gamma: f64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::regularized(0.05),
            epochs: 200,
            patience: 20,
            batch_size: 50,
            optimizer: AdamWConfig::default(),
            seed: 0,
            gamma: 0.5,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Percent of validation walls with score above the threshold.
    pub detection_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: Vec<f64>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainResult {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch]
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,detection_rate\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.detection_rate));
    }
    out
}

/// Loss and summed parameter gradient over one batch. Per-sample work runs
/// under `exec`; the gradient sum is taken in batch order.
pub fn batch_gradient(net: &Network, params: &[f64], batch: &[Example], loss: &LossKind, exec: Execution) -> Result<(f64, Vec<f64>)> {
    let caches = exec.try_map_range(batch.len(), |i| net.forward_train(params, batch[i].map))?;
    let normals: Vec<Normals> = caches.iter().map(|c| c.output().normals).collect();
    let detection: Vec<[f64; 4]> = caches.iter().map(|c| c.output().detection).collect();
    let targets: Vec<Normals> = batch.iter().map(|e| e.targets).collect();
    let (value, grad) = loss_with_grad(loss, &normals, &detection, &targets);
    if !value.value.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    let per_sample =
        exec.try_map_range(batch.len(), |i| net.backward(params, &caches[i], &grad.d_detection[i], &grad.d_normals[i]))?;
    let mut total = vec![0.0; params.len()];
    for g in &per_sample {
        total.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok((value.value, total))
}

pub fn predict(net: &Network, params: &[f64], maps: &[&[f64]], exec: Execution) -> Result<Vec<ModelOutput>> {
    exec.try_map_range(maps.len(), |i| net.forward(params, maps[i]))
}

/// Batch-size-weighted mean loss over `examples` split into consecutive
/// batches, and the detection rate at `gamma`.
pub fn evaluate_loss(
    net: &Network,
    params: &[f64],
    examples: &[Example],
    loss: &LossKind,
    batch_size: usize,
    gamma: f64,
    exec: Execution,
) -> Result<(f64, f64)> {
    let maps: Vec<&[f64]> = examples.iter().map(|e| e.map).collect();
    let outputs = predict(net, params, &maps, exec)?;
    let mut weighted = 0.0;
    let mut detected = 0usize;
    for (chunk_out, chunk_ex) in outputs.chunks(batch_size).zip(examples.chunks(batch_size)) {
        let normals: Vec<Normals> = chunk_out.iter().map(|o| o.normals).collect();
        let detection: Vec<[f64; 4]> = chunk_out.iter().map(|o| o.detection).collect();
        let targets: Vec<Normals> = chunk_ex.iter().map(|e| e.targets).collect();
        weighted += loss_with_grad(loss, &normals, &detection, &targets).0.value * chunk_out.len() as f64;
        detected += detection.iter().flatten().filter(|&&d| d > gamma).count();
    }
    let n = examples.len().max(1) as f64;
    Ok((weighted / n, 100.0 * detected as f64 / (4.0 * n)))
}

/// Mini-batch AdamW training with early stopping on the validation loss.
///
/// Each epoch reshuffles the training set from a stream seeded by
/// `config.seed`. Training stops once `patience` epochs pass without a new
/// best validation loss; the best parameters are returned. A non-finite loss
/// or gradient aborts with [`Error::Diverged`].
pub fn train(
    net: &Network,
    init: Vec<f64>,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainResult> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut params = init;
    let mut opt = AdamW::new(config.optimizer, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = idx.iter().map(|&i| train_set[i]).collect();
            let diverged = || Error::Diverged { epoch, batch: b };
            let (value, grads) = batch_gradient(net, &params, &batch, &config.loss, config.exec).map_err(|e| match e {
                Error::NonFinite(_) => diverged(),
                other => other,
            })?;
            opt.step(&mut params, &grads).map_err(|_| diverged())?;
            weighted += value * batch.len() as f64;
        }
        let (val_loss, detection_rate) =
            evaluate_loss(net, &params, val_set, &config.loss, config.batch_size, config.gamma, config.exec).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch,
                    batch: train_set.len().div_ceil(config.batch_size),
                },
                other => other,
            })?;
        let record = EpochRecord {
            epoch,
            train_loss: weighted / train_set.len() as f64,
            val_loss,
            detection_rate,
        };
        on_epoch(&record);
        history.push(record);
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    Ok(TrainResult {
        params: best.2,
        history,
        best_epoch: best.1,
    })
}
