use rayon::prelude::*;

use super::{adam_step, forward, loss_and_grad, loss_sum, AdamState, Batch, MlpParams};
use crate::dataset::Dataset;
use crate::rng::{self, tag};
use crate::{Error, Result};

/// Rows per chunk when evaluating a whole set.
const EVAL_CHUNK: usize = 1000;

/// A labeled set that can write the features of any example on demand.
pub trait LabeledSet: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn write_features(&self, i: usize, out: &mut [f64]);
    fn label(&self, i: usize) -> u8;
    /// Stable identity of example `i`; the shuffle order is a function of
    /// these keys and the shuffle seed only.
    fn key(&self, i: usize) -> u64 {
        i as u64
    }
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl LabeledSet for Dataset {
    fn len(&self) -> usize {
        self.examples.len()
    }
    fn dim(&self) -> usize {
        2 * self.sim.frame_len
    }
    fn write_features(&self, i: usize, out: &mut [f64]) {
        super::featurize_into(&self.examples[i].frame, out);
    }
    fn label(&self, i: usize) -> u8 {
        self.examples[i].label as u8
    }
    fn key(&self, i: usize) -> u64 {
        self.examples[i].example_index
    }
}

/// In-memory feature matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
}

impl LabeledSet for FeatureSet {
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn write_features(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.features[i * self.dim..(i + 1) * self.dim]);
    }
    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            max_epochs: 200,
            patience: 10,
            learning_rate: 5e-4,
            hidden_layers: vec![400, 400],
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("train.batch_size must be >= 1");
        }
        if self.patience == 0 {
            return bad("train.patience must be >= 1");
        }
        if self.max_epochs == 0 {
            return bad("train.max_epochs must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("train.learning_rate must be positive");
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return bad("train.hidden_layers must list at least one positive width");
        }
        Ok(())
    }

    /// Layer widths for an input of `dim` features and two classes.
    pub fn layer_sizes(&self, dim: usize) -> Vec<usize> {
        let mut s = vec![dim];
        s.extend(&self.hidden_layers);
        s.push(2);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }

    pub fn epochs(&self) -> usize {
        self.val_loss.len()
    }

    /// `epoch,train_loss,val_loss` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            out.push_str(&format!("{},{t},{v}\n", i + 1));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
}

fn gather(set: &dyn LabeledSet, indices: &[usize]) -> Result<(Batch, Vec<u8>)> {
    let dim = set.dim();
    let mut data = vec![0.0; indices.len() * dim];
    for (row, &i) in data.chunks_exact_mut(dim).zip(indices) {
        set.write_features(i, row);
    }
    let labels = indices.iter().map(|&i| set.label(i)).collect();
    Ok((Batch::new(indices.len(), dim, data)?, labels))
}

/// Mean cross-entropy over the whole set. Chunks are evaluated in parallel and
/// reduced in index order.
pub fn evaluate_loss(params: &MlpParams, set: &dyn LabeledSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Precondition("cannot evaluate on an empty set".into()));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let sums = idx
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let (b, l) = gather(set, chunk)?;
            loss_sum(params, &b, &l)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(sums.iter().sum::<f64>() / set.len() as f64)
}

/// Fraction of examples whose argmax logit equals the label.
pub fn accuracy(params: &MlpParams, set: &dyn LabeledSet) -> Result<f64> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let k = params.output_dim();
    let hits = idx
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let (b, l) = gather(set, chunk)?;
            let logits = forward(params, &b)?;
            Ok(logits
                .chunks_exact(k)
                .zip(&l)
                .filter(|(row, &lab)| {
                    let arg = row
                        .iter()
                        .enumerate()
                        .fold(0, |best, (j, &z)| if z > row[best] { j } else { best });
                    arg == lab as usize
                })
                .count())
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / set.len().max(1) as f64)
}

fn epoch_order(set: &dyn LabeledSet, shuffle_seed: u64, epoch: usize) -> Vec<usize> {
    let epoch_seed = rng::derive_seed(shuffle_seed, epoch as u64, tag::SHUFFLE);
    let mut keyed: Vec<(u64, u64, usize)> = (0..set.len())
        .map(|i| {
            let k = set.key(i);
            (rng::derive_seed(epoch_seed, k, tag::SHUFFLE), k, i)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Train with early stopping; see [`train_with_progress`].
pub fn train(
    cfg: &TrainConfig,
    train_set: &dyn LabeledSet,
    val_set: &dyn LabeledSet,
    init_seed: u64,
) -> Result<(MlpParams, TrainHistory)> {
    train_with_progress(cfg, train_set, val_set, init_seed, &mut |_| {})
}

/// Mini-batch Adam over shuffled full batches (a trailing partial batch is
/// dropped). After each epoch the validation loss is recorded; training stops
/// once `patience` epochs pass without improvement or at `max_epochs`, and
/// the parameters from the best validation epoch are returned.
pub fn train_with_progress(
    cfg: &TrainConfig,
    train_set: &dyn LabeledSet,
    val_set: &dyn LabeledSet,
    init_seed: u64,
    progress: &mut dyn FnMut(&EpochReport),
) -> Result<(MlpParams, TrainHistory)> {
    cfg.validate()?;
    if train_set.len() < cfg.batch_size {
        return Err(Error::Precondition(format!(
            "training set of {} examples is smaller than one batch of {}",
            train_set.len(),
            cfg.batch_size
        )));
    }
    if val_set.is_empty() {
        return Err(Error::Precondition("validation set is empty".into()));
    }
    if train_set.dim() != val_set.dim() {
        return Err(Error::Precondition(format!(
            "train dim {} != val dim {}",
            train_set.dim(),
            val_set.dim()
        )));
    }

    let mut params = MlpParams::init(&cfg.layer_sizes(train_set.dim()), init_seed);
    let mut adam = AdamState::new(&params, cfg.learning_rate);
    let mut history = TrainHistory::default();
    let mut best = params.clone();
    let n_batches = train_set.len() / cfg.batch_size;

    for epoch in 1..=cfg.max_epochs {
        let order = epoch_order(train_set, cfg.shuffle_seed, epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks_exact(cfg.batch_size).take(n_batches) {
            let (batch, labels) = gather(train_set, chunk)?;
            let (loss, grads) = loss_and_grad(&params, &batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            adam_step(&mut params, &grads, &mut adam)?;
            epoch_loss += loss;
        }
        let val = evaluate_loss(&params, val_set)?;
        if !val.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, loss: val });
        }
        history.train_loss.push(epoch_loss / n_batches as f64);
        history.val_loss.push(val);
        if history.best_epoch == 0 || val < history.best_val_loss() {
            history.best_epoch = epoch;
            best = params.clone();
        }
        progress(&EpochReport {
            epoch,
            train_loss: epoch_loss / n_batches as f64,
            val_loss: val,
            best_epoch: history.best_epoch,
        });
        if epoch - history.best_epoch >= cfg.patience {
            break;
        }
    }
    Ok((best, history))
}
