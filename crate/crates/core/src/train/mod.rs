//! MEMprop training: membrane-potential NLL loss, backpropagation through
//! the unrolled network tape, Adam, evaluation, checkpoints and export of
//! trained weights as conductance pairs.

mod adam;
mod checkpoint;
mod export;
mod loss;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMeta, NamedTensor, CHECKPOINT_VERSION};
pub use export::{export_weights, ExportConfig, ExportReport, ExportedLayer};
pub use loss::{loss_nll_membrane, loss_nll_tape};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{gradcheck, GradcheckReport, Shape, Tape};
use crate::data::{make_batches, EventDataset, ImageDataset};
use crate::network::{MsnnModel, NetworkError, Stimulus};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite value at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Simulation steps per training sample.
    pub steps: usize,
    /// Simulation steps per evaluation sample; `None` uses `steps`.
    pub eval_steps: Option<usize>,
    pub seed: u64,
    /// Softmax scale applied to membrane potentials (1/V).
    pub softmax_beta: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training set held out for validation.
    pub eval_fraction: f64,
    /// Worker threads for per-sample forward/backward; 0 uses all cores.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr: 1e-4,
            steps: 100,
            eval_steps: None,
            seed: 0,
            softmax_beta: 100.0,
            patience: 5,
            eval_fraction: 0.1,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and >= 0");
        }
        if self.steps == 0 || self.eval_steps == Some(0) {
            return bad("steps must be >= 1");
        }
        if !(self.softmax_beta.is_finite() && self.softmax_beta > 0.0) {
            return bad("softmax_beta must be > 0");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must be in [0, 1)");
        }
        Ok(())
    }

    pub fn eval_steps(&self) -> usize {
        self.eval_steps.unwrap_or(self.steps)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| TrainError::Config(format!("worker pool: {e}")))
    }
}

/// Labelled samples the model can consume.
pub trait Samples: Sync {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> usize;
    fn stimulus(&self, index: usize) -> Stimulus<'_>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Samples for ImageDataset {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn stimulus(&self, index: usize) -> Stimulus<'_> {
        Stimulus::Static(&self.images[index])
    }
}

impl Samples for EventDataset {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn stimulus(&self, index: usize) -> Stimulus<'_> {
        Stimulus::Events {
            counts: &self.samples[index].counts,
            frames: self.shape.frames,
            features: self.shape.features(),
        }
    }
}

/// A view of selected rows of another sample set.
pub struct Subset<'a, S: Samples + ?Sized> {
    pub inner: &'a S,
    pub indices: Vec<usize>,
}

impl<S: Samples + ?Sized> Samples for Subset<'_, S> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn label(&self, index: usize) -> usize {
        self.inner.label(self.indices[index])
    }

    fn stimulus(&self, index: usize) -> Stimulus<'_> {
        self.inner.stimulus(self.indices[index])
    }
}

/// Loss and crossbar weight gradients for one sample.
pub fn sample_gradient(
    model: &MsnnModel,
    stimulus: &Stimulus,
    label: usize,
    steps: usize,
    beta: f64,
) -> std::result::Result<(f64, Vec<Vec<f64>>), NetworkError> {
    if label >= model.classes() {
        return Err(NetworkError::Dimension {
            expected: model.classes(),
            got: label,
        });
    }
    let drive = model.drive(stimulus, steps)?;
    let mut tape = Tape::with_capacity(steps * 80);
    let weights = model.weight_leaves(&mut tape)?;
    let outputs = model.forward_tape(&mut tape, &weights, &drive)?;
    let loss = loss_nll_tape(&mut tape, &outputs, label, beta)?;
    let mut grads = tape.backward(loss, &weights)?;
    let grads = weights
        .iter()
        .map(|w| grads.take(*w).expect("weight leaf gradient"))
        .collect();
    Ok((tape.scalar(loss), grads))
}

/// Mean loss and mean gradient over `indices`, reduced in index order.
pub fn batch_gradient<S: Samples + ?Sized>(
    model: &MsnnModel,
    data: &S,
    indices: &[usize],
    steps: usize,
    beta: f64,
) -> std::result::Result<(f64, Vec<Vec<f64>>), NetworkError> {
    let per_sample: Vec<_> = indices
        .par_iter()
        .map(|&i| sample_gradient(model, &data.stimulus(i), data.label(i), steps, beta))
        .collect::<std::result::Result<_, _>>()?;
    let n = indices.len() as f64;
    let mut grads: Vec<Vec<f64>> = model.weights().iter().map(|w| vec![0.0; w.len()]).collect();
    let mut loss = 0.0;
    for (l, g) in per_sample {
        loss += l;
        for (acc, part) in grads.iter_mut().zip(&g) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    for g in grads.iter_mut().flatten() {
        *g /= n;
    }
    Ok((loss / n, grads))
}

/// Check the loss gradient with respect to every crossbar weight against
/// central differences.
pub fn gradcheck_model(
    model: &MsnnModel,
    stimulus: &Stimulus,
    label: usize,
    steps: usize,
    beta: f64,
    eps: f64,
    tol: f64,
) -> std::result::Result<GradcheckReport, NetworkError> {
    let drive = model.drive(stimulus, steps)?;
    let leaves: Vec<(Vec<f64>, Shape)> = model
        .stages
        .iter()
        .map(|s| (s.crossbar.weights.clone(), Shape::Matrix(s.crossbar.n_out, s.crossbar.n_in)))
        .collect();
    gradcheck::<_, NetworkError>(
        |tape, weights| {
            let outputs = model.forward_tape(tape, weights, &drive)?;
            Ok(loss_nll_tape(tape, &outputs, label, beta)?)
        },
        &leaves,
        eps,
        tol,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Argmax of the time-summed output membrane potential.
    #[default]
    Membrane,
    /// Argmax of output spike counts, ties broken by the membrane readout.
    Spikes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<usize>,
    /// Mean fraction of (neuron, step) pairs starting a spike.
    pub activity: f64,
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

/// Predicted class for one sample.
pub fn predict(
    model: &MsnnModel,
    stimulus: &Stimulus,
    steps: usize,
    readout: Readout,
) -> std::result::Result<(usize, f64), NetworkError> {
    let trace = model.forward(stimulus, steps, false)?;
    let summed = trace.summed_output();
    let class = match readout {
        Readout::Membrane => argmax(&summed),
        Readout::Spikes => {
            let counts = trace.spike_counts.last().expect("at least one layer");
            let top = counts.iter().copied().max().unwrap_or(0);
            let mut best: Option<usize> = None;
            for (k, &c) in counts.iter().enumerate() {
                if c == top && best.map_or(true, |b| summed[k] > summed[b]) {
                    best = Some(k);
                }
            }
            best.unwrap_or(0)
        }
    };
    Ok((class, trace.activity()))
}

/// Tape-free accuracy and confusion matrix.
pub fn evaluate<S: Samples + ?Sized>(
    model: &MsnnModel,
    data: &S,
    steps: usize,
    readout: Readout,
) -> std::result::Result<EvalReport, NetworkError> {
    let classes = model.classes();
    let results: Vec<(usize, f64)> = (0..data.len())
        .into_par_iter()
        .map(|i| predict(model, &data.stimulus(i), steps, readout))
        .collect::<std::result::Result<_, _>>()?;
    let mut confusion = vec![vec![0; classes]; classes];
    let mut correct = 0;
    let mut activity = 0.0;
    for (i, &(p, a)) in results.iter().enumerate() {
        let y = data.label(i);
        if y < classes {
            confusion[y][p] += 1;
        }
        correct += usize::from(y == p);
        activity += a;
    }
    let n = data.len().max(1) as f64;
    Ok(EvalReport {
        accuracy: correct as f64 / n,
        confusion,
        predictions: results.into_iter().map(|(p, _)| p).collect(),
        activity: activity / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    /// Mean batch loss; `None` for epoch 0.
    pub train_loss: Option<f64>,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Weights with the best validation accuracy.
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// [`train_with`] without a progress callback.
pub fn train<S: Samples + ?Sized>(
    model: &mut MsnnModel,
    data: &S,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(model, data, cfg, |_| {})
}

/// Train `model` in place. A seeded `eval_fraction` of `data` is held out
/// for validation (the whole set is used when the fraction rounds to zero
/// samples). On return the model holds the best weights seen, including
/// the untrained ones as epoch 0.
pub fn train_with<S: Samples + ?Sized>(
    model: &mut MsnnModel,
    data: &S,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord) + Send,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let pool = cfg.pool()?;
    pool.install(|| train_inner(model, data, cfg, &mut on_epoch))
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let held = (fraction * n as f64).round() as usize;
    if held == 0 || held >= n {
        return ((0..n).collect(), (0..n).collect());
    }
    let order: Vec<usize> = make_batches(n, n, seed ^ 0x5eed_5a1e, true)
        .into_iter()
        .flat_map(|b| b.indices)
        .collect();
    let mut train = order[held..].to_vec();
    let mut val = order[..held].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn train_inner<S: Samples + ?Sized>(
    model: &mut MsnnModel,
    data: &S,
    cfg: &TrainConfig,
    on_epoch: &mut (dyn FnMut(&EpochRecord) + Send),
) -> Result<TrainOutcome> {
    let (train_idx, val_idx) = split_indices(data.len(), cfg.eval_fraction, cfg.seed);
    let val = Subset {
        inner: data,
        indices: val_idx,
    };
    let eval_steps = cfg.eval_steps();
    let validate = |m: &MsnnModel| -> Result<f64> {
        Ok(evaluate(m, &val, eval_steps, Readout::Membrane)?.accuracy)
    };

    let sizes: Vec<usize> = model.weights().iter().map(|w| w.len()).collect();
    let mut adam = AdamState::new(&sizes);
    let mut history = Vec::with_capacity(cfg.epochs + 1);

    let init = EpochRecord {
        epoch: 0,
        train_loss: None,
        val_acc: validate(model)?,
    };
    on_epoch(&init);
    let mut best_acc = init.val_acc;
    let mut best_epoch = 0;
    let mut best_weights: Vec<Vec<f64>> = model.weights().iter().map(|w| w.to_vec()).collect();
    history.push(init);
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let batches = make_batches(train_idx.len(), cfg.batch_size, cfg.seed.wrapping_add(epoch as u64), true);
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let rows: Vec<usize> = batch.indices.iter().map(|&k| train_idx[k]).collect();
            let diverged = |detail: String| TrainError::Diverged { epoch, batch: b, detail };
            let (loss, grads) = batch_gradient(model, data, &rows, cfg.steps, cfg.softmax_beta)
                .map_err(|e| diverged(e.to_string()))?;
            if !loss.is_finite() {
                return Err(diverged(format!("loss = {loss}")));
            }
            adam_step(&mut model.weights_mut(), &grads, &mut adam, cfg.lr).map_err(|e| diverged(e.to_string()))?;
            loss_sum += loss;
        }
        let record = EpochRecord {
            epoch,
            train_loss: Some(loss_sum / batches.len() as f64),
            val_acc: validate(model)?,
        };
        on_epoch(&record);
        if record.val_acc > best_acc {
            best_acc = record.val_acc;
            best_epoch = epoch;
            best_weights = model.weights().iter().map(|w| w.to_vec()).collect();
            stale = 0;
        } else {
            stale += 1;
        }
        history.push(record);
        if stale >= cfg.patience && epoch < cfg.epochs {
            stopped_early = true;
            break;
        }
    }

    for (w, best) in model.weights_mut().into_iter().zip(&best_weights) {
        w.clone_from(best);
    }
    let best = Checkpoint::from_model(model, Some(cfg.clone()), history.clone());
    Ok(TrainOutcome {
        history,
        best,
        best_epoch,
        stopped_early,
    })
}
