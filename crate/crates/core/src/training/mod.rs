//! Epoch loop with Adam, fixed-validation early stopping and checkpoints.

mod checkpoint;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{map, LabeledDataset, MappedSet};
use crate::model::{
    Batch, EmbeddingNetwork, LossKind, Model, ModelVariant, NetworkConfig, SiameseMode, VariantName,
};
use crate::nn::{AdamState, LayerSpec, Mode};
use crate::rng::{prng, stream, Stream};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: VariantName,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub patience: usize,
    /// Draw fresh pairs every epoch instead of reusing the first mapping.
    pub resample_per_epoch: bool,
    /// Hinge margin; the variant default applies when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    pub siamese_mode: SiameseMode,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: VariantName::CovNetV1,
            epochs: 200,
            batch_size: 32,
            lr: 1e-3,
            seed: 42,
            patience: 20,
            resample_per_epoch: true,
            margin: None,
            siamese_mode: SiameseMode::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Spec("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Spec("batch_size must be >= 1".into()));
        }
        if self.variant == VariantName::NPair && self.batch_size < 2 {
            return Err(Error::Spec("npair needs batch_size >= 2".into()));
        }
        if self.network.batch_norm && self.batch_size < 2 {
            return Err(Error::Spec("batch norm needs batch_size >= 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Spec(format!("lr must be > 0, got {}", self.lr)));
        }
        if let Some(m) = self.margin {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Spec(format!("margin must be > 0, got {m}")));
            }
        }
        if self.network.embedding_dim < 2 {
            return Err(Error::Spec("embedding_dim must be >= 2".into()));
        }
        if self.network.hidden.contains(&0) {
            return Err(Error::Spec("hidden widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.network.dropout) {
            return Err(Error::Spec(format!(
                "dropout must be in [0, 1), got {}",
                self.network.dropout
            )));
        }
        Ok(())
    }
}

/// Losses of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

impl TrainHistory {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|r| serde_json::to_string(r).expect("epoch record serializes") + "\n")
            .collect()
    }
}

/// Build an untrained model for `config` on `p`-dimensional data with `n_classes` classes.
pub fn build_model(config: &TrainConfig, input_dim: usize, n_classes: usize) -> Result<Model> {
    config.validate()?;
    let mut rng = stream(config.seed, Stream::Init, 0);
    let specs = config.network.layer_specs(input_dim);
    let embedding = EmbeddingNetwork::new(input_dim, &specs, &mut rng)?;
    let variant = ModelVariant::new(
        config.variant,
        n_classes,
        config.network.embedding_dim,
        config.margin,
        config.siamese_mode,
    )?;
    Model::new(variant, embedding, &mut rng)
}

fn has_batch_norm(model: &Model) -> bool {
    let bn = |s: &LayerSpec| matches!(s, LayerSpec::BatchNorm { .. });
    model.embedding().network().specs().iter().any(bn)
        || model.tail().is_some_and(|t| t.specs().iter().any(bn))
}

/// Smallest batch the model can take in train mode.
fn min_batch(model: &Model) -> usize {
    if model.variant().loss == LossKind::NPair || has_batch_norm(model) {
        2
    } else {
        1
    }
}

/// Groups pair positions `order` into batches with at most one pair per class.
///
/// Each class keeps its pairs in `order`; batches take one pair from each class
/// in turn until `batch_size` is reached. Batches with fewer than two pairs are dropped.
pub fn npair_batches(order: &[usize], pair_class: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let n_classes = pair_class.iter().max().map_or(0, |m| m + 1);
    let mut queues: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); n_classes];
    for &k in order {
        queues[pair_class[k]].push_back(k);
    }
    let mut batches = Vec::new();
    let mut next_class = 0;
    loop {
        let mut batch = Vec::new();
        for step in 0..n_classes {
            if batch.len() == batch_size {
                break;
            }
            let c = (next_class + step) % n_classes;
            if let Some(k) = queues[c].pop_front() {
                batch.push(k);
            }
        }
        if batch.len() < 2 {
            break;
        }
        next_class = (next_class + batch.len()) % n_classes.max(1);
        batches.push(batch);
    }
    batches
}

fn make_batches(model: &Model, set: &MappedSet, order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    if model.variant().loss == LossKind::NPair {
        if let MappedSet::Pairs(p) = set {
            return npair_batches(order, &p.labels, batch_size);
        }
    }
    let min = min_batch(model);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= min)
        .map(<[usize]>::to_vec)
        .collect()
}

fn weighted_mean(model: &Model, dataset: &LabeledDataset, set: &MappedSet, batches: &[Vec<usize>]) -> Result<f64> {
    let mut scratch = model.clone();
    let mut rng = prng(0);
    let mut total = 0.0;
    let mut count = 0usize;
    for idx in batches {
        let batch = Batch::gather(dataset, set, idx);
        total += scratch.pass(&batch, Mode::Infer, &mut rng, false)?.loss * idx.len() as f64;
        count += idx.len();
    }
    if count == 0 {
        return Err(Error::contract("no usable batches to evaluate"));
    }
    Ok(total / count as f64)
}

/// Mean per-sample loss over `set` in inference mode, evaluated in batches of `batch_size`.
///
/// For every loss except N-pair the result does not depend on `batch_size`.
pub fn evaluate_loss_batched(
    model: &Model,
    dataset: &LabeledDataset,
    set: &MappedSet,
    batch_size: usize,
) -> Result<f64> {
    model.accepts(set)?;
    if batch_size == 0 {
        return Err(Error::contract("batch_size must be >= 1"));
    }
    let order: Vec<usize> = (0..set.len()).collect();
    let batches = if model.variant().loss == LossKind::NPair {
        make_batches(model, set, &order, batch_size)
    } else {
        order.chunks(batch_size).map(<[usize]>::to_vec).collect()
    };
    weighted_mean(model, dataset, set, &batches)
}

/// [`evaluate_loss_batched`] with one batch per 256 items (N-pair: one pair per class).
pub fn evaluate_loss(model: &Model, dataset: &LabeledDataset, set: &MappedSet) -> Result<f64> {
    let bs = if model.variant().loss == LossKind::NPair {
        dataset.n_classes().max(2)
    } else {
        256
    };
    evaluate_loss_batched(model, dataset, set, bs)
}

/// [`train_with`] without a progress callback.
pub fn train(
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    config: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train_with(train_set, val_set, config, |_| {})
}

/// Train `config.variant`, returning the snapshot with the lowest validation loss.
///
/// `on_epoch` sees every epoch record as soon as it is complete.
pub fn train_with(
    train_set: &LabeledDataset,
    val_set: &LabeledDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train_set.dim() != val_set.dim() || train_set.n_classes() != val_set.n_classes() {
        return Err(Error::contract(format!(
            "train has p={}, C={} but validation has p={}, C={}",
            train_set.dim(),
            train_set.n_classes(),
            val_set.dim(),
            val_set.n_classes()
        )));
    }
    if val_set.is_empty() {
        return Err(Error::Spec("validation set is empty".into()));
    }
    let mut model = build_model(config, train_set.dim(), train_set.n_classes())?;
    let kind = model.variant().mapping;

    let val_mapped = map(kind, val_set, &mut stream(config.seed, Stream::Validation, 0))?;
    model.accepts(&val_mapped)?;
    let val_order: Vec<usize> = (0..val_mapped.len()).collect();
    let val_batches = if model.variant().loss == LossKind::NPair {
        make_batches(&model, &val_mapped, &val_order, config.batch_size)
    } else {
        val_order.chunks(config.batch_size).map(<[usize]>::to_vec).collect()
    };

    let mut adam = AdamState::new(&model.param_shapes());
    let mut dropout_rng = stream(config.seed, Stream::Dropout, 0);
    let mut mapped = None;
    let mut best: Option<(Model, usize, f64)> = None;
    let mut records = Vec::new();
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        if config.resample_per_epoch || mapped.is_none() {
            let index = if config.resample_per_epoch { epoch as u64 } else { 0 };
            mapped = Some(map(kind, train_set, &mut stream(config.seed, Stream::Mapping, index))?);
        }
        let set = mapped.as_ref().expect("mapping present");
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut stream(config.seed, Stream::Shuffle, epoch as u64));
        let batches = make_batches(&model, set, &order, config.batch_size);
        if batches.is_empty() {
            return Err(Error::Spec(format!(
                "training set yields no batch of at least {} items",
                min_batch(&model)
            )));
        }

        let mut total = 0.0;
        let mut count = 0usize;
        for (b, idx) in batches.iter().enumerate() {
            let batch = Batch::gather(train_set, set, idx);
            let out = match model.forward_backward(&batch, Mode::Train, &mut dropout_rng) {
                Err(Error::NonFinite(_)) => return Err(Error::NonFiniteLoss { epoch, batch: b }),
                other => other?,
            };
            if out.grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam.step(&mut model.param_arrays_mut(), &out.grads, config.lr)?;
            total += out.loss * idx.len() as f64;
            count += idx.len();
        }
        let train_loss = total / count as f64;
        let val_loss = match weighted_mean(&model, val_set, &val_mapped, &val_batches) {
            Err(Error::NonFinite(_)) => return Err(Error::NonFiniteLoss { epoch, batch: 0 }),
            other => other?,
        };

        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        records.push(record);

        if best.as_ref().is_none_or(|(_, _, l)| val_loss < *l) {
            best = Some((model.clone(), epoch, val_loss));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (model, best_epoch, best_val_loss) = best.expect("at least one epoch ran");
    Ok((
        model,
        TrainHistory {
            epochs: records,
            best_epoch,
            best_val_loss,
        },
    ))
}
