use std::collections::{BTreeMap, BTreeSet};

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{loss, loss_and_gradients, TrainingGroup};
use super::params::{init_params, LayerSizes, NetworkParams};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::miner::TrainingPair;
use crate::vectorizer::{encode_entity, input_dimension, SparseVector, TrigramIndexer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub output_dim: usize,
    /// Softmax smoothing factor.
    pub gamma: f64,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    /// Epochs without validation improvement before stopping. Each such
    /// epoch also halves the learning rate.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden1: 64,
            hidden2: 64,
            output_dim: 64,
            gamma: 10.0,
            learning_rate: 0.02,
            minibatch_size: 1024,
            max_epochs: 20,
            validation_fraction: 0.1,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.hidden1 == 0 || self.hidden2 == 0 || self.output_dim == 0 {
            return bad("layer sizes must be >= 1");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive and finite");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be non-negative and finite");
        }
        if self.minibatch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("minibatch size, epochs and patience must be >= 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub layer_sizes: LayerSizes,
    pub config: TrainConfig,
    pub train_groups: usize,
    pub validation_groups: usize,
    pub initial_train_loss: f64,
    pub initial_validation_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch improved on the initial parameters.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

impl TrainingReport {
    pub fn final_train_loss(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_train_loss, |e| e.train_loss)
    }
}

/// Concatenated feature vectors for a set of entities.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    index: BTreeMap<EntityId, usize>,
    features: Vec<SparseVector>,
    dimension: usize,
}

impl FeatureTable {
    /// Encodes `ids` (deduplicated, in id order) in parallel.
    pub fn encode<'a, I>(kg: &KnowledgeGraph, ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EntityId>,
    {
        let ids: BTreeSet<&EntityId> = ids.into_iter().collect();
        let ids: Vec<&EntityId> = ids.into_iter().collect();
        let indexer = TrigramIndexer;
        let features = ids
            .par_iter()
            .map(|id| encode_entity(kg, &indexer, id).map(|f| f.concatenated))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureTable {
            index: ids.into_iter().cloned().enumerate().map(|(i, id)| (id, i)).collect(),
            features,
            dimension: input_dimension(kg),
        })
    }

    pub fn all(kg: &KnowledgeGraph) -> Result<Self> {
        Self::encode(kg, kg.ids())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Result<&SparseVector> {
        self.index
            .get(id)
            .map(|&i| &self.features[i])
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &SparseVector)> {
        self.index.iter().map(|(id, &i)| (id, &self.features[i]))
    }
}

/// Index form of a [`TrainingPair`] over a [`FeatureTable`].
struct IndexedPair {
    anchor: usize,
    positive: usize,
    negatives: Vec<usize>,
}

fn index_pairs(table: &FeatureTable, pairs: &[TrainingPair]) -> Result<Vec<IndexedPair>> {
    pairs
        .iter()
        .map(|p| {
            p.validate()?;
            let lookup = |id: &EntityId| {
                table
                    .index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::UnknownEntity(id.to_string()))
            };
            Ok(IndexedPair {
                anchor: lookup(&p.anchor)?,
                positive: lookup(&p.positive)?,
                negatives: p.negatives.iter().map(lookup).collect::<Result<_>>()?,
            })
        })
        .collect()
}

struct GroupRefs<'a> {
    anchor: &'a SparseVector,
    positive: &'a SparseVector,
    negatives: Vec<&'a SparseVector>,
}

impl<'a> GroupRefs<'a> {
    fn build(table: &'a FeatureTable, pairs: &[IndexedPair], order: &[usize]) -> Vec<Self> {
        order
            .iter()
            .map(|&i| {
                let p = &pairs[i];
                GroupRefs {
                    anchor: &table.features[p.anchor],
                    positive: &table.features[p.positive],
                    negatives: p.negatives.iter().map(|&n| &table.features[n]).collect(),
                }
            })
            .collect()
    }

    fn group(&self) -> TrainingGroup<'_> {
        TrainingGroup {
            anchor: self.anchor,
            positive: self.positive,
            negatives: &self.negatives,
        }
    }
}

fn mean_loss(params: &NetworkParams, groups: &[GroupRefs<'_>], gamma: f64) -> Result<f64> {
    let batch: Vec<TrainingGroup<'_>> = groups.iter().map(GroupRefs::group).collect();
    let value = loss(params, &batch, gamma)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {value}")));
    }
    Ok(value)
}

/// Minibatch SGD on the softmax loss with held-out model selection.
///
/// The initializer is seeded with `config.seed`; the validation split and the
/// per-epoch shuffles draw from a second stream seeded with `config.seed + 1`.
/// Returns the parameters with the lowest validation loss (the initial
/// parameters if no epoch improved on them).
pub fn train(
    kg: &KnowledgeGraph,
    pairs: &[TrainingPair],
    config: &TrainConfig,
) -> Result<(NetworkParams, TrainingReport)> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no training pairs".into()));
    }
    let referenced = pairs
        .iter()
        .flat_map(|p| std::iter::once(&p.anchor).chain(Some(&p.positive)).chain(&p.negatives));
    let table = FeatureTable::encode(kg, referenced)?;
    let indexed = index_pairs(&table, pairs)?;

    let sizes = LayerSizes::new(
        table.dimension(),
        config.hidden1,
        config.hidden2,
        config.output_dim,
    );
    let mut params = init_params(sizes, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut order: Vec<usize> = (0..indexed.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if indexed.len() < 2 {
        0
    } else {
        ((indexed.len() as f64 * config.validation_fraction).round() as usize)
            .clamp(1, indexed.len() - 1)
    };
    let (val_order, train_order) = order.split_at(n_val);
    let mut train_order = train_order.to_vec();
    let validation = GroupRefs::build(&table, &indexed, val_order);
    let train_all = GroupRefs::build(&table, &indexed, &train_order);
    // With a single group there is nothing to hold out; select on train loss.
    let selection: &[GroupRefs<'_>] = if validation.is_empty() {
        &train_all
    } else {
        &validation
    };

    let initial_train_loss = mean_loss(&params, &train_all, config.gamma)?;
    let initial_validation_loss = mean_loss(&params, selection, config.gamma)?;
    info!(
        "training on {} groups ({} held out), input dim {}, initial loss {:.6}",
        train_order.len(),
        validation.len(),
        sizes.input,
        initial_train_loss
    );

    let mut best = (params.clone(), 0usize, initial_validation_loss);
    let mut rate = config.learning_rate;
    let mut stale = 0;
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        train_order.shuffle(&mut rng);
        let shuffled = GroupRefs::build(&table, &indexed, &train_order);
        for chunk in shuffled.chunks(config.minibatch_size) {
            let batch: Vec<TrainingGroup<'_>> = chunk.iter().map(GroupRefs::group).collect();
            let (batch_loss, grad) = loss_and_gradients(&params, &batch, config.gamma)?;
            if !batch_loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch}: minibatch loss {batch_loss}"
                )));
            }
            params.apply_sgd(&grad, rate);
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: parameters diverged")));
        }

        let train_loss = mean_loss(&params, &train_all, config.gamma)?;
        let validation_loss = mean_loss(&params, selection, config.gamma)?;
        debug!("epoch {epoch}: lr {rate} train {train_loss:.6} validation {validation_loss:.6}");
        epochs.push(EpochRecord {
            epoch,
            learning_rate: rate,
            train_loss,
            validation_loss,
        });

        if validation_loss < best.2 {
            best = (params.clone(), epoch, validation_loss);
            stale = 0;
        } else {
            stale += 1;
            rate *= 0.5;
            if stale >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (best_params, best_epoch, best_validation_loss) = best;
    info!("best epoch {best_epoch}, validation loss {best_validation_loss:.6}");
    let report = TrainingReport {
        layer_sizes: sizes,
        config: config.clone(),
        train_groups: train_all.len(),
        validation_groups: validation.len(),
        initial_train_loss,
        initial_validation_loss,
        epochs,
        best_epoch,
        best_validation_loss,
        stopped_early,
    };
    Ok((best_params, report))
}
