//! Deep semantic relatedness model: a bias-free sparse projection followed by
//! two tanh layers, trained with a softmax over cosine similarities.

mod checkpoint;
mod network;
mod params;
mod train;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, report_path, save_checkpoint, write_checkpoint, Checkpoint,
    FORMAT_VERSION, MAGIC,
};
pub use network::{
    cosine, dsrm_relatedness, forward, gradients, loss, loss_and_gradients, posterior, softmax,
    ForwardTrace, TrainingGroup, DEGENERATE_NORM,
};
pub use params::{init_params, Gradients, LayerSizes, NetworkParams, Tensor};
pub use train::{train, EpochRecord, FeatureTable, TrainConfig, TrainingReport};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::relatedness::Relatedness;

/// Latent vectors of every entity of a graph under fixed parameters.
#[derive(Debug, Clone)]
pub struct DsrmEmbeddings {
    vectors: BTreeMap<EntityId, Vec<f64>>,
}

impl DsrmEmbeddings {
    pub fn compute(kg: &KnowledgeGraph, params: &NetworkParams) -> Result<Self> {
        let table = FeatureTable::all(kg)?;
        if table.dimension() != params.sizes().input {
            return Err(Error::DimensionMismatch {
                expected: params.sizes().input,
                actual: table.dimension(),
            });
        }
        let rows: Vec<(&EntityId, &crate::vectorizer::SparseVector)> = table.iter().collect();
        let vectors = rows
            .par_iter()
            .map(|(id, x)| forward(params, x).map(|t| ((*id).clone(), t.y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(DsrmEmbeddings {
            vectors: vectors.into_iter().collect(),
        })
    }

    pub fn vector(&self, id: &EntityId) -> Result<&[f64]> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    /// Cosine in `[-1, 1]`.
    pub fn cosine(&self, a: &EntityId, b: &EntityId) -> Result<f64> {
        Ok(cosine(self.vector(a)?, self.vector(b)?))
    }
}

/// Negative cosines count as unrelated.
impl Relatedness for DsrmEmbeddings {
    fn relatedness(&self, a: &EntityId, b: &EntityId) -> Result<f64> {
        Ok(self.cosine(a, b)?.clamp(0.0, 1.0))
    }
}
