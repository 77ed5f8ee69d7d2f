//! Link-overlap (Normalized Google Distance) and tf-idf vector-space
//! relatedness, plus the [`Relatedness`] interface consumed by the
//! disambiguator.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::kg::{EntityId, EntityRecord, KnowledgeGraph};
use crate::vectorizer::{tokenize, SparseVector};

/// Symmetric relatedness score in `[0, 1]`.
pub trait Relatedness: Sync {
    fn relatedness(&self, a: &EntityId, b: &EntityId) -> Result<f64>;
}

/// Milne-Witten relatedness from two incoming-link sets and the total number
/// of entities. Natural logarithms; zero whenever the sets do not overlap.
pub fn ngd_from_sets(total: usize, ei: &BTreeSet<EntityId>, ej: &BTreeSet<EntityId>) -> f64 {
    let overlap = ei.intersection(ej).count();
    if overlap == 0 {
        return 0.0;
    }
    let (small, large) = if ei.len() <= ej.len() {
        (ei.len(), ej.len())
    } else {
        (ej.len(), ei.len())
    };
    let numerator = (large as f64).ln() - (overlap as f64).ln();
    let denominator = (total as f64).ln() - (small as f64).ln();
    if denominator <= 0.0 {
        // Both sets span the whole graph, hence are identical.
        return 1.0;
    }
    (1.0 - numerator / denominator).clamp(0.0, 1.0)
}

pub fn ngd_relatedness(kg: &KnowledgeGraph, a: &EntityId, b: &EntityId) -> Result<f64> {
    let ei = kg.incoming_links(a)?;
    let ej = kg.incoming_links(b)?;
    Ok(ngd_from_sets(kg.len(), ei, ej))
}

#[derive(Debug, Clone, Copy)]
pub struct Ngd<'a>(pub &'a KnowledgeGraph);

impl Relatedness for Ngd<'_> {
    fn relatedness(&self, a: &EntityId, b: &EntityId) -> Result<f64> {
        ngd_relatedness(self.0, a, b)
    }
}

/// Tokens of an entity's neighbor surfaces, relation labels, type labels and
/// description.
pub fn content_tokens(kg: &KnowledgeGraph, record: &EntityRecord) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for (relation, object) in &record.facts {
        tokens.extend(tokenize(&kg.get(object)?.surface));
        tokens.extend(tokenize(relation));
    }
    for ty in &record.types {
        tokens.extend(tokenize(ty));
    }
    tokens.extend(tokenize(&record.description));
    Ok(tokens)
}

#[derive(Debug, Clone, Default)]
pub struct TfIdfModel {
    vocabulary: BTreeMap<String, usize>,
    document_frequency: Vec<usize>,
    idf: Vec<f64>,
    vectors: BTreeMap<EntityId, SparseVector>,
}

impl TfIdfModel {
    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn document_frequency(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).map(|&i| self.document_frequency[i])
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.vocabulary.get(token).map(|&i| self.idf[i])
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.vocabulary.get(token).copied()
    }

    /// L2-normalized tf-idf vector of an entity.
    pub fn vector(&self, id: &EntityId) -> Result<&SparseVector> {
        self.vectors
            .get(id)
            .ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    /// tf-idf projection of an arbitrary token bag; tokens outside the
    /// vocabulary are ignored.
    pub fn project<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for token in tokens {
            if let Some(&i) = self.vocabulary.get(token.as_ref()) {
                *tf.entry(i).or_insert(0.0) += 1.0;
            }
        }
        weigh(self.vocabulary.len(), &self.idf, tf)
    }
}

fn weigh(dimension: usize, idf: &[f64], tf: BTreeMap<usize, f64>) -> SparseVector {
    SparseVector::from_pairs(dimension, tf.into_iter().map(|(i, c)| (i, c * idf[i])))
        .expect("vocabulary indices are in range")
        .normalized()
}

pub fn build_tfidf(kg: &KnowledgeGraph) -> Result<TfIdfModel> {
    let mut bags: Vec<(EntityId, Vec<String>)> = Vec::with_capacity(kg.len());
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for record in kg.entities() {
        let tokens = content_tokens(kg, record)?;
        let distinct: BTreeSet<&String> = tokens.iter().collect();
        for token in distinct {
            *df.entry(token.clone()).or_insert(0) += 1;
        }
        bags.push((record.id.clone(), tokens));
    }

    let n = kg.len() as f64;
    let vocabulary: BTreeMap<String, usize> =
        df.keys().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let document_frequency: Vec<usize> = df.values().copied().collect();
    let idf: Vec<f64> = document_frequency
        .iter()
        .map(|&d| (n / d as f64).ln())
        .collect();

    let mut vectors = BTreeMap::new();
    for (id, tokens) in bags {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for token in &tokens {
            *tf.entry(vocabulary[token]).or_insert(0.0) += 1.0;
        }
        vectors.insert(id, weigh(vocabulary.len(), &idf, tf));
    }

    Ok(TfIdfModel {
        vocabulary,
        document_frequency,
        idf,
        vectors,
    })
}

/// Cosine of unit-norm non-negative vectors, clamped against rounding.
pub(crate) fn unit_cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    if a.is_zero() || b.is_zero() {
        return 0.0;
    }
    a.dot(b).clamp(0.0, 1.0)
}

pub fn vsp_relatedness(model: &TfIdfModel, a: &EntityId, b: &EntityId) -> Result<f64> {
    Ok(unit_cosine(model.vector(a)?, model.vector(b)?))
}

impl Relatedness for TfIdfModel {
    fn relatedness(&self, a: &EntityId, b: &EntityId) -> Result<f64> {
        vsp_relatedness(self, a, b)
    }
}

/// Fixed pairwise scores, e.g. precomputed or hand-set relatedness. Lookups
/// are order-independent; missing pairs score 0.
#[derive(Debug, Clone, Default)]
pub struct TableRelatedness {
    scores: BTreeMap<(EntityId, EntityId), f64>,
}

impl TableRelatedness {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: EntityId, b: EntityId, score: f64) {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.scores.insert(key, score);
    }
}

impl Relatedness for TableRelatedness {
    fn relatedness(&self, a: &EntityId, b: &EntityId) -> Result<f64> {
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        Ok(self.scores.get(&key).copied().unwrap_or(0.0))
    }
}
