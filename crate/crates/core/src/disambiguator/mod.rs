//! Unsupervised collective entity disambiguation.
//!
//! Each document's mentions expand into mention-candidate hypotheses scored by
//! prior popularity and context similarity. Confident hypotheses become seeds,
//! coherence edges join related candidates of different mentions, and graph
//! regularization propagates seed evidence before every mention takes its
//! best-scoring candidate.

mod graph;
mod solver;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use graph::{build_graph, GraphNode, RelationalGraph, Relevance, SameDocument};
pub use solver::{objective, regularize, regularize_observed, Solution};

use crate::error::{Error, Result};
use crate::kg::{AnchorDocument, EntityId, MentionDictionary};
use crate::relatedness::{unit_cosine, Relatedness, TfIdfModel};
use crate::vectorizer::tokenize;

/// Prior threshold of the high-confidence seed heuristic.
pub const SEED_PRIOR_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReguConfig {
    /// Weight of fidelity to initial scores against graph smoothness.
    pub mu: f64,
    /// Nearest neighbors kept per node.
    pub k: usize,
    /// Mix of prior popularity vs context similarity in initial scores.
    pub lambda_prior: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Relatedness must exceed this for an edge.
    pub sr_min: f64,
    /// Candidates kept per mention, by prior.
    pub top_n: usize,
}

impl Default for ReguConfig {
    fn default() -> Self {
        ReguConfig {
            mu: 0.8,
            k: 20,
            lambda_prior: 0.5,
            tol: 1e-9,
            max_iter: 10_000,
            sr_min: 0.0,
            top_n: 30,
        }
    }
}

impl ReguConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be positive");
        }
        if self.k == 0 {
            return bad("k must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_prior) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("tol must be positive and max_iter >= 1");
        }
        if self.top_n == 0 {
            return bad("top_n must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub doc_id: String,
    pub offset: usize,
    pub surface: String,
    pub context_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entity: EntityId,
    pub prior: f64,
}

/// Dictionary candidates of `surface` by (prior desc, id asc), at most
/// `top_n`.
pub fn generate_candidates(dictionary: &MentionDictionary, surface: &str, top_n: usize) -> Vec<Candidate> {
    let total = dictionary.total(surface);
    if total == 0 {
        return Vec::new();
    }
    // Dictionary order (count desc, id asc) is prior order.
    dictionary
        .candidates(surface)
        .iter()
        .take(top_n)
        .map(|(entity, count)| Candidate {
            entity: entity.clone(),
            prior: *count as f64 / total as f64,
        })
        .collect()
}

/// tf-idf cosine between an entity's content and the mention context.
pub fn context_similarity(model: &TfIdfModel, entity: &EntityId, mention: &Mention) -> Result<f64> {
    let entity_vec = model.vector(entity)?;
    let context = model.project(&mention.context_tokens);
    Ok(unit_cosine(entity_vec, &context))
}

pub fn initial_ranking(prior: f64, context: f64, lambda_prior: f64) -> f64 {
    lambda_prior * prior + (1.0 - lambda_prior) * context
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub entity: EntityId,
    pub prior: f64,
    pub context: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MentionCandidates {
    pub mention: Mention,
    /// In prior order.
    pub candidates: Vec<ScoredCandidate>,
}

fn by_prior_then_id(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    b.prior.total_cmp(&a.prior).then_with(|| a.entity.cmp(&b.entity))
}

/// Seed scores per candidate: `Some(score)` fixes the hypothesis.
///
/// A single-candidate mention seeds that candidate at 1.0. A mention whose
/// top-prior candidate has prior >= 0.95 and also has the highest context
/// similarity seeds every candidate: 1.0 for that one, 0.0 for the rest.
pub fn mine_seeds(groups: &[MentionCandidates]) -> Vec<Vec<Option<f64>>> {
    groups
        .iter()
        .map(|group| {
            let cands = &group.candidates;
            let mut seeds = vec![None; cands.len()];
            if cands.len() == 1 {
                seeds[0] = Some(1.0);
                return seeds;
            }
            let Some(top_prior) = (0..cands.len()).min_by(|&a, &b| by_prior_then_id(&cands[a], &cands[b])) else {
                return seeds;
            };
            let top_context = (0..cands.len()).min_by(|&a, &b| {
                cands[b]
                    .context
                    .total_cmp(&cands[a].context)
                    .then_with(|| by_prior_then_id(&cands[a], &cands[b]))
            });
            if cands[top_prior].prior >= SEED_PRIOR_THRESHOLD && top_context == Some(top_prior) {
                for (i, s) in seeds.iter_mut().enumerate() {
                    *s = Some(if i == top_prior { 1.0 } else { 0.0 });
                }
            }
            seeds
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub mention: usize,
    /// `None` (NIL) when the mention has no candidates.
    pub chosen: Option<EntityId>,
    pub score: f64,
    pub seed: bool,
}

/// Per mention, the hypothesis with the highest score; ties go to the higher
/// prior, then the smaller entity id.
pub fn decode(graph: &RelationalGraph, scores: &[f64]) -> Result<Vec<Decision>> {
    if scores.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            actual: scores.len(),
        });
    }
    let mut best: Vec<Option<usize>> = vec![None; graph.mentions.len()];
    for (i, node) in graph.nodes.iter().enumerate() {
        let slot = &mut best[node.mention];
        let better = match *slot {
            None => true,
            Some(b) => {
                let other = &graph.nodes[b];
                scores[i]
                    .total_cmp(&scores[b])
                    .then_with(|| node.prior.total_cmp(&other.prior))
                    .then_with(|| other.candidate.cmp(&node.candidate))
                    == Ordering::Greater
            }
        };
        if better {
            *slot = Some(i);
        }
    }
    Ok(best
        .into_iter()
        .enumerate()
        .map(|(m, b)| match b {
            Some(i) => Decision {
                mention: m,
                chosen: Some(graph.nodes[i].candidate.clone()),
                score: scores[i],
                seed: graph.nodes[i].is_seed,
            },
            None => Decision {
                mention: m,
                chosen: None,
                score: 0.0,
                seed: false,
            },
        })
        .collect())
}

/// One linked mention, as written to `links.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub doc_id: String,
    pub offset: usize,
    pub surface: String,
    pub chosen: Option<EntityId>,
    pub score: f64,
    pub seed: bool,
}

/// Mentions of a document; the context of every mention is the whole
/// document text.
pub fn document_mentions(doc: &AnchorDocument) -> Vec<Mention> {
    let context = tokenize(&doc.text);
    doc.anchors
        .iter()
        .map(|a| Mention {
            doc_id: doc.doc_id.clone(),
            offset: a.offset,
            surface: a.surface.clone(),
            context_tokens: context.clone(),
        })
        .collect()
}

/// End-to-end collective linker.
pub struct Linker<'a> {
    pub dictionary: &'a MentionDictionary,
    pub content: &'a TfIdfModel,
    pub relatedness: &'a dyn Relatedness,
    pub config: ReguConfig,
}

impl Linker<'_> {
    pub fn score_candidates(&self, mentions: Vec<Mention>) -> Result<Vec<MentionCandidates>> {
        mentions
            .into_iter()
            .map(|mention| {
                let candidates = generate_candidates(self.dictionary, &mention.surface, self.config.top_n)
                    .into_iter()
                    .map(|c| {
                        let context = context_similarity(self.content, &c.entity, &mention)?;
                        Ok(ScoredCandidate {
                            r0: initial_ranking(c.prior, context, self.config.lambda_prior),
                            entity: c.entity,
                            prior: c.prior,
                            context,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(MentionCandidates { mention, candidates })
            })
            .collect()
    }

    pub fn link_document(&self, doc: &AnchorDocument) -> Result<Vec<LinkRecord>> {
        self.config.validate()?;
        let groups = self.score_candidates(document_mentions(doc))?;
        let seeds = mine_seeds(&groups);
        let graph = build_graph(&groups, &seeds, self.relatedness, &SameDocument, &self.config)?;
        let solution = regularize(&graph, &self.config)?;
        let decisions = decode(&graph, &solution.scores)?;
        Ok(decisions
            .into_iter()
            .map(|d| {
                let m = &graph.mentions[d.mention];
                LinkRecord {
                    doc_id: m.doc_id.clone(),
                    offset: m.offset,
                    surface: m.surface.clone(),
                    chosen: d.chosen,
                    score: d.score,
                    seed: d.seed,
                }
            })
            .collect())
    }

    /// Links every document; documents are independent (coherence edges
    /// never cross documents) and run in parallel, output in input order.
    pub fn link_corpus(&self, docs: &[AnchorDocument]) -> Result<Vec<LinkRecord>> {
        let per_doc = docs
            .par_iter()
            .map(|d| self.link_document(d))
            .collect::<Result<Vec<_>>>()?;
        Ok(per_doc.into_iter().flatten().collect())
    }
}

/// Baseline: every mention takes its highest-prior candidate.
pub fn link_by_prior(dictionary: &MentionDictionary, docs: &[AnchorDocument], top_n: usize) -> Vec<LinkRecord> {
    docs.iter()
        .flat_map(|doc| {
            doc.anchors.iter().map(|a| {
                let top = generate_candidates(dictionary, &a.surface, top_n).into_iter().next();
                LinkRecord {
                    doc_id: doc.doc_id.clone(),
                    offset: a.offset,
                    surface: a.surface.clone(),
                    score: top.as_ref().map_or(0.0, |c| c.prior),
                    chosen: top.map(|c| c.entity),
                    seed: false,
                }
            })
        })
        .collect()
}
