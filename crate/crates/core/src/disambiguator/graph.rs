use rayon::prelude::*;

use super::{Mention, MentionCandidates, ReguConfig};
use crate::error::{Error, Result};
use crate::kg::EntityId;
use crate::relatedness::Relatedness;

/// Decides whether two mentions may share coherence edges.
pub trait Relevance: Sync {
    fn relevant(&self, a: &Mention, b: &Mention) -> bool;
}

/// Mentions are relevant to each other when they come from the same document.
#[derive(Debug, Clone, Copy, Default)]
pub struct SameDocument;

impl Relevance for SameDocument {
    fn relevant(&self, a: &Mention, b: &Mention) -> bool {
        a.doc_id == b.doc_id
    }
}

/// A mention-candidate hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNode {
    /// Index into [`RelationalGraph::mentions`].
    pub mention: usize,
    pub candidate: EntityId,
    pub prior: f64,
    pub r0: f64,
    pub is_seed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationalGraph {
    pub mentions: Vec<Mention>,
    pub nodes: Vec<GraphNode>,
    /// Symmetric sparse weights: `adjacency[i]` lists `(j, W_ij)` by
    /// ascending `j`.
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl RelationalGraph {
    /// Builds a graph from explicit nodes and undirected weighted edges.
    /// Rejects self-loops, edges between nodes of one mention, negative or
    /// non-finite weights and repeated edges.
    pub fn from_edges(
        mentions: Vec<Mention>,
        nodes: Vec<GraphNode>,
        edges: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let n = nodes.len();
        if let Some(node) = nodes.iter().find(|v| v.mention >= mentions.len()) {
            return Err(Error::InvalidInput(format!(
                "node references mention {} of {}",
                node.mention,
                mentions.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) out of range")));
            }
            if i == j || nodes[i].mention == nodes[j].mention {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) joins hypotheses of one mention"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("edge ({i}, {j}) weight {w}")));
            }
            if w < 0.0 {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has negative weight")));
            }
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for row in &mut adjacency {
            row.sort_by_key(|(j, _)| *j);
            if row.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::InvalidInput("repeated edge".into()));
            }
        }
        Ok(RelationalGraph {
            mentions,
            nodes,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    /// `W_ij`, zero when there is no edge.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |(k, _)| *k)
            .map_or(0.0, |pos| self.adjacency[i][pos].1)
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|(_, w)| w).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn initial_scores(&self) -> Vec<f64> {
        self.nodes.iter().map(|v| v.r0).collect()
    }

    /// Node indices belonging to mention `m`.
    pub fn nodes_of(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, v)| v.mention == m)
            .map(|(i, _)| i)
    }
}

/// Builds the relational graph over all hypotheses of `groups`.
///
/// Nodes `v_i`, `v_j` of different, relevant mentions become edge candidates
/// when `sr(e_i, e_j) > config.sr_min`. Each node keeps its `k` heaviest
/// candidates (ties by node index) and an edge survives if either endpoint
/// kept it. `seeds[m][c]` fixes the score of candidate `c` of mention `m`.
pub fn build_graph(
    groups: &[MentionCandidates],
    seeds: &[Vec<Option<f64>>],
    sr: &dyn Relatedness,
    relevance: &dyn Relevance,
    config: &ReguConfig,
) -> Result<RelationalGraph> {
    if seeds.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            expected: groups.len(),
            actual: seeds.len(),
        });
    }
    let mut nodes = Vec::new();
    for (m, (group, group_seeds)) in groups.iter().zip(seeds).enumerate() {
        if group_seeds.len() != group.candidates.len() {
            return Err(Error::DimensionMismatch {
                expected: group.candidates.len(),
                actual: group_seeds.len(),
            });
        }
        for (cand, seed) in group.candidates.iter().zip(group_seeds) {
            nodes.push(GraphNode {
                mention: m,
                candidate: cand.entity.clone(),
                prior: cand.prior,
                r0: seed.unwrap_or(cand.r0),
                is_seed: seed.is_some(),
            });
        }
    }
    let mentions: Vec<Mention> = groups.iter().map(|g| g.mention.clone()).collect();

    // Candidate edges (j > i) per node, in ascending j.
    let upper: Vec<Vec<(usize, f64)>> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let vi = &nodes[i];
            let mut row = Vec::new();
            for (j, vj) in nodes.iter().enumerate().skip(i + 1) {
                if vi.mention == vj.mention
                    || !relevance.relevant(&mentions[vi.mention], &mentions[vj.mention])
                {
                    continue;
                }
                let w = sr.relatedness(&vi.candidate, &vj.candidate)?;
                if !w.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "relatedness({}, {}) = {w}",
                        vi.candidate, vj.candidate
                    )));
                }
                if w > config.sr_min && w > 0.0 {
                    row.push((j, w));
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut full: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nodes.len()];
    for (i, row) in upper.iter().enumerate() {
        for &(j, w) in row {
            full[i].push((j, w));
            full[j].push((i, w));
        }
    }

    let mut keep = std::collections::BTreeSet::new();
    for (i, row) in full.iter_mut().enumerate() {
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(j, _) in row.iter().take(config.k) {
            keep.insert((i.min(j), i.max(j)));
        }
    }
    let edges: Vec<(usize, usize, f64)> = upper
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
        .filter(|(i, j, _)| keep.contains(&(*i, *j)))
        .collect();

    RelationalGraph::from_edges(mentions, nodes, &edges)
}
