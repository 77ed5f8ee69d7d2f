//! Graph regularization of ranking scores.
//!
//! Minimizes
//!
//! ```text
//! F(R) = mu * sum_{i not seed} (r_i - r0_i)^2 + 1/2 * sum_{i,j} W_ij (r_i - r_j)^2
//! ```
//!
//! with seed scores held fixed. Setting `dF/dr_i = 0` for a free node gives
//! `r_i = (sum_j W_ij r_j + mu r0_i) / (D_ii + mu)`. Sweeping that update in
//! place (Gauss-Seidel) minimizes `F` exactly along one coordinate at a time,
//! so `F` never increases from one sweep to the next.

use super::graph::RelationalGraph;
use super::ReguConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn objective(graph: &RelationalGraph, scores: &[f64], mu: f64) -> Result<f64> {
    if scores.len() != graph.len() {
        return Err(Error::DimensionMismatch {
            expected: graph.len(),
            actual: scores.len(),
        });
    }
    let mut fidelity = 0.0;
    let mut smoothness = 0.0;
    for (i, node) in graph.nodes.iter().enumerate() {
        if !node.is_seed {
            let d = scores[i] - node.r0;
            fidelity += d * d;
        }
        for &(j, w) in graph.neighbors(i) {
            let d = scores[i] - scores[j];
            smoothness += w * d * d;
        }
    }
    Ok(mu * fidelity + 0.5 * smoothness)
}

/// Regularized scores; see [`regularize_observed`].
pub fn regularize(graph: &RelationalGraph, config: &ReguConfig) -> Result<Solution> {
    regularize_observed(graph, config, |_, _| {})
}

/// Runs the fixed-point sweeps from `R0`, calling `observe(t, R)` with the
/// starting point (`t = 0`) and after every sweep. Stops once no score moves
/// by more than `config.tol` or after `config.max_iter` sweeps.
pub fn regularize_observed<F>(
    graph: &RelationalGraph,
    config: &ReguConfig,
    mut observe: F,
) -> Result<Solution>
where
    F: FnMut(usize, &[f64]),
{
    config.validate()?;
    for i in 0..graph.len() {
        if graph.neighbors(i).iter().any(|(_, w)| !w.is_finite()) {
            return Err(Error::NonFinite(format!("edge weight at node {i}")));
        }
        if !graph.nodes[i].r0.is_finite() {
            return Err(Error::NonFinite(format!("initial score at node {i}")));
        }
    }

    let mu = config.mu;
    let mut scores = graph.initial_scores();
    let degree: Vec<f64> = (0..graph.len()).map(|i| graph.degree(i)).collect();
    observe(0, &scores);

    let mut iterations = 0;
    let mut converged = graph.is_empty();
    while !converged && iterations < config.max_iter {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for i in 0..graph.len() {
            let node = &graph.nodes[i];
            if node.is_seed {
                continue;
            }
            let pull: f64 = graph.neighbors(i).iter().map(|&(j, w)| w * scores[j]).sum();
            let updated = (pull + mu * node.r0) / (degree[i] + mu);
            max_change = max_change.max((updated - scores[i]).abs());
            scores[i] = updated;
        }
        observe(iterations, &scores);
        converged = max_change < config.tol;
    }
    Ok(Solution {
        scores,
        iterations,
        converged,
    })
}
