//! Forward pass, cosine scoring, softmax posterior and backpropagation.
//!
//! For a group with anchor `a`, positive `c_0` and negatives `c_1..c_n`:
//!
//! ```text
//! s_k  = cos(y_a, y_k)
//! P_k  = exp(g s_k) / sum_j exp(g s_j)
//! loss = -ln P_0
//! d loss / d s_k = g (P_k - [k = 0])
//! ```
//!
//! and each `d s_k / d y` flows back through `y = tanh(W3 l2 + b3)`,
//! `l2 = tanh(W2 l1 + b2)`, `l1 = W1 x`.

use rayon::prelude::*;

use super::params::{Gradients, NetworkParams};
use crate::error::{Error, Result};
use crate::vectorizer::SparseVector;

/// Norm below which a latent vector is treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Groups per sequential accumulation chunk. Chunks are evaluated in parallel
/// and summed in chunk order, so the reduction order is independent of the
/// number of worker threads.
const REDUCTION_CHUNK: usize = 16;

/// Cached activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub y: Vec<f64>,
}

fn affine_tanh(w: &[f64], b: &[f64], input: &[f64]) -> Vec<f64> {
    let cols = input.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            let z: f64 = row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + bias;
            z.tanh()
        })
        .collect()
}

pub fn forward(params: &NetworkParams, x: &SparseVector) -> Result<ForwardTrace> {
    let sizes = params.sizes;
    if x.dimension() != sizes.input {
        return Err(Error::DimensionMismatch {
            expected: sizes.input,
            actual: x.dimension(),
        });
    }
    let h1 = sizes.hidden1;
    let mut l1 = vec![0.0; h1];
    for (col, value) in x.iter() {
        let column = &params.w1[col * h1..(col + 1) * h1];
        for (acc, w) in l1.iter_mut().zip(column) {
            *acc += w * value;
        }
    }
    let l2 = affine_tanh(&params.w2, &params.b2, &l1);
    let y = affine_tanh(&params.w3, &params.b3, &l2);
    Ok(ForwardTrace { l1, l2, y })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine of two dense vectors; 0 when either norm is degenerate.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Cosine with its gradients with respect to both arguments.
fn cosine_with_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return (0.0, vec![0.0; a.len()], vec![0.0; b.len()]);
    }
    let s = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| bi * inv - s * ai / (na * na))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(ai, bi)| ai * inv - s * bi / (nb * nb))
        .collect();
    (s, da, db)
}

/// Relatedness of two encoded entities: cosine of their latent vectors.
pub fn dsrm_relatedness(params: &NetworkParams, xi: &SparseVector, xj: &SparseVector) -> Result<f64> {
    let yi = forward(params, xi)?.y;
    let yj = forward(params, xj)?.y;
    Ok(cosine(&yi, &yj))
}

/// One softmax group: anchor, its related entity and sampled negatives.
#[derive(Debug, Clone, Copy)]
pub struct TrainingGroup<'a> {
    pub anchor: &'a SparseVector,
    pub positive: &'a SparseVector,
    pub negatives: &'a [&'a SparseVector],
}

impl<'a> TrainingGroup<'a> {
    /// Positive first, then negatives in order.
    fn candidates(&self) -> impl Iterator<Item = &'a SparseVector> + '_ {
        std::iter::once(self.positive).chain(self.negatives.iter().copied())
    }
}

/// Numerically stable softmax of `gamma * scores`.
pub fn softmax(scores: &[f64], gamma: f64) -> Vec<f64> {
    let scaled: Vec<f64> = scores.iter().map(|s| gamma * s).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_softmax_first(scores: &[f64], gamma: f64) -> f64 {
    let scaled: Vec<f64> = scores.iter().map(|s| gamma * s).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    scaled[0] - lse
}

/// `P(candidate | anchor)` for the positive followed by each negative.
pub fn posterior(params: &NetworkParams, group: &TrainingGroup<'_>, gamma: f64) -> Result<Vec<f64>> {
    let ya = forward(params, group.anchor)?.y;
    let scores = group
        .candidates()
        .map(|c| Ok(cosine(&ya, &forward(params, c)?.y)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(softmax(&scores, gamma))
}

fn group_loss(params: &NetworkParams, group: &TrainingGroup<'_>, gamma: f64) -> Result<f64> {
    let ya = forward(params, group.anchor)?.y;
    let scores = group
        .candidates()
        .map(|c| Ok(cosine(&ya, &forward(params, c)?.y)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(-log_softmax_first(&scores, gamma))
}

/// Mean over the batch of `-ln P(positive | anchor)`.
pub fn loss(params: &NetworkParams, batch: &[TrainingGroup<'_>], gamma: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let per_group = batch
        .par_iter()
        .map(|g| group_loss(params, g, gamma))
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_group.iter().sum::<f64>() / batch.len() as f64)
}

/// Accumulates the gradient of one forward pass given `dL/dy`.
fn backprop(
    params: &NetworkParams,
    x: &SparseVector,
    trace: &ForwardTrace,
    dy: &[f64],
    grad: &mut Gradients,
) {
    let sizes = params.sizes;
    let (h1, h2) = (sizes.hidden1, sizes.hidden2);

    let dz3: Vec<f64> = dy
        .iter()
        .zip(&trace.y)
        .map(|(d, y)| d * (1.0 - y * y))
        .collect();
    let mut dl2 = vec![0.0; h2];
    for (r, dz) in dz3.iter().enumerate() {
        grad.b3[r] += dz;
        let grow = &mut grad.w3[r * h2..(r + 1) * h2];
        let wrow = &params.w3[r * h2..(r + 1) * h2];
        for c in 0..h2 {
            grow[c] += dz * trace.l2[c];
            dl2[c] += wrow[c] * dz;
        }
    }

    let dz2: Vec<f64> = dl2
        .iter()
        .zip(&trace.l2)
        .map(|(d, l)| d * (1.0 - l * l))
        .collect();
    let mut dl1 = vec![0.0; h1];
    for (r, dz) in dz2.iter().enumerate() {
        grad.b2[r] += dz;
        let grow = &mut grad.w2[r * h1..(r + 1) * h1];
        let wrow = &params.w2[r * h1..(r + 1) * h1];
        for c in 0..h1 {
            grow[c] += dz * trace.l1[c];
            dl1[c] += wrow[c] * dz;
        }
    }

    for (col, value) in x.iter() {
        let column = grad.w1_column_mut(col);
        for (g, d) in column.iter_mut().zip(&dl1) {
            *g += d * value;
        }
    }
}

/// Loss and gradient contribution (unscaled) of one group.
fn group_gradient(
    params: &NetworkParams,
    group: &TrainingGroup<'_>,
    gamma: f64,
    grad: &mut Gradients,
) -> Result<f64> {
    let anchor_trace = forward(params, group.anchor)?;
    let mut traces = Vec::with_capacity(1 + group.negatives.len());
    let mut scores = Vec::with_capacity(traces.capacity());
    let mut d_anchor_parts = Vec::with_capacity(traces.capacity());
    let mut d_candidate_parts = Vec::with_capacity(traces.capacity());
    for candidate in group.candidates() {
        let trace = forward(params, candidate)?;
        let (s, da, dc) = cosine_with_grads(&anchor_trace.y, &trace.y);
        scores.push(s);
        d_anchor_parts.push(da);
        d_candidate_parts.push(dc);
        traces.push((candidate, trace));
    }

    let probs = softmax(&scores, gamma);
    let loss = -log_softmax_first(&scores, gamma);

    let out = params.sizes.output;
    let mut dy_anchor = vec![0.0; out];
    for (k, ((candidate, trace), (da, dc))) in traces
        .iter()
        .zip(d_anchor_parts.iter().zip(&d_candidate_parts))
        .enumerate()
    {
        let ds = gamma * (probs[k] - if k == 0 { 1.0 } else { 0.0 });
        for (acc, d) in dy_anchor.iter_mut().zip(da) {
            *acc += ds * d;
        }
        let dy: Vec<f64> = dc.iter().map(|d| ds * d).collect();
        backprop(params, candidate, trace, &dy, grad);
    }
    backprop(params, group.anchor, &anchor_trace, &dy_anchor, grad);
    Ok(loss)
}

/// Mean loss over `batch` and its gradient.
pub fn loss_and_gradients(
    params: &NetworkParams,
    batch: &[TrainingGroup<'_>],
    gamma: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let partials = batch
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut grad = Gradients::zeros(params.sizes);
            let mut total = 0.0;
            for group in chunk {
                total += group_gradient(params, group, gamma, &mut grad)?;
            }
            Ok((total, grad))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grad = Gradients::zeros(params.sizes);
    let mut total = 0.0;
    for (chunk_loss, chunk_grad) in &partials {
        total += chunk_loss;
        grad.add_assign(chunk_grad);
    }
    let scale = 1.0 / batch.len() as f64;
    grad.scale(scale);
    Ok((total * scale, grad))
}

pub fn gradients(params: &NetworkParams, batch: &[TrainingGroup<'_>], gamma: f64) -> Result<Gradients> {
    loss_and_gradients(params, batch, gamma).map(|(_, g)| g)
}
