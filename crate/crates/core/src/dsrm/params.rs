use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSizes {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub output: usize,
}

impl LayerSizes {
    pub fn new(input: usize, hidden1: usize, hidden2: usize, output: usize) -> Self {
        LayerSizes {
            input,
            hidden1,
            hidden2,
            output,
        }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.input, self.hidden1, self.hidden2, self.output]
    }

    fn validate(&self) -> Result<()> {
        if self.as_array().contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must all be >= 1, got {:?}",
                self.as_array()
            )));
        }
        Ok(())
    }
}

/// One parameter tensor of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    W1,
    W2,
    B2,
    W3,
    B3,
}

impl Tensor {
    pub const ALL: [Tensor; 5] = [Tensor::W1, Tensor::W2, Tensor::B2, Tensor::W3, Tensor::B3];
}

/// Weights of the three-layer relatedness network.
///
/// `W1` (hidden1 x input, no bias) is stored column-major so the sparse
/// product `W1 x` touches one contiguous column per non-zero input. The other
/// matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub(crate) sizes: LayerSizes,
    pub(crate) seed: u64,
    pub(crate) w1: Vec<f64>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
    pub(crate) w3: Vec<f64>,
    pub(crate) b3: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, count: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..count).map(|_| dist.sample(rng)).collect()
}

/// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
pub fn init_params(sizes: LayerSizes, seed: u64) -> Result<NetworkParams> {
    sizes.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let LayerSizes {
        input,
        hidden1,
        hidden2,
        output,
    } = sizes;
    Ok(NetworkParams {
        sizes,
        seed,
        w1: glorot(&mut rng, input, hidden1, input * hidden1),
        w2: glorot(&mut rng, hidden1, hidden2, hidden1 * hidden2),
        b2: vec![0.0; hidden2],
        w3: glorot(&mut rng, hidden2, output, hidden2 * output),
        b3: vec![0.0; output],
    })
}

impl NetworkParams {
    /// Assembles parameters from explicit tensors. `w1` is given row-major
    /// (hidden1 x input) like the other matrices.
    pub fn from_tensors(
        sizes: LayerSizes,
        seed: u64,
        w1_row_major: &[f64],
        w2: Vec<f64>,
        b2: Vec<f64>,
        w3: Vec<f64>,
        b3: Vec<f64>,
    ) -> Result<Self> {
        sizes.validate()?;
        let LayerSizes {
            input,
            hidden1,
            hidden2,
            output,
        } = sizes;
        let check = |len: usize, expected: usize| {
            if len == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected,
                    actual: len,
                })
            }
        };
        check(w1_row_major.len(), hidden1 * input)?;
        check(w2.len(), hidden2 * hidden1)?;
        check(b2.len(), hidden2)?;
        check(w3.len(), output * hidden2)?;
        check(b3.len(), output)?;
        let mut w1 = vec![0.0; input * hidden1];
        for r in 0..hidden1 {
            for c in 0..input {
                w1[c * hidden1 + r] = w1_row_major[r * input + c];
            }
        }
        let params = NetworkParams {
            sizes,
            seed,
            w1,
            w2,
            b2,
            w3,
            b3,
        };
        if !params.is_finite() {
            return Err(Error::NonFinite("parameter tensors".into()));
        }
        Ok(params)
    }

    pub fn sizes(&self) -> LayerSizes {
        self.sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `W1[row][col]`.
    pub fn w1(&self, row: usize, col: usize) -> f64 {
        self.w1[col * self.sizes.hidden1 + row]
    }

    /// `W1` in row-major order.
    pub fn w1_row_major(&self) -> Vec<f64> {
        let (h1, input) = (self.sizes.hidden1, self.sizes.input);
        let mut out = Vec::with_capacity(h1 * input);
        for r in 0..h1 {
            for c in 0..input {
                out.push(self.w1[c * h1 + r]);
            }
        }
        out
    }

    /// Raw storage of one tensor (`W1` column-major, others row-major).
    pub fn tensor(&self, t: Tensor) -> &[f64] {
        match t {
            Tensor::W1 => &self.w1,
            Tensor::W2 => &self.w2,
            Tensor::B2 => &self.b2,
            Tensor::W3 => &self.w3,
            Tensor::B3 => &self.b3,
        }
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [f64] {
        match t {
            Tensor::W1 => &mut self.w1,
            Tensor::W2 => &mut self.w2,
            Tensor::B2 => &mut self.b2,
            Tensor::W3 => &mut self.w3,
            Tensor::B3 => &mut self.b3,
        }
    }

    pub fn is_finite(&self) -> bool {
        Tensor::ALL
            .iter()
            .all(|t| self.tensor(*t).iter().all(|v| v.is_finite()))
    }

    /// `self -= rate * grad`.
    pub fn apply_sgd(&mut self, grad: &Gradients, rate: f64) {
        let h1 = self.sizes.hidden1;
        for (&col, g) in &grad.w1 {
            let column = &mut self.w1[col * h1..(col + 1) * h1];
            for (w, d) in column.iter_mut().zip(g) {
                *w -= rate * d;
            }
        }
        for (t, g) in [
            (Tensor::W2, &grad.w2),
            (Tensor::B2, &grad.b2),
            (Tensor::W3, &grad.w3),
            (Tensor::B3, &grad.b3),
        ] {
            for (w, d) in self.tensor_mut(t).iter_mut().zip(g.iter()) {
                *w -= rate * d;
            }
        }
    }
}

/// Loss gradient shaped like [`NetworkParams`]. `W1` is kept as a sparse set
/// of columns since only inputs present in the batch receive gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) hidden1: usize,
    pub(crate) w1: BTreeMap<usize, Vec<f64>>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
    pub(crate) w3: Vec<f64>,
    pub(crate) b3: Vec<f64>,
}

impl Gradients {
    pub fn zeros(sizes: LayerSizes) -> Self {
        Gradients {
            hidden1: sizes.hidden1,
            w1: BTreeMap::new(),
            w2: vec![0.0; sizes.hidden1 * sizes.hidden2],
            b2: vec![0.0; sizes.hidden2],
            w3: vec![0.0; sizes.hidden2 * sizes.output],
            b3: vec![0.0; sizes.output],
        }
    }

    pub(crate) fn w1_column_mut(&mut self, col: usize) -> &mut Vec<f64> {
        let h1 = self.hidden1;
        self.w1.entry(col).or_insert_with(|| vec![0.0; h1])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (&col, g) in &other.w1 {
            for (a, b) in self.w1_column_mut(col).iter_mut().zip(g) {
                *a += b;
            }
        }
        for (a, b) in [
            (&mut self.w2, &other.w2),
            (&mut self.b2, &other.b2),
            (&mut self.w3, &other.w3),
            (&mut self.b3, &other.b3),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.w1.values_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
        for v in self
            .w2
            .iter_mut()
            .chain(self.b2.iter_mut())
            .chain(self.w3.iter_mut())
            .chain(self.b3.iter_mut())
        {
            *v *= factor;
        }
    }

    /// Dense copy of one tensor in the same layout as
    /// [`NetworkParams::tensor`].
    pub fn dense(&self, t: Tensor, sizes: LayerSizes) -> Vec<f64> {
        match t {
            Tensor::W1 => {
                let mut out = vec![0.0; sizes.input * sizes.hidden1];
                for (&col, g) in &self.w1 {
                    out[col * sizes.hidden1..(col + 1) * sizes.hidden1].copy_from_slice(g);
                }
                out
            }
            Tensor::W2 => self.w2.clone(),
            Tensor::B2 => self.b2.clone(),
            Tensor::W3 => self.w3.clone(),
            Tensor::B3 => self.b3.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.w1
            .values()
            .flatten()
            .chain(&self.w2)
            .chain(&self.b2)
            .chain(&self.w3)
            .chain(&self.b3)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .values()
            .flatten()
            .chain(&self.w2)
            .chain(&self.b2)
            .chain(&self.w3)
            .chain(&self.b3)
            .all(|v| v.is_finite())
    }
}
