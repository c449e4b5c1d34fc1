//! Genotypes as flat weight vectors and the deterministic feed-forward
//! policies they decode to.
//!
//! Weight layout is layer-major. Within a layer the `out × in` weight matrix
//! is stored row-major and followed by that layer's `out` biases.

use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkShape {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "all layer sizes must be at least 1 (input {input_dim}, hidden {hidden_dims:?}, output {output_dim})"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|&(fan_in, fan_out)| (fan_in + 1) * fan_out)
            .sum()
    }

    /// Shape descriptor used in the binary genotype encoding: input, number of
    /// hidden layers, each hidden size, output. All little-endian `u32`.
    fn write_descriptor(&self, out: &mut Vec<u8>) {
        let push = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        push(out, self.input_dim);
        push(out, self.hidden_dims.len());
        for &h in &self.hidden_dims {
            push(out, h);
        }
        push(out, self.output_dim);
    }
}

impl fmt::Display for NetworkShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.input_dim)?;
        for h in &self.hidden_dims {
            write!(f, "-{h}")?;
        }
        write!(f, "-{}", self.output_dim)
    }
}

/// A point in genotype space: every weight and bias of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Genotype {
    shape: Arc<NetworkShape>,
    weights: Vec<f64>,
}

impl Genotype {
    pub fn new(shape: Arc<NetworkShape>, weights: Vec<f64>) -> Result<Self> {
        let expected = shape.parameter_count();
        if weights.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weight {i} is not finite")));
        }
        Ok(Self { shape, weights })
    }

    pub fn zeros(shape: Arc<NetworkShape>) -> Self {
        let weights = vec![0.0; shape.parameter_count()];
        Self { shape, weights }
    }

    /// Xavier-normal weights, `N(0, 2 / (fan_in + fan_out))` per layer, with
    /// zero biases. One RNG stream per genotype, consumed in layout order.
    pub fn xavier(shape: Arc<NetworkShape>, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut weights = Vec::with_capacity(shape.parameter_count());
        for (fan_in, fan_out) in shape.layers() {
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite positive std");
            weights.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
            weights.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { shape, weights }
    }

    pub(crate) fn from_parts_unchecked(shape: Arc<NetworkShape>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), shape.parameter_count());
        Self { shape, weights }
    }

    pub fn shape(&self) -> &Arc<NetworkShape> {
        &self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Indices of the bias entries in the flat layout.
    pub fn bias_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in self.shape.layers() {
            offset += fan_in * fan_out;
            out.extend(offset..offset + fan_out);
            offset += fan_out;
        }
        out
    }

    /// FNV-1a over the binary encoding, printed as 16 hex digits.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    /// Shape descriptor, then `u64` weight count, then weights as `f64`, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.weights.len());
        self.shape.write_descriptor(&mut out);
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        decode_bytes(bytes)
    }

    pub fn forward(&self, observation: &[f64]) -> Result<Vec<f64>> {
        Policy::decode(self).forward(observation)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let slice = self
            .bytes
            .get(self.pos..self.pos + N)
            .ok_or_else(|| Error::Malformed("truncated genotype encoding".into()))?;
        self.pos += N;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
}

fn decode_bytes(bytes: &[u8]) -> Result<Genotype> {
    let mut r = Reader { bytes, pos: 0 };
    let input = r.u32()?;
    let hidden_count = r.u32()?;
    if hidden_count > 1024 {
        return Err(Error::Malformed(format!("{hidden_count} hidden layers")));
    }
    let hidden = (0..hidden_count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let output = r.u32()?;
    let shape = Arc::new(NetworkShape::new(input, hidden, output)?);
    let count = u64::from_le_bytes(r.take()?) as usize;
    if count != shape.parameter_count() {
        return Err(Error::ShapeMismatch {
            expected: shape.parameter_count(),
            got: count,
        });
    }
    let weights = (0..count)
        .map(|_| Ok(f64::from_le_bytes(r.take()?)))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Malformed("trailing bytes after genotype".into()));
    }
    Genotype::new(shape, weights)
}

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_out × fan_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// A decoded network: ReLU hidden layers, tanh output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    shape: Arc<NetworkShape>,
    layers: Vec<Layer>,
}

impl Policy {
    pub fn decode(g: &Genotype) -> Self {
        let mut offset = 0;
        let layers = g
            .shape
            .layers()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let w_end = offset + fan_in * fan_out;
                let b_end = w_end + fan_out;
                let layer = Layer {
                    fan_in,
                    fan_out,
                    weights: g.weights[offset..w_end].to_vec(),
                    bias: g.weights[w_end..b_end].to_vec(),
                };
                offset = b_end;
                layer
            })
            .collect();
        Self {
            shape: Arc::clone(&g.shape),
            layers,
        }
    }

    pub fn encode(&self) -> Genotype {
        let mut weights = Vec::with_capacity(self.shape.parameter_count());
        for layer in &self.layers {
            weights.extend_from_slice(&layer.weights);
            weights.extend_from_slice(&layer.bias);
        }
        Genotype::from_parts_unchecked(Arc::clone(&self.shape), weights)
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn forward(&self, observation: &[f64]) -> Result<Vec<f64>> {
        if observation.len() != self.shape.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.shape.input_dim,
                got: observation.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut x = observation.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut y = layer.bias.clone();
            for (o, out) in y.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                *out += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            }
            if li == last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            debug_assert_eq!(y.len(), layer.fan_out);
            x = y;
        }
        Ok(x)
    }
}
