use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Result, SimError};

const CHECKPOINT_MAGIC: &str = "teamlearn-qnetwork";
const CHECKPOINT_VERSION: u32 = 1;

/// One affine layer; `weight` is stored `[fan_in, fan_out]` so a batch
/// `[rows, fan_in]` maps to `[rows, fan_out]` with a single product.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// Parameter gradients, laid out exactly like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

/// Feedforward Q-function approximator: input, two ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() != 4 {
        return Err(SimError::contract(format!(
            "a Q-network has exactly 4 layers (input, 2 hidden, output), got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(SimError::contract(format!(
            "layer sizes must be positive: {sizes:?}"
        )));
    }
    Ok(())
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

impl QNetwork {
    /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_simple_fn((w[0], w[1]), || {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(QNetwork { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(QNetwork {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let mut sizes = vec![layers.first().map_or(0, |l| l.weight.nrows())];
        for (i, l) in layers.iter().enumerate() {
            if l.weight.nrows() != sizes[i] || l.bias.len() != l.weight.ncols() {
                return Err(SimError::contract(format!(
                    "layer {i} has inconsistent shape"
                )));
            }
            sizes.push(l.weight.ncols());
        }
        check_sizes(&sizes)?;
        Ok(QNetwork { layers })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_size()];
        sizes.extend(self.layers.iter().map(|l| l.weight.ncols()));
        sizes
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.ncols()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.input_size() {
            return Err(SimError::contract(format!(
                "state has {} features, network expects {}",
                state.len(),
                self.input_size()
            )));
        }
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row vector");
        Ok(self.forward_batch(x).into_raw_vec_and_offset().0)
    }

    /// Q-values for each row of `x`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.dot(&self.layers[0].weight) + &self.layers[0].bias;
        for l in &self.layers[1..] {
            h.mapv_inplace(relu);
            h = h.dot(&l.weight) + &l.bias;
        }
        h
    }

    /// Forward pass keeping every layer's output: `[input, hidden1, hidden2, q]`.
    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weight) + &l.bias;
            if i < last {
                z.mapv_inplace(relu);
            }
            acts.push(z);
        }
        acts
    }

    /// Backpropagates `d_out` (dLoss/dQ for every row) through a trace from
    /// [`forward_trace`](Self::forward_trace).
    pub fn backward(&self, acts: &[Array2<f64>], d_out: Array2<f64>) -> Gradients {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for i in (0..self.layers.len()).rev() {
            let weight = acts[i].t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weight.t());
                ndarray::Zip::from(&mut back)
                    .and(&acts[i])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = back;
            }
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(SimError::contract("parameter vector length mismatch"));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Writes a text checkpoint: magic and version, the layer sizes, then
    /// for every layer one line of row-major weights and one line of biases.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}")?;
        let sizes: Vec<String> = self.layer_sizes().iter().map(usize::to_string).collect();
        writeln!(out, "layers {}", sizes.join(" "))?;
        for l in &self.layers {
            write_row(&mut out, l.weight.iter())?;
            write_row(&mut out, l.bias.iter())?;
        }
        Ok(())
    }

    /// Reads a checkpoint written by [`save`](Self::save). Fails unless the
    /// stored layer sizes equal `expected`.
    pub fn load<R: BufRead>(input: R, expected: &[usize]) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| SimError::Checkpoint("unexpected end of checkpoint".into()))?
                .map_err(SimError::from)
        };
        let header = next()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(CHECKPOINT_MAGIC) {
            return Err(SimError::Checkpoint("not a Q-network checkpoint".into()));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| SimError::Checkpoint("missing version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(SimError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let sizes_line = next()?;
        let sizes: Vec<usize> = sizes_line
            .strip_prefix("layers ")
            .ok_or_else(|| SimError::Checkpoint("missing layer sizes".into()))?
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| SimError::Checkpoint(format!("bad size `{s}`")))
            })
            .collect::<Result<_>>()?;
        if sizes != expected {
            return Err(SimError::Checkpoint(format!(
                "checkpoint layer sizes {sizes:?} do not match expected {expected:?}"
            )));
        }
        let mut net = QNetwork::zeros(&sizes)?;
        for (i, l) in net.layers.iter_mut().enumerate() {
            let w = parse_row(&next()?, l.weight.len(), i)?;
            l.weight.iter_mut().zip(w).for_each(|(d, s)| *d = s);
            let b = parse_row(&next()?, l.bias.len(), i)?;
            l.bias.iter_mut().zip(b).for_each(|(d, s)| *d = s);
        }
        Ok(net)
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn write_row<'a, W: Write>(out: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b" ")?;
        }
        write!(out, "{v:?}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}

fn parse_row(line: &str, len: usize, layer: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| SimError::Checkpoint(format!("bad number `{s}`")))
        })
        .collect::<Result<_>>()?;
    if values.len() != len {
        return Err(SimError::Checkpoint(format!(
            "layer {layer}: expected {len} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}
