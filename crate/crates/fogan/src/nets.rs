//! Small multilayer perceptrons over the expression tape, with flat parameter
//! vectors so optimizers and checkpoints treat a network as one array.
//!
//! Activations are C¹ by construction (tanh, or a softplus-smoothed ReLU), so
//! critic input gradients are continuous, which the penalized divergences
//! assume of their critic class.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad, grad_values, Expr, Gradient, Tape};
use crate::{Error, Result};

/// Sharpness of the smoothed ReLU `s(x) = ln(1 + exp(βx)) / β`.
pub const SMOOTH_RELU_BETA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    SmoothRelu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::SmoothRelu => {
                let t = SMOOTH_RELU_BETA * x;
                let sp = if t > 30.0 {
                    t
                } else if t < -30.0 {
                    t.exp()
                } else {
                    t.exp().ln_1p()
                };
                sp / SMOOTH_RELU_BETA
            }
        }
    }

    fn apply_expr<'t>(self, x: Expr<'t>) -> Expr<'t> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::SmoothRelu => x.softplus(SMOOTH_RELU_BETA),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "smooth_relu" | "smooth-relu" => Ok(Activation::SmoothRelu),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

/// Offsets of one layer's weights and bias inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlice {
    pub weights: Range<usize>,
    pub bias: Range<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Partition of the flat parameter vector into per-layer slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub layers: Vec<LayerSlice>,
    pub total: usize,
}

impl ParamLayout {
    pub fn of(layer_sizes: &[usize]) -> Self {
        let mut layers = Vec::new();
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = offset..offset + fan_in * fan_out;
            offset += fan_in * fan_out;
            let bias = offset..offset + fan_out;
            offset += fan_out;
            layers.push(LayerSlice {
                weights,
                bias,
                fan_in,
                fan_out,
            });
        }
        ParamLayout {
            layers,
            total: offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    Zeros,
    /// Weights drawn from `U([-a, a])` with `a = sqrt(6 / (fan_in + fan_out))`;
    /// biases zero.
    UniformScaled,
}

/// Fully connected network with a linear head on the last layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    layer_sizes: Vec<usize>,
    activation: Activation,
    count: usize,
}

impl Mlp {
    /// Parameter count of a shape: `Σ (fan_in + 1) · fan_out`.
    pub fn param_count(layer_sizes: &[usize]) -> usize {
        ParamLayout::of(layer_sizes).total
    }

    pub fn new(layer_sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Shape(format!("bad layer sizes {layer_sizes:?}")));
        }
        let want = Self::param_count(&layer_sizes);
        if params.len() != want {
            return Err(Error::Shape(format!(
                "parameter count {} != expected {}",
                params.len(),
                want
            )));
        }
        Ok(Mlp {
            layer_sizes,
            activation,
            params,
        })
    }

    pub fn zeros(layer_sizes: Vec<usize>, activation: Activation) -> Self {
        let n = Self::param_count(&layer_sizes);
        Self::new(layer_sizes, activation, vec![0.0; n]).expect("zero init is always valid")
    }

    /// Deterministic initialization from a seed.
    pub fn init(
        layer_sizes: Vec<usize>,
        activation: Activation,
        scheme: InitScheme,
        seed: u64,
    ) -> Self {
        let layout = ParamLayout::of(&layer_sizes);
        let mut params = vec![0.0; layout.total];
        if scheme == InitScheme::UniformScaled {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for layer in &layout.layers {
                let a = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
                for w in &mut params[layer.weights.clone()] {
                    *w = a * (2.0 * rng.gen::<f64>() - 1.0);
                }
            }
        }
        Self::new(layer_sizes, activation, params).expect("layout-sized init")
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::of(&self.layer_sizes)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "parameter count {} != expected {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::new(self.layer_sizes.clone(), self.activation, params)
    }

    /// Plain-float forward pass.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        let layout = self.layout();
        let last = layout.layers.len() - 1;
        let mut cur = x.to_vec();
        for (li, layer) in layout.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.fan_out);
            for o in 0..layer.fan_out {
                let row = &self.params[layer.weights.start + o * layer.fan_in
                    ..layer.weights.start + (o + 1) * layer.fan_in];
                let mut acc = self.params[layer.bias.start + o];
                for (w, v) in row.iter().zip(&cur) {
                    acc += w * v;
                }
                next.push(if li < last {
                    self.activation.apply(acc)
                } else {
                    acc
                });
            }
            cur = next;
        }
        cur
    }

    /// Scalar-head convenience.
    pub fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(self.output_dim(), 1, "value() needs a scalar head");
        self.eval(x)[0]
    }

    /// Forward pass over tape expressions. `params` supplies the weights as
    /// expressions (variables for training, constants for a frozen network)
    /// and must match the flat layout.
    pub fn forward_exprs<'t>(
        &self,
        _tape: &'t Tape,
        x: &[Expr<'t>],
        params: &[Expr<'t>],
    ) -> Vec<Expr<'t>> {
        assert_eq!(x.len(), self.input_dim(), "input dimension mismatch");
        assert_eq!(params.len(), self.params.len(), "parameter count mismatch");
        let layout = self.layout();
        let last = layout.layers.len() - 1;
        let mut cur: Vec<Expr<'t>> = x.to_vec();
        for (li, layer) in layout.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.fan_out);
            for o in 0..layer.fan_out {
                let mut acc = params[layer.bias.start + o];
                for (i, &v) in cur.iter().enumerate() {
                    acc = acc + params[layer.weights.start + o * layer.fan_in + i] * v;
                }
                next.push(if li < last {
                    self.activation.apply_expr(acc)
                } else {
                    acc
                });
            }
            cur = next;
        }
        cur
    }

    /// Exact input gradient `∇_x f(x)` of a scalar-head network, as floats.
    pub fn input_gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.output_dim(), 1, "input_gradient needs a scalar head");
        let tape = Tape::new();
        let xs = tape.vars(x);
        let ps = tape.constants(&self.params);
        let out = self.forward_exprs(&tape, &xs, &ps)[0];
        grad_values(out, &xs)
    }

    /// Input gradient as differentiable expressions; `x` must already live on
    /// the tape (variables or any nodes), `params` as in [`Self::forward_exprs`].
    pub fn input_gradient_exprs<'t>(
        &self,
        tape: &'t Tape,
        x: &[Expr<'t>],
        params: &[Expr<'t>],
    ) -> Gradient<'t> {
        assert_eq!(self.output_dim(), 1, "input_gradient needs a scalar head");
        let out = self.forward_exprs(tape, x, params)[0];
        grad(out, x)
    }

    /// Writes a checkpoint: one JSON header line, then the raw little-endian
    /// 64-bit parameters.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = CheckpointHeader {
            layer_sizes: self.layer_sizes.clone(),
            activation: self.activation,
            count: self.params.len(),
        };
        let mut line = serde_json::to_string(&header)
            .map_err(|e| Error::Config(format!("header encode: {e}")))?;
        line.push('\n');
        w.write_all(line.as_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut header_bytes = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
        let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| Error::Config(format!("header decode: {e}")))?;
        let mut params = Vec::with_capacity(header.count);
        let mut buf = [0u8; 8];
        for _ in 0..header.count {
            r.read_exact(&mut buf)?;
            params.push(f64::from_le_bytes(buf));
        }
        Self::new(header.layer_sizes, header.activation, params)
    }
}
