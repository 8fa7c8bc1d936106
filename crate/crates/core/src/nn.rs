//! Multilayer perceptrons for the encoder and decoder, plus the optimizers
//! that update them.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::text::{source_name, DataLines};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `[in × out]`
    pub weights: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_width(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_width(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl MlpSpec {
    /// `M → hidden… → N`
    pub fn encoder(order: usize, dims: usize, hidden: &[usize], seed: u64) -> Self {
        Self {
            input_width: order,
            hidden_widths: hidden.to_vec(),
            output_width: dims,
            activation: Activation::Relu,
            init_seed: seed,
        }
    }

    /// `N → hidden… → M`
    pub fn decoder(dims: usize, order: usize, hidden: &[usize], seed: u64) -> Self {
        Self {
            input_width: dims,
            hidden_widths: hidden.to_vec(),
            output_width: order,
            activation: Activation::Relu,
            init_seed: seed,
        }
    }
}

/// Feed-forward network: hidden layers use the activation from its `MlpSpec`, the
/// output layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Tape handles for one [`Mlp`]'s parameters.
#[derive(Clone, Debug)]
pub struct MlpVars {
    layers: Vec<(Var, Var, Activation)>,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for &(w, b, act) in &self.layers {
            let z = tape.matmul(h, w)?;
            let shape = tape.value(z).shape().to_vec();
            let bb = tape.broadcast(b, &shape)?;
            let z = tape.add(z, bb)?;
            h = match act {
                Activation::Relu => tape.relu(z)?,
                Activation::Linear => z,
            };
        }
        Ok(h)
    }

    /// Parameter handles in `[w0, b0, w1, b1, …]` order.
    pub fn params(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }
}

impl Mlp {
    /// Uniform init in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        let widths: Vec<usize> = std::iter::once(spec.input_width)
            .chain(spec.hidden_widths.iter().copied())
            .chain(std::iter::once(spec.output_width))
            .collect();
        if let Some(pos) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidArgument(format!("layer width {pos} is zero")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let n_layers = widths.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
                DenseLayer {
                    weights: Tensor::matrix(fan_in, fan_out, w).expect("consistent widths"),
                    bias: Tensor::zeros(&[fan_out]),
                    activation: if l + 1 == n_layers { Activation::Linear } else { spec.activation },
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("at least one layer").out_width()
    }

    /// Records every weight and bias as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.param(l.weights.clone()), tape.param(l.bias.clone()), l.activation))
                .collect(),
        }
    }

    /// Parameters in the order of [`MlpVars::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Plain evaluation without keeping a tape around.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let out = vars.forward(&mut tape, xv)?;
        Ok(tape.value(out).clone())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# mlp: per layer `layer <in> <out> <activation>`, <in> weight rows, one bias row").unwrap();
        writeln!(s, "layers {}", self.layers.len()).unwrap();
        for l in &self.layers {
            writeln!(s, "layer {} {} {}", l.in_width(), l.out_width(), l.activation.name()).unwrap();
            for r in 0..l.in_width() {
                writeln!(s, "{}", join(l.weights.row(r))).unwrap();
            }
            writeln!(s, "{}", join(l.bias.data())).unwrap();
        }
        s
    }

    pub fn from_text(source: &str, text: &str) -> Result<Self> {
        let mut lines = DataLines::new(source, text);
        let (n, head) = lines.expect("`layers <count>` header")?;
        let mut toks = head.split_whitespace();
        if toks.next() != Some("layers") {
            return Err(lines.error(n, "expected field `layers`"));
        }
        let count = lines.usize_field(n, toks.next(), "layers")?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, head) = lines.expect("`layer <in> <out> <activation>`")?;
            let mut toks = head.split_whitespace();
            if toks.next() != Some("layer") {
                return Err(lines.error(n, "expected field `layer`"));
            }
            let fan_in = lines.usize_field(n, toks.next(), "in")?;
            let fan_out = lines.usize_field(n, toks.next(), "out")?;
            let activation = match toks.next() {
                Some("relu") => Activation::Relu,
                Some("linear") => Activation::Linear,
                other => return Err(lines.error(n, format!("field `activation`: unknown {other:?}"))),
            };
            if fan_in == 0 || fan_out == 0 {
                return Err(lines.error(n, "layer widths must be positive"));
            }
            let mut w = Vec::with_capacity(fan_in * fan_out);
            for _ in 0..fan_in {
                let (n, row) = lines.expect("weight row")?;
                w.extend(lines.floats(n, row, fan_out)?);
            }
            let (n, row) = lines.expect("bias row")?;
            let b = lines.floats(n, row, fan_out)?;
            if let Some(prev) = layers.last().map(DenseLayer::out_width) {
                if prev != fan_in {
                    return Err(lines.error(n, format!("layer input {fan_in} does not match previous output {prev}")));
                }
            }
            layers.push(DenseLayer {
                weights: Tensor::matrix(fan_in, fan_out, w)?,
                bias: Tensor::vector(b),
                activation,
            });
        }
        lines.finish()?;
        if layers.is_empty() {
            return Err(lines.error(n, "model has no layers"));
        }
        Ok(Self { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::text::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&source_name(path), &std::fs::read_to_string(path)?)
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// `x = f(s)`: maps one-hot rows `[B × M]` to points `[B × N]`.
pub fn encode(tape: &mut Tape, encoder: &MlpVars, s: Var, validate: bool) -> Result<Var> {
    if validate {
        let t = tape.value(s);
        let (rows, _) = t.dims2();
        for r in 0..rows {
            let row = t.row(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::InvalidArgument(format!("row {r} is not one-hot")));
            }
        }
    }
    encoder.forward(tape, s)
}

/// `r = g(y)`: maps received points `[B × N]` to logits `[B × M]`.
pub fn decode(tape: &mut Tape, decoder: &MlpVars, y: Var) -> Result<Var> {
    decoder.forward(tape, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First-order optimizer state for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, shapes: &[usize]) -> Self {
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let (m, v) = match config.kind {
            OptimizerKind::Adam => (zeros(), zeros()),
            OptimizerKind::Sgd => (vec![], vec![]),
        };
        Self { config, step: 0, m, v }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Applies one update `params -= lr · direction(grads)`.
    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        self.step += 1;
        let c = self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= c.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bc1 = 1.0 - c.beta1.powi(t);
                let bc2 = 1.0 - c.beta2.powi(t);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for (j, (w, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gv;
                        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gv * gv;
                        let mh = m[j] / bc1;
                        let vh = v[j] / bc2;
                        *w -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
                    }
                }
            }
        }
    }
}
