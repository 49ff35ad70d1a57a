//! Feed-forward function approximators trained by full-batch gradient descent.
//!
//! Networks are stacks of dense layers. Each layer computes
//! `act(W x + b)` where `W` is stored `(outputs, inputs)`. Batches are laid
//! out `(examples, features)`.
//!
//! Two losses are supported:
//!
//! - mean squared error, averaged over every element of the batch:
//!   `L = 1/(N K) * sum (y - t)^2`
//! - cross-entropy against target distributions, averaged over examples:
//!   `L = -1/N * sum t log y` (requires a softmax head)

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{contract, Error, Result};

/// Magic header identifying the network checkpoint format.
pub const CHECKPOINT_MAGIC: &str = "BDPI-NET-1";

/// Perturbation used by the central finite-difference gradient oracle.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Rectifier,
    Identity,
    /// Row-wise softmax. Only legal on the final layer.
    Softmax,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Rectifier => "rectifier",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "rectifier" => Some(Activation::Rectifier),
            "identity" => Some(Activation::Identity),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Rectifier => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row /= sum;
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loss {
    MeanSquaredError,
    CrossEntropy,
}

/// Hyperparameters of one `train` call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub loss: Loss,
}

impl TrainSpec {
    pub fn new(learning_rate: f64, epochs: usize, loss: Loss) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(contract(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        if epochs == 0 {
            return Err(contract("epochs must be at least 1"));
        }
        Ok(Self {
            learning_rate,
            epochs,
            loss,
        })
    }
}

/// One dense layer. `bias` is `None` for bias-free layers (tabular critics).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weights: Array2<f64>,
    bias: Option<Array1<f64>>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        weights: Array2<f64>,
        bias: Option<Array1<f64>>,
        activation: Activation,
    ) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weights.nrows() {
                return Err(contract(format!(
                    "bias length {} does not match {} layer outputs",
                    b.len(),
                    weights.nrows()
                )));
            }
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(contract("layers need at least one input and one output"));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Array2<f64> {
        &mut self.weights
    }

    pub fn bias(&self) -> Option<&Array1<f64>> {
        self.bias.as_ref()
    }

    pub fn bias_mut(&mut self) -> Option<&mut Array1<f64>> {
        self.bias.as_mut()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn preactivation(&self, input: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = Array2::zeros((input.nrows(), self.outputs()));
        general_mat_mul(1.0, input, &self.weights.t(), 0.0, &mut z);
        if let Some(b) = &self.bias {
            z += b;
        }
        z
    }
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Option<Array1<f64>>>,
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in self.biases.iter_mut().flatten() {
            *b *= factor;
        }
    }

    /// Every gradient component, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| {
            w.iter()
                .copied()
                .chain(b.iter().flat_map(|b| b.iter().copied()))
        })
    }
}

/// A feed-forward network.
///
/// Not internally synchronized; distinct networks can be trained on
/// different threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract("a network needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(contract(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        let last = layers.len() - 1;
        if let Some(k) = layers[..last]
            .iter()
            .position(|l| l.activation == Activation::Softmax)
        {
            return Err(contract(format!(
                "softmax is only allowed on the final layer (found on layer {k})"
            )));
        }
        let net = Self { layers };
        if !net.is_finite() {
            return Err(contract("network parameters must be finite"));
        }
        Ok(net)
    }

    /// Randomly initialised network with the given layer widths
    /// (`widths[0]` inputs, `widths.last()` outputs). Weights and biases are
    /// drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(widths, hidden, output, |fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            rng.gen_range(-bound..=bound)
        })
    }

    /// Network with every parameter set to zero.
    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(widths, hidden, output, |_| 0.0)
    }

    /// A single bias-free identity layer with zero weights. Fed one-hot
    /// inputs, each weight column is the Q-row of one state.
    pub fn tabular(states: usize, actions: usize) -> Result<Self> {
        let layer = Layer::new(Array2::zeros((actions, states)), None, Activation::Identity)?;
        Self::from_layers(vec![layer])
    }

    fn build(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        mut init: impl FnMut(usize) -> f64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(contract("need at least an input and an output width"));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let activation = if k + 2 == widths.len() {
                output
            } else {
                hidden
            };
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || init(fan_in));
            let bias = Array1::from_shape_simple_fn(fan_out, || init(fan_in));
            layers.push(Layer::new(weights, Some(bias), activation)?);
        }
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.as_ref().map_or(0, |b| b.len()))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite())
                && l.bias.iter().flatten().all(|v| v.is_finite())
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view =
            ArrayView2::from_shape((1, input.len()), input).map_err(|e| contract(e.to_string()))?;
        Ok(self.forward_batch(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        let mut x = self.layers[0].preactivation(&inputs);
        self.layers[0].activation.apply(&mut x);
        for layer in &self.layers[1..] {
            let mut z = layer.preactivation(&x.view());
            layer.activation.apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    pub fn loss(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        loss: Loss,
    ) -> Result<f64> {
        self.check_targets(&inputs, &targets, loss)?;
        let out = self.forward_batch(inputs)?;
        Ok(loss_value(&out, &targets, loss))
    }

    /// Batch loss and its analytic gradient with respect to every parameter.
    pub fn gradients(
        &self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        loss: Loss,
    ) -> Result<(f64, Gradients)> {
        self.check_targets(&inputs, &targets, loss)?;

        // activations[k] is the input to layer k; pre[k] its preactivation
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len() + 1);
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        activations.push(inputs.to_owned());
        for layer in &self.layers {
            let z = layer.preactivation(&activations[activations.len() - 1].view());
            let mut a = z.clone();
            layer.activation.apply(&mut a);
            pre.push(z);
            activations.push(a);
        }
        let output = &activations[self.layers.len()];
        let value = loss_value(output, &targets, loss);

        let n = inputs.nrows() as f64;
        let last = self.layers.len() - 1;
        let mut delta = match loss {
            Loss::MeanSquaredError => {
                let scale = 2.0 / (n * output.ncols() as f64);
                let d_out = (output - &targets) * scale;
                activation_backward(self.layers[last].activation, d_out, &pre[last], output)
            }
            Loss::CrossEntropy => {
                // fused softmax + cross-entropy: dL/dz = (y * sum(t) - t) / N
                let mut d = output.clone();
                Zip::from(d.rows_mut())
                    .and(targets.rows())
                    .for_each(|mut row, t| {
                        let mass = t.sum();
                        row *= mass;
                        row -= &t;
                    });
                d / n
            }
        };

        let mut weights = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut biases = vec![None; self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            weights[k] = delta.t().dot(&activations[k]);
            biases[k] = layer.bias.as_ref().map(|_| delta.sum_axis(Axis(0)));
            if k > 0 {
                let d_prev = delta.dot(&layer.weights);
                delta = activation_backward(
                    self.layers[k - 1].activation,
                    d_prev,
                    &pre[k - 1],
                    &activations[k],
                );
            }
        }
        Ok((value, Gradients { weights, biases }))
    }

    /// Gradient descent step: `theta -= learning_rate * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for ((layer, gw), gb) in self
            .layers
            .iter_mut()
            .zip(&grads.weights)
            .zip(&grads.biases)
        {
            layer.weights.scaled_add(-learning_rate, gw);
            if let (Some(b), Some(gb)) = (layer.bias.as_mut(), gb.as_ref()) {
                b.scaled_add(-learning_rate, gb);
            }
        }
    }

    /// Runs `spec.epochs` full-batch gradient steps and returns the batch
    /// loss after the last step.
    pub fn train(
        &mut self,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        spec: &TrainSpec,
    ) -> Result<f64> {
        if inputs.nrows() == 0 {
            return Err(contract("cannot train on an empty batch"));
        }
        for epoch in 0..spec.epochs {
            let (value, grads) = self.gradients(inputs, targets, spec.loss)?;
            if !value.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss {value} at epoch {epoch}"
                )));
            }
            self.apply_gradients(&grads, spec.learning_rate);
        }
        let value = self.loss(inputs, targets, spec.loss)?;
        if !value.is_finite() || !self.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite loss {value} after {} epochs",
                spec.epochs
            )));
        }
        Ok(value)
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_width() {
            return Err(contract(format!(
                "input has width {}, network expects {}",
                inputs.ncols(),
                self.input_width()
            )));
        }
        Ok(())
    }

    fn check_targets(
        &self,
        inputs: &ArrayView2<f64>,
        targets: &ArrayView2<f64>,
        loss: Loss,
    ) -> Result<()> {
        self.check_input(inputs)?;
        if inputs.nrows() == 0 {
            return Err(contract("batch is empty"));
        }
        if targets.dim() != (inputs.nrows(), self.output_width()) {
            return Err(contract(format!(
                "targets have shape {:?}, expected ({}, {})",
                targets.dim(),
                inputs.nrows(),
                self.output_width()
            )));
        }
        if loss == Loss::CrossEntropy && self.output_activation() != Activation::Softmax {
            return Err(contract("cross-entropy requires a softmax output layer"));
        }
        Ok(())
    }

    /// Writes the checkpoint to `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file)).map_err(|e| match e {
            Error::Checkpoint { reason, .. } => Error::Checkpoint {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    /// Text checkpoint: the magic line, a layer count, then per layer a
    /// header `layer <inputs> <outputs> <activation> <bias|nobias>`, one line
    /// per weight row and an optional bias line. Values use the shortest
    /// exponent form that round-trips exactly.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "layers {}", self.layers.len())?;
        for layer in &self.layers {
            writeln!(
                w,
                "layer {} {} {} {}",
                layer.inputs(),
                layer.outputs(),
                layer.activation,
                if layer.bias.is_some() {
                    "bias"
                } else {
                    "nobias"
                }
            )?;
            for row in layer.weights.rows() {
                write_values(w, row.iter())?;
            }
            if let Some(b) = &layer.bias {
                write_values(w, b.iter())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(line) => Ok(line?),
                None => Err(bad(format!("unexpected end of file, expected {what}"))),
            }
        };
        let magic = next("magic header")?;
        if magic.trim() != CHECKPOINT_MAGIC {
            return Err(bad(format!("bad magic header {magic:?}")));
        }
        let count_line = next("layer count")?;
        let count: usize = match count_line.split_whitespace().collect::<Vec<_>>()[..] {
            ["layers", n] => n
                .parse()
                .map_err(|_| bad(format!("bad layer count {n:?}")))?,
            _ => return Err(bad(format!("expected `layers <n>`, got {count_line:?}"))),
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let header = next("layer header")?;
            let (inputs, outputs, activation, has_bias) =
                match header.split_whitespace().collect::<Vec<_>>()[..] {
                    ["layer", i, o, act, bias] => {
                        let i: usize = i.parse().map_err(|_| bad(format!("bad width {i:?}")))?;
                        let o: usize = o.parse().map_err(|_| bad(format!("bad width {o:?}")))?;
                        let act = Activation::from_tag(act)
                            .ok_or_else(|| bad(format!("unknown activation {act:?}")))?;
                        let has_bias = match bias {
                            "bias" => true,
                            "nobias" => false,
                            other => return Err(bad(format!("bad bias flag {other:?}"))),
                        };
                        (i, o, act, has_bias)
                    }
                    _ => return Err(bad(format!("bad layer header {header:?}"))),
                };
            let mut weights = Array2::zeros((outputs, inputs));
            for mut row in weights.rows_mut() {
                let values = parse_values(&next("weight row")?, inputs)?;
                row.assign(&Array1::from(values));
            }
            let bias = if has_bias {
                Some(Array1::from(parse_values(&next("bias row")?, outputs)?))
            } else {
                None
            };
            layers.push(Layer::new(weights, bias, activation).map_err(|e| bad(e.to_string()))?);
        }
        Network::from_layers(layers).map_err(|e| bad(e.to_string()))
    }
}

fn bad(reason: String) -> Error {
    Error::Checkpoint {
        path: Default::default(),
        reason,
    }
}

fn write_values<'a>(w: &mut impl Write, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(b" ")?;
        }
        write!(w, "{v:e}")?;
        first = false;
    }
    writeln!(w)?;
    Ok(())
}

fn parse_values(line: &str, expected: usize) -> Result<Vec<f64>> {
    let values = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| bad(format!("bad number {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(bad(format!(
            "expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

fn loss_value(output: &Array2<f64>, targets: &ArrayView2<f64>, loss: Loss) -> f64 {
    let n = output.nrows() as f64;
    match loss {
        Loss::MeanSquaredError => {
            let sq: f64 = Zip::from(output)
                .and(targets)
                .fold(0.0, |acc, &y, &t| acc + (y - t) * (y - t));
            sq / (n * output.ncols() as f64)
        }
        Loss::CrossEntropy => {
            let ce: f64 = Zip::from(output).and(targets).fold(0.0, |acc, &y, &t| {
                if t == 0.0 {
                    acc
                } else {
                    acc - t * y.ln()
                }
            });
            ce / n
        }
    }
}

/// Maps dL/da to dL/dz for one layer.
fn activation_backward(
    activation: Activation,
    mut d_out: Array2<f64>,
    pre: &Array2<f64>,
    out: &Array2<f64>,
) -> Array2<f64> {
    match activation {
        Activation::Identity => d_out,
        Activation::Rectifier => {
            Zip::from(&mut d_out).and(pre).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            d_out
        }
        Activation::Softmax => {
            // dz = y * (da - <da, y>)
            Zip::from(d_out.rows_mut())
                .and(out.rows())
                .for_each(|mut d, y| {
                    let dot = d.dot(&y);
                    d -= dot;
                    d *= &y;
                });
            d_out
        }
    }
}

/// Central finite-difference gradient of the loss on one example.
pub fn numerical_gradients(
    net: &Network,
    input: &[f64],
    target: &[f64],
    loss: Loss,
    step: f64,
) -> Result<Gradients> {
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| contract(e.to_string()))?;
    let t =
        ArrayView2::from_shape((1, target.len()), target).map_err(|e| contract(e.to_string()))?;
    let mut probe = net.clone();
    let eval = |probe: &mut Network, get: &dyn Fn(&mut Network) -> &mut f64| -> Result<f64> {
        let original = *get(probe);
        *get(probe) = original + step;
        let up = probe.loss(x, t, loss)?;
        *get(probe) = original - step;
        let down = probe.loss(x, t, loss)?;
        *get(probe) = original;
        Ok((up - down) / (2.0 * step))
    };

    let mut weights = Vec::with_capacity(net.layers.len());
    let mut biases = Vec::with_capacity(net.layers.len());
    for k in 0..net.layers.len() {
        let (rows, cols) = net.layers[k].weights.dim();
        let mut gw = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                gw[[i, j]] = eval(&mut probe, &move |n: &mut Network| {
                    &mut n.layers[k].weights[[i, j]]
                })?;
            }
        }
        weights.push(gw);
        let gb = match net.layers[k].bias.as_ref() {
            Some(b) => {
                let mut gb = Array1::zeros(b.len());
                for i in 0..b.len() {
                    gb[i] = eval(&mut probe, &move |n: &mut Network| {
                        &mut n.layers[k].bias.as_mut().expect("bias present")[i]
                    })?;
                }
                Some(gb)
            }
            None => None,
        };
        biases.push(gb);
    }
    Ok(Gradients { weights, biases })
}

/// Largest per-parameter relative error `|a - n| / |n|` between analytic and
/// numeric gradients. The denominator is floored at `1e-7` so that two
/// vanishing gradients compare as equal.
pub fn relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    analytic
        .values()
        .zip(numeric.values())
        .map(|(a, n)| (a - n).abs() / n.abs().max(1e-7))
        .fold(0.0, f64::max)
}

/// Compares backpropagation against central finite differences on a single
/// example and returns the maximum relative error.
pub fn gradient_check(net: &Network, input: &[f64], target: &[f64], loss: Loss) -> Result<f64> {
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| contract(e.to_string()))?;
    let t =
        ArrayView2::from_shape((1, target.len()), target).map_err(|e| contract(e.to_string()))?;
    let (_, analytic) = net.gradients(x, t, loss)?;
    let numeric = numerical_gradients(net, input, target, loss, FINITE_DIFFERENCE_STEP)?;
    Ok(relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_layer(n: usize, activation: Activation) -> Layer {
        Layer::new(Array2::eye(n), Some(Array1::zeros(n)), activation).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(&[3, 4, 2], Activation::Identity, Activation::Identity).unwrap();
        assert_eq!(net.forward(&[0.7, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Network::from_layers(vec![identity_layer(2, Activation::Identity)]).unwrap();
        assert_eq!(net.forward(&[0.3, -0.5]).unwrap(), vec![0.3, -0.5]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let net = Network::from_layers(vec![identity_layer(5, Activation::Softmax)]).unwrap();
        for p in net.forward(&[0.0; 5]).unwrap() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::zeros(&[3, 2], Activation::Identity, Activation::Identity).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn layer_widths_must_chain() {
        let a = Layer::new(Array2::zeros((4, 3)), None, Activation::Rectifier).unwrap();
        let b = Layer::new(Array2::zeros((2, 5)), None, Activation::Identity).unwrap();
        assert!(Network::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn softmax_only_on_final_layer() {
        let a = Layer::new(Array2::zeros((4, 3)), None, Activation::Softmax).unwrap();
        let b = Layer::new(Array2::zeros((2, 4)), None, Activation::Identity).unwrap();
        assert!(Network::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn one_dimensional_gradient_step() {
        // y = w x, data (1, 2), w0 = 0: dL/dw = 2 (0 - 2) 1 = -4, step +0.4
        let layer = Layer::new(array![[0.0]], None, Activation::Identity).unwrap();
        let mut net = Network::from_layers(vec![layer]).unwrap();
        let spec = TrainSpec::new(0.1, 1, Loss::MeanSquaredError).unwrap();
        let loss = net
            .train(array![[1.0]].view(), array![[2.0]].view(), &spec)
            .unwrap();
        assert!((net.layers()[0].weights()[[0, 0]] - 0.4).abs() < 1e-15);
        assert!((loss - 1.6 * 1.6).abs() < 1e-12);
    }

    #[test]
    fn matching_targets_leave_weights_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Network::new(
            &[3, 6, 2],
            Activation::Rectifier,
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]];
        let t = net.forward_batch(x.view()).unwrap();
        let before = net.clone();
        let spec = TrainSpec::new(0.5, 3, Loss::MeanSquaredError).unwrap();
        let loss = net.train(x.view(), t.view(), &spec).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(net, before);
    }

    #[test]
    fn xor_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = Network::new(
            &[2, 16, 1],
            Activation::Rectifier,
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let t = array![[0.0], [1.0], [1.0], [0.0]];
        let spec = TrainSpec::new(0.1, 5000, Loss::MeanSquaredError).unwrap();
        let loss = net.train(x.view(), t.view(), &spec).unwrap();
        assert!(loss < 1e-3, "loss {loss}");
    }

    #[test]
    fn zero_net_gradient_check_is_zero() {
        let net = Network::zeros(&[3, 4, 2], Activation::Rectifier, Activation::Identity).unwrap();
        let err = gradient_check(&net, &[0.0; 3], &[0.0; 2], Loss::MeanSquaredError).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Network::new(
            &[4, 5, 3],
            Activation::Rectifier,
            Activation::Identity,
            &mut rng,
        )
        .unwrap();
        let input = [0.3, -0.2, 0.9, 0.5];
        let target = [1.0, -1.0, 0.5];
        let x = ArrayView2::from_shape((1, 4), &input[..]).unwrap();
        let t = ArrayView2::from_shape((1, 3), &target[..]).unwrap();
        let (_, mut analytic) = net.gradients(x, t, Loss::MeanSquaredError).unwrap();
        analytic.scale(2.0);
        let numeric =
            numerical_gradients(&net, &input, &target, Loss::MeanSquaredError, 1e-5).unwrap();
        let err = relative_error(&analytic, &numeric);
        assert!((err - 1.0).abs() < 1e-3, "err {err}");
    }

    #[test]
    fn cross_entropy_requires_softmax() {
        let net = Network::zeros(&[2, 2], Activation::Identity, Activation::Identity).unwrap();
        let err = net.loss(
            array![[1.0, 0.0]].view(),
            array![[0.5, 0.5]].view(),
            Loss::CrossEntropy,
        );
        assert!(err.is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let layer = Layer::new(array![[1.0]], None, Activation::Identity).unwrap();
        let mut net = Network::from_layers(vec![layer]).unwrap();
        let spec = TrainSpec::new(1e3, 200, Loss::MeanSquaredError).unwrap();
        let res = net.train(array![[10.0]].view(), array![[0.0]].view(), &spec);
        assert!(matches!(res, Err(Error::Divergence(_))));
    }

    #[test]
    fn train_spec_validation() {
        assert!(TrainSpec::new(0.0, 1, Loss::MeanSquaredError).is_err());
        assert!(TrainSpec::new(0.1, 0, Loss::MeanSquaredError).is_err());
        assert!(TrainSpec::new(f64::NAN, 1, Loss::MeanSquaredError).is_err());
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let text = "BDPI-NET-0\nlayers 0\n";
        assert!(matches!(
            Network::read_from(text.as_bytes()),
            Err(Error::Checkpoint { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(
            &[8, 10, 5],
            Activation::Rectifier,
            Activation::Softmax,
            &mut rng,
        )
        .unwrap();
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert!(buf.starts_with(CHECKPOINT_MAGIC.as_bytes()));
        let back = Network::read_from(&buf[..]).unwrap();
        assert_eq!(back, net);

        let tab = Network::tabular(5, 2).unwrap();
        let mut buf = Vec::new();
        tab.write_to(&mut buf).unwrap();
        assert_eq!(Network::read_from(&buf[..]).unwrap(), tab);
    }
}
