//! Three-layer perceptron with tanh hidden layers and manual reverse mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::{sigmoid_eval, tanh_eval};
use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const HIDDEN: usize = 10;

/// Which of the three network shapes a parameter set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    /// sensing → speed
    Distributed,
    /// sensing + (rx_left, rx_right) → (speed, sigmoid message)
    SingleComm,
    /// (rx_left, rx_right) → (sigmoid colour probability, sigmoid message)
    Colour,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Distributed => "distributed",
            Arch::SingleComm => "single_comm",
            Arch::Colour => "colour",
        }
    }

    pub fn output_width(self) -> usize {
        match self {
            Arch::Distributed => 1,
            Arch::SingleComm | Arch::Colour => 2,
        }
    }

    /// Network input width for a sensing view of `sensing` values.
    pub fn input_width(self, sensing: usize) -> usize {
        match self {
            Arch::Distributed => sensing,
            Arch::SingleComm => sensing + 2,
            Arch::Colour => 2,
        }
    }

    /// Output channels passed through a sigmoid.
    pub fn sigmoid_channels(self) -> &'static [usize] {
        match self {
            Arch::Distributed => &[],
            Arch::SingleComm => &[1],
            Arch::Colour => &[0, 1],
        }
    }

    /// Output channel carrying the transmitted message, if any.
    pub fn message_channel(self) -> Option<usize> {
        match self {
            Arch::Distributed => None,
            Arch::SingleComm | Arch::Colour => Some(1),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer { weight: Matrix::zeros(rows, cols), bias: vec![0.0; rows] }
    }

    fn zeros_like(&self) -> Self {
        Layer::zeros(self.weight.rows, self.weight.cols)
    }
}

/// Hidden-layer nonlinearity. `Identity` exists for closed-form gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hidden {
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: Arch,
    pub layers: Vec<Layer>,
}

/// Gradients share the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data.iter_mut().zip(&b.weight.data) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weight.data.iter().chain(&l.bias).copied())
        .collect()
}

/// Intermediate values kept by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer (the network input, then each hidden activation).
    inputs: Vec<Vec<f64>>,
    /// Final outputs after the selective sigmoid.
    output: Vec<f64>,
    hidden: Hidden,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl MlpParams {
    /// Fresh parameters with the standard shape `w → 10 → 10 → out`, drawn
    /// from Uniform[−1/√fan_in, 1/√fan_in].
    pub fn init(arch: Arch, input_width: usize, seed: u64) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::shape("input width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [input_width, HIDDEN, HIDDEN, arch.output_width()];
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut layer = Layer::zeros(fan_out, fan_in);
                for v in layer.weight.data.iter_mut().chain(layer.bias.iter_mut()) {
                    *v = rng.random_range(-bound..=bound);
                }
                layer
            })
            .collect();
        Ok(MlpParams { arch, layers })
    }

    pub fn zeros(arch: Arch, input_width: usize) -> Self {
        let dims = [input_width, HIDDEN, HIDDEN, arch.output_width()];
        MlpParams {
            arch,
            layers: dims.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect(),
        }
    }

    /// Assembles parameters from explicit layers, checking the dimension chain
    /// and the output width required by `arch`.
    pub fn from_layers(arch: Arch, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != 3 {
            return Err(Error::shape(format!("expected 3 layers, got {}", layers.len())));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.rows || l.weight.data.len() != l.weight.rows * l.weight.cols {
                return Err(Error::shape(format!("layer {k} has inconsistent shapes")));
            }
        }
        for (k, w) in layers.windows(2).enumerate() {
            if w[0].weight.rows != w[1].weight.cols {
                return Err(Error::shape(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    w[0].weight.rows,
                    k + 1,
                    w[1].weight.cols
                )));
            }
        }
        let out = layers[2].weight.rows;
        if out != arch.output_width() {
            return Err(Error::Arch {
                expected: format!("{arch} with {} outputs", arch.output_width()),
                found: format!("{out} outputs"),
            });
        }
        if arch == Arch::Colour && layers[0].weight.cols != 2 {
            return Err(Error::shape("colour network takes exactly 2 inputs"));
        }
        Ok(MlpParams { arch, layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.cols
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.rows
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads { layers: self.layers.iter().map(Layer::zeros_like).collect() }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for l in &mut self.layers {
            for v in l.weight.data.iter_mut().chain(l.bias.iter_mut()) {
                *v = *it.next().expect("flat parameter vector too short");
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Linear → tanh → linear → tanh → linear, then the arch's sigmoid channels.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.forward_with(input, Hidden::Tanh)
    }

    pub fn forward_with(&self, input: &[f64], hidden: Hidden) -> Result<(Vec<f64>, Tape)> {
        if input.len() != self.input_width() {
            return Err(Error::shape(format!(
                "{} network expects {} inputs, got {}",
                self.arch,
                self.input_width(),
                input.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = input.to_vec();
        for layer in &self.layers[..last] {
            let z = layer.weight.affine(&a, &layer.bias);
            let act = match hidden {
                Hidden::Tanh => z.iter().map(|&v| tanh_eval(v)).collect(),
                Hidden::Identity => z,
            };
            inputs.push(std::mem::replace(&mut a, act));
        }
        let out_layer = &self.layers[last];
        let mut out = out_layer.weight.affine(&a, &out_layer.bias);
        inputs.push(a);
        for &c in self.arch.sigmoid_channels() {
            out[c] = sigmoid_eval(out[c]);
        }
        let tape = Tape { inputs, output: out.clone(), hidden };
        Ok((out, tape))
    }

    /// Output only, no tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Reverse pass. `upstream` is the loss gradient with respect to the final
    /// (post-sigmoid) outputs. Returns the parameter gradients and the gradient
    /// with respect to the network input.
    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        if tape.inputs.len() != self.layers.len()
            || tape.inputs[0].len() != self.input_width()
            || upstream.len() != self.output_width()
            || tape.output.len() != self.output_width()
        {
            return Err(Error::shape("tape does not belong to these parameters"));
        }
        let mut grads = self.zero_grads();
        let mut delta = upstream.to_vec();
        for &c in self.arch.sigmoid_channels() {
            let s = tape.output[c];
            delta[c] *= s * (1.0 - s);
        }
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            grads.layers[k].weight.add_outer(&delta, &tape.inputs[k]);
            for (b, d) in grads.layers[k].bias.iter_mut().zip(&delta) {
                *b += d;
            }
            let mut back = layer.weight.transpose_mul(&delta);
            if k > 0 && tape.hidden == Hidden::Tanh {
                // d tanh(z)/dz = 1 − tanh(z)², and tape.inputs[k] holds tanh(z).
                for (g, a) in back.iter_mut().zip(&tape.inputs[k]) {
                    *g *= 1.0 - a * a;
                }
            }
            delta = back;
        }
        Ok((grads, delta))
    }
}
