//! A small fully connected network: softmax output, cross-entropy loss,
//! per-sample gradient descent, and the distance-scaled update used by
//! distance-weighted training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SvannError};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Layer sizes from input dimension to class count, plus the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = NetworkSpec { layer_sizes, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(SvannError::InvalidArgument("a network needs an input size and an output size".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(SvannError::InvalidArgument("layer sizes must be positive".into()));
        }
        Ok(())
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }
}

/// One dense layer: `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.inputs + col]
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

/// The parameter set of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub activation: Activation,
    pub layers: Vec<Layer>,
}

/// Per-layer input and backpropagated error for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSignal {
    /// Input to the layer.
    pub input: Vec<f64>,
    /// Gradient of the loss with respect to the layer's pre-activation.
    pub error: Vec<f64>,
}

impl LayerSignal {
    /// Loss gradient for weight `(row, col)`: the outer product `error ⊗ input`.
    pub fn weight_gradient(&self, row: usize, col: usize) -> f64 {
        self.error[row] * self.input[col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSignal {
    pub layers: Vec<LayerSignal>,
}

impl GradientSignal {
    fn check_finite(&self) -> Result<()> {
        let finite = self.layers.iter().all(|l| l.input.iter().chain(&l.error).all(|v| v.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(SvannError::Numeric("non-finite gradient signal".into()))
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry, ties to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct ForwardTrace {
    /// Layer inputs, `inputs[i]` feeds layer `i`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
}

impl Parameters {
    /// Glorot-uniform weights and zero biases, deterministic in `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
                Layer { inputs, outputs, weights, biases: vec![0.0; outputs] }
            })
            .collect();
        Ok(Parameters { activation: spec.activation, layers })
    }

    /// All-zero parameters with the given shape.
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Layer { inputs: w[0], outputs: w[1], weights: vec![0.0; w[0] * w[1]], biases: vec![0.0; w[1]] })
            .collect();
        Ok(Parameters { activation: spec.activation, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Checks internal shape consistency and finiteness, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(SvannError::InvalidInput("parameters have no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(SvannError::InvalidInput(format!("layer {i} has inconsistent shape")));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(SvannError::InvalidInput(format!("layer {i} input does not match previous output")));
            }
            if !l.weights.iter().chain(&l.biases).all(|v| v.is_finite()) {
                return Err(SvannError::Numeric(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() == spec.depth()
            && self.layers.iter().zip(spec.layer_sizes.windows(2)).all(|(l, w)| l.inputs == w[0] && l.outputs == w[1])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(SvannError::InvalidInput(format!("feature vector has length {}, network expects {}", x.len(), self.input_dim())));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SvannError::InvalidInput("non-finite feature".into()));
        }
        Ok(())
    }

    fn trace(&self, x: &[f64]) -> ForwardTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&current);
            let next = if i == last { Vec::new() } else { z.iter().map(|v| self.activation.apply(*v)).collect() };
            inputs.push(current);
            pre.push(z);
            current = next;
        }
        ForwardTrace { inputs, pre }
    }

    /// Output logits (pre-softmax).
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).pre.pop().expect("at least one layer"))
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Cross-entropy loss at `label` and the per-layer gradient signal.
    pub fn backprop(&self, x: &[f64], label: usize) -> Result<(f64, GradientSignal)> {
        self.check_input(x)?;
        if label >= self.class_count() {
            return Err(SvannError::InvalidInput(format!("label {label} out of range for {} classes", self.class_count())));
        }
        let ForwardTrace { inputs, pre } = self.trace(x);
        let logits = pre.last().expect("at least one layer");
        let loss = log_sum_exp(logits) - logits[label];
        let mut error = softmax(logits);
        error[label] -= 1.0;

        let mut signals = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let next_error = if i > 0 {
                let layer = &self.layers[i];
                let below = &pre[i - 1];
                let activated = &inputs[i];
                Some(
                    (0..layer.inputs)
                        .map(|c| {
                            let back: f64 = (0..layer.outputs).map(|r| layer.weight(r, c) * error[r]).sum();
                            back * self.activation.derivative(below[c], activated[c])
                        })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            signals.push(LayerSignal { input: inputs[i].clone(), error });
            match next_error {
                Some(e) => error = e,
                None => break,
            }
        }
        signals.reverse();
        Ok((loss, GradientSignal { layers: signals }))
    }

    fn check_signal(&self, g: &GradientSignal) -> Result<()> {
        let shapes_ok = g.layers.len() == self.layers.len()
            && g.layers.iter().zip(&self.layers).all(|(s, l)| s.input.len() == l.inputs && s.error.len() == l.outputs);
        if !shapes_ok {
            return Err(SvannError::InvalidInput("gradient signal does not match parameter shapes".into()));
        }
        g.check_finite()
    }

    /// In-place descent step `w ← w − rate · (error ⊗ input)`, `b ← b − rate · error`.
    pub fn apply_update(&mut self, g: &GradientSignal, rate: f64) -> Result<()> {
        self.check_signal(g)?;
        if !rate.is_finite() {
            return Err(SvannError::Numeric(format!("non-finite learning rate {rate}")));
        }
        for (layer, signal) in self.layers.iter_mut().zip(&g.layers) {
            for (r, row) in layer.weights.chunks_exact_mut(layer.inputs).enumerate() {
                let e = signal.error[r];
                for (w, xi) in row.iter_mut().zip(&signal.input) {
                    *w -= rate * (e * xi);
                }
                layer.biases[r] -= rate * e;
            }
        }
        Ok(())
    }

    /// Plain per-sample gradient descent step.
    pub fn sgd_step(&self, g: &GradientSignal, learning_rate: f64) -> Result<Parameters> {
        if learning_rate.is_nan() || learning_rate < 0.0 {
            return Err(SvannError::InvalidArgument(format!("learning rate {learning_rate} must be non-negative")));
        }
        let mut next = self.clone();
        next.apply_update(g, learning_rate)?;
        Ok(next)
    }

    /// Gradient step whose rate is divided by the squared sample-to-model distance,
    /// with the distance clamped below at `d_min`.
    pub fn distance_weighted_step(&self, g: &GradientSignal, learning_rate: f64, distance: f64, d_min: f64) -> Result<Parameters> {
        let rate = distance_weighted_rate(learning_rate, distance, d_min)?;
        self.sgd_step(g, rate)
    }
}

/// Effective rate `η / max(d, d_min)²`.
pub fn distance_weighted_rate(learning_rate: f64, distance: f64, d_min: f64) -> Result<f64> {
    if d_min.is_nan() || d_min <= 0.0 {
        return Err(SvannError::InvalidArgument(format!("d_min {d_min} must be positive")));
    }
    if distance.is_nan() || distance < 0.0 {
        return Err(SvannError::InvalidArgument(format!("distance {distance} must be non-negative")));
    }
    let d = distance.max(d_min);
    Ok(learning_rate / (d * d))
}
