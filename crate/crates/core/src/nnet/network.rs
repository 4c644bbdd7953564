use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, ResidualCache, ResidualParams};
use super::{NnetError, Tensor};

/// One layer of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// 3×3, stride 1, zero padding 1.
    Conv2d { out_channels: usize },
    Relu,
    /// 2×2 window, stride 2.
    MaxPool2,
    Flatten,
    Dense { out_features: usize },
    /// `relu(conv(relu(conv(x))) + x)` with channel count preserved.
    ResidualBlock { channels: usize },
    Softmax,
}

/// Registered architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    BlprCnn,
    BlprResnet,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Self::BlprCnn => "blpr-cnn",
            Self::BlprResnet => "blpr-resnet",
        }
    }

    pub fn layers(self, classes: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        match self {
            Self::BlprCnn => vec![
                Conv2d { out_channels: 16 },
                Relu,
                MaxPool2,
                Conv2d { out_channels: 32 },
                Relu,
                MaxPool2,
                Flatten,
                Dense { out_features: 128 },
                Relu,
                Dense { out_features: classes },
            ],
            Self::BlprResnet => vec![
                Conv2d { out_channels: 16 },
                ResidualBlock { channels: 16 },
                MaxPool2,
                ResidualBlock { channels: 16 },
                MaxPool2,
                Flatten,
                Dense { out_features: classes },
            ],
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blpr-cnn" | "cnn" => Ok(Self::BlprCnn),
            "blpr-resnet" | "resnet" => Ok(Self::BlprResnet),
            other => Err(format!("unknown architecture `{other}` (blpr-cnn|blpr-resnet)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: Vec<Tensor>,
}

/// A sequential network with its class names.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    pub(crate) layers: Vec<Layer>,
    classes: Vec<String>,
}

fn out_shape(spec: LayerSpec, input: &[usize]) -> Result<Vec<usize>, NnetError> {
    let mismatch = |msg: &str| NnetError::ShapeMismatch(format!("{spec:?} on {input:?}: {msg}"));
    match spec {
        LayerSpec::Conv2d { out_channels } => match input {
            [_, h, w] if out_channels > 0 => Ok(vec![out_channels, *h, *w]),
            _ => Err(mismatch("needs [C,H,W] and out_channels > 0")),
        },
        LayerSpec::ResidualBlock { channels } => match input {
            [c, _, _] if *c == channels => Ok(input.to_vec()),
            _ => Err(mismatch("channel count must match")),
        },
        LayerSpec::MaxPool2 => match input {
            [c, h, w] if h % 2 == 0 && w % 2 == 0 && *h > 0 && *w > 0 => Ok(vec![*c, h / 2, w / 2]),
            _ => Err(mismatch("spatial sides must be even")),
        },
        LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Dense { out_features } => match input {
            [_] if out_features > 0 => Ok(vec![out_features]),
            _ => Err(mismatch("needs a flat input")),
        },
    }
}

fn param_shapes(spec: LayerSpec, input: &[usize]) -> Vec<Vec<usize>> {
    match spec {
        LayerSpec::Conv2d { out_channels } => {
            vec![vec![out_channels, input[0], 3, 3], vec![out_channels]]
        }
        LayerSpec::ResidualBlock { channels: c } => {
            vec![vec![c, c, 3, 3], vec![c], vec![c, c, 3, 3], vec![c]]
        }
        LayerSpec::Dense { out_features } => vec![vec![out_features, input[0]], vec![out_features]],
        _ => vec![],
    }
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace {
    /// Input of every layer followed by the final output.
    activations: Vec<Tensor>,
    residual: Vec<Option<ResidualCache>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace holds the input")
    }
}

/// Per-layer parameter gradients, aligned with [`Network::params`].
pub type Gradients = Vec<Vec<Tensor>>;

impl Network {
    /// Builds a network with zero parameters; see [`Network::init_he_uniform`].
    pub fn new(input_shape: &[usize], specs: &[LayerSpec], classes: Vec<String>) -> Result<Self, NnetError> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for &spec in specs {
            let next = out_shape(spec, &shape)?;
            let params = param_shapes(spec, &shape).iter().map(|s| Tensor::zeros(s)).collect();
            layers.push(Layer {
                spec,
                in_shape: shape.clone(),
                out_shape: next.clone(),
                params,
            });
            shape = next;
        }
        if shape != [classes.len()] {
            return Err(NnetError::ShapeMismatch(format!(
                "network output {shape:?} does not match {} classes",
                classes.len()
            )));
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            classes,
        })
    }

    /// Registered architecture on `[3, 32, 32]` inputs, He-uniform initialized.
    pub fn build(arch: Architecture, classes: Vec<String>, rng: &mut impl Rng) -> Self {
        let specs = arch.layers(classes.len());
        let mut net = Self::new(&[3, 32, 32], &specs, classes).expect("registered architectures are valid");
        net.init_he_uniform(rng);
        net
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn init_he_uniform(&mut self, rng: &mut impl Rng) {
        for layer in &mut self.layers {
            for p in &mut layer.params {
                if p.shape().len() == 1 {
                    p.data_mut().fill(0.0);
                    continue;
                }
                let fan_in: usize = p.shape()[1..].iter().product();
                let limit = (6.0 / fan_in as f64).sqrt();
                for v in p.data_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
            }
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn params(&self) -> Vec<&[Tensor]> {
        self.layers.iter().map(|l| l.params.as_slice()).collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Vec<Tensor>> {
        self.layers.iter_mut().map(|l| &mut l.params)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(Tensor::len).sum()
    }

    /// Zero-valued gradients shaped like the parameters.
    pub fn zero_grads(&self) -> Gradients {
        self.layers
            .iter()
            .map(|l| l.params.iter().map(|p| Tensor::zeros(p.shape())).collect())
            .collect()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnetError> {
        if input.shape() != self.input_shape.as_slice() {
            return Err(NnetError::ShapeMismatch(format!(
                "expected input {:?}, got {:?}",
                self.input_shape,
                input.shape()
            )));
        }
        Ok(())
    }

    /// Logits for one input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnetError> {
        Ok(self.forward_trace(input)?.activations.pop().expect("non-empty"))
    }

    pub fn forward_trace(&self, input: &Tensor) -> Result<ForwardTrace, NnetError> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut residual = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let x = activations.last().expect("non-empty");
            let mut cache = None;
            let y = match layer.spec {
                LayerSpec::Conv2d { .. } => layers::conv2d_forward(x, &layer.params[0], &layer.params[1]),
                LayerSpec::Relu => layers::relu_forward(x),
                LayerSpec::MaxPool2 => layers::maxpool2_forward(x),
                LayerSpec::Flatten => x.clone().reshaped(&layer.out_shape),
                LayerSpec::Dense { .. } => layers::dense_forward(x, &layer.params[0], &layer.params[1]),
                LayerSpec::ResidualBlock { .. } => {
                    let (y, c) = layers::residual_forward(x, &residual_params(&layer.params));
                    cache = Some(c);
                    y
                }
                LayerSpec::Softmax => Tensor::from_vec(x.shape(), layers::softmax(x.data())),
            };
            residual.push(cache);
            activations.push(y);
        }
        Ok(ForwardTrace { activations, residual })
    }

    /// Reverse-mode gradients from a trace and the gradient of the output.
    pub fn backward_trace(&self, trace: &ForwardTrace, d_output: &Tensor) -> Result<(Tensor, Gradients), NnetError> {
        if d_output.shape() != trace.output().shape() {
            return Err(NnetError::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                d_output.shape(),
                trace.output().shape()
            )));
        }
        let mut grads: Gradients = vec![Vec::new(); self.layers.len()];
        let mut g = d_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[i];
            g = match layer.spec {
                LayerSpec::Conv2d { .. } => {
                    let (dx, dw, db) = layers::conv2d_backward(x, &layer.params[0], &g);
                    grads[i] = vec![dw, db];
                    dx
                }
                LayerSpec::Relu => layers::relu_backward(x, &g),
                LayerSpec::MaxPool2 => layers::maxpool2_backward(x, &g),
                LayerSpec::Flatten => g.reshaped(&layer.in_shape),
                LayerSpec::Dense { .. } => {
                    let (dx, dw, db) = layers::dense_backward(x, &layer.params[0], &g);
                    grads[i] = vec![dw, db];
                    dx
                }
                LayerSpec::ResidualBlock { .. } => {
                    let cache = trace.residual[i].as_ref().expect("residual cache recorded");
                    let (dx, [dw1, db1, dw2, db2]) =
                        layers::residual_backward(x, &residual_params(&layer.params), cache, &g);
                    grads[i] = vec![dw1, db1, dw2, db2];
                    dx
                }
                LayerSpec::Softmax => {
                    let probs = &trace.activations[i + 1];
                    Tensor::from_vec(x.shape(), layers::softmax_backward(probs.data(), g.data()))
                }
            };
        }
        Ok((g, grads))
    }

    /// Gradients of every parameter given `d_logits` for `input`.
    pub fn backward(&self, input: &Tensor, d_logits: &Tensor) -> Result<Gradients, NnetError> {
        let trace = self.forward_trace(input)?;
        Ok(self.backward_trace(&trace, d_logits)?.1)
    }
}

fn residual_params(p: &[Tensor]) -> ResidualParams<'_> {
    ResidualParams {
        w1: &p[0],
        b1: &p[1],
        w2: &p[2],
        b2: &p[3],
    }
}

/// Softmax cross-entropy: `-log softmax(logits)[label]` and its gradient
/// `softmax(logits) - onehot(label)`.
pub fn loss_and_grad(logits: &Tensor, label: usize) -> Result<(f64, Tensor), NnetError> {
    let n = logits.len();
    if label >= n {
        return Err(NnetError::LabelOutOfRange(label, n));
    }
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let loss = -(logits.data()[label] - max - log_sum);
    let mut grad = layers::softmax(logits.data());
    grad[label] -= 1.0;
    Ok((loss, Tensor::from_vec(logits.shape(), grad)))
}
