//! Small dense networks with backprop, Adam and a finite-difference checker.

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Softmax,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Self::Linear => 0,
            Self::Relu => 1,
            Self::Sigmoid => 2,
            Self::Softmax => 3,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => Self::Linear,
            1 => Self::Relu,
            2 => Self::Sigmoid,
            3 => Self::Softmax,
            _ => return Err(Error::Checkpoint(format!("unknown activation code {c}"))),
        })
    }

    fn apply(self, z: &mut [f64]) {
        match self {
            Self::Linear => {}
            Self::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Self::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Self::Softmax => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in z.iter_mut() {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                z.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Affine map followed by an activation. `weights` is `n_out x n_in`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            *zo += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
}

/// Per-sample training target.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Squared error on one output only (Q-value regression).
    Selected { index: usize, value: f64 },
    /// Mean binary cross-entropy over all outputs; targets in `[0, 1]`.
    BinaryCrossEntropy(Vec<f64>),
    /// Binary cross-entropy scaled by a sample weight; a negative weight pushes
    /// the outputs away from the targets.
    WeightedBinaryCrossEntropy { target: Vec<f64>, weight: f64 },
    /// Categorical cross-entropy against a distribution.
    CrossEntropy(Vec<f64>),
    /// Mean squared error over all outputs.
    Mse(Vec<f64>),
}

const LOG_FLOOR: f64 = 1e-12;

impl Target {
    fn loss(&self, y: &[f64]) -> f64 {
        match self {
            Self::Selected { index, value } => (y[*index] - value).powi(2),
            Self::BinaryCrossEntropy(t) => {
                t.iter()
                    .zip(y)
                    .map(|(t, y)| {
                        let y = y.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
                        -(t * y.ln() + (1.0 - t) * (1.0 - y).ln())
                    })
                    .sum::<f64>()
                    / t.len() as f64
            }
            Self::WeightedBinaryCrossEntropy { target, weight } => weight * Self::BinaryCrossEntropy(target.clone()).loss(y),
            Self::CrossEntropy(t) => -t.iter().zip(y).map(|(t, y)| t * y.max(LOG_FLOOR).ln()).sum::<f64>(),
            Self::Mse(t) => t.iter().zip(y).map(|(t, y)| (y - t).powi(2)).sum::<f64>() / t.len() as f64,
        }
    }

    fn width(&self) -> Option<usize> {
        match self {
            Self::Selected { .. } => None,
            Self::BinaryCrossEntropy(t) | Self::CrossEntropy(t) | Self::Mse(t) => Some(t.len()),
            Self::WeightedBinaryCrossEntropy { target, .. } => Some(target.len()),
        }
    }

    /// Gradient of the loss with respect to the final pre-activation.
    fn output_delta(&self, z: &[f64], y: &[f64], act: Activation) -> Vec<f64> {
        match (self, act) {
            (Self::BinaryCrossEntropy(t), Activation::Sigmoid) => {
                let n = t.len() as f64;
                y.iter().zip(t).map(|(y, t)| (y - t) / n).collect()
            }
            (Self::WeightedBinaryCrossEntropy { target, weight }, Activation::Sigmoid) => {
                let n = target.len() as f64;
                y.iter().zip(target).map(|(y, t)| weight * (y - t) / n).collect()
            }
            (Self::CrossEntropy(t), Activation::Softmax) => {
                let s: f64 = t.iter().sum();
                y.iter().zip(t).map(|(y, t)| s * y - t).collect()
            }
            _ => {
                let dy: Vec<f64> = match self {
                    Self::Selected { index, value } => {
                        let mut d = vec![0.0; y.len()];
                        d[*index] = 2.0 * (y[*index] - value);
                        d
                    }
                    Self::BinaryCrossEntropy(t) => {
                        let n = t.len() as f64;
                        t.iter()
                            .zip(y)
                            .map(|(t, y)| {
                                let y = y.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
                                (-(t / y) + (1.0 - t) / (1.0 - y)) / n
                            })
                            .collect()
                    }
                    Self::WeightedBinaryCrossEntropy { target, weight } => {
                        let n = target.len() as f64;
                        target
                            .iter()
                            .zip(y)
                            .map(|(t, y)| {
                                let y = y.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
                                weight * (-(t / y) + (1.0 - t) / (1.0 - y)) / n
                            })
                            .collect()
                    }
                    Self::CrossEntropy(t) => t.iter().zip(y).map(|(t, y)| -t / y.max(LOG_FLOOR)).collect(),
                    Self::Mse(t) => {
                        let n = t.len() as f64;
                        y.iter().zip(t).map(|(y, t)| 2.0 * (y - t) / n).collect()
                    }
                };
                activation_backward(act, z, y, &dy)
            }
        }
    }
}

fn activation_backward(act: Activation, z: &[f64], y: &[f64], dy: &[f64]) -> Vec<f64> {
    match act {
        Activation::Linear => dy.to_vec(),
        Activation::Relu => dy.iter().zip(z).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect(),
        Activation::Sigmoid => dy.iter().zip(y).map(|(d, y)| d * y * (1.0 - y)).collect(),
        Activation::Softmax => {
            let dot: f64 = dy.iter().zip(y).map(|(d, y)| d * y).sum();
            dy.iter().zip(y).map(|(d, y)| y * (d - dot)).collect()
        }
    }
}

/// Xavier-uniform weights, zero biases.
pub fn init_network<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<DenseNetwork> {
    init_network_scaled(sizes, activations, 1.0, rng)
}

/// As [`init_network`] with the uniform bound multiplied by `scale`.
pub fn init_network_scaled<R: Rng + ?Sized>(
    sizes: &[usize],
    activations: &[Activation],
    scale: f64,
    rng: &mut R,
) -> Result<DenseNetwork> {
    if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
        return Err(Error::Dimension(format!(
            "{} layer sizes need {} activations, got {}",
            sizes.len(),
            sizes.len().saturating_sub(1),
            activations.len()
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Dimension("layer of width 0".into()));
    }
    let mut layers = Vec::with_capacity(activations.len());
    for (i, act) in activations.iter().enumerate() {
        let (n_in, n_out) = (sizes[i], sizes[i + 1]);
        let bound = scale * (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
            .collect();
        layers.push(Layer { n_in, n_out, weights, bias: vec![0.0; n_out], activation: *act });
    }
    let net = DenseNetwork { layers };
    net.validate()?;
    Ok(net)
}

/// Per-layer gradients, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &DenseNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn flat(&self) -> Vec<f64> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| w.iter().chain(b)).copied().collect()
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).flatten().all(|v| v.is_finite())
    }
}

impl DenseNetwork {
    pub fn input_size(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::Dimension(format!("layer {i} parameter shapes do not match {}x{}", l.n_out, l.n_in)));
            }
            if i > 0 && self.layers[i - 1].n_out != l.n_in {
                return Err(Error::Dimension(format!("layer {i} expects {} inputs, previous gives {}", l.n_in, self.layers[i - 1].n_out)));
            }
            let last = i + 1 == self.layers.len();
            if !last && matches!(l.activation, Activation::Softmax | Activation::Sigmoid) {
                return Err(Error::Config(format!("{:?} only allowed on the final layer", l.activation)));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.1.pop().expect("at least one layer"))
    }

    /// Pre-activations and activations of every layer (activations include
    /// the input at index 0).
    fn forward_cached(&self, input: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension(format!("input has {} features, network expects {}", input.len(), self.input_size())));
        }
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut acts = vec![input.to_vec()];
        for (i, l) in self.layers.iter().enumerate() {
            let z = l.affine(&acts[i]);
            let mut a = z.clone();
            l.activation.apply(&mut a);
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} output")));
            }
            zs.push(z);
            acts.push(a);
        }
        Ok((zs, acts))
    }

    fn check_target(&self, target: &Target) -> Result<()> {
        match target {
            Target::Selected { index, value } => {
                if *index >= self.output_size() {
                    return Err(Error::Dimension(format!("selected output {index} of {}", self.output_size())));
                }
                if !value.is_finite() {
                    return Err(Error::NonFinite("regression target".into()));
                }
            }
            _ => {
                if target.width() != Some(self.output_size()) {
                    return Err(Error::Dimension("target width differs from network output".into()));
                }
            }
        }
        Ok(())
    }

    /// Loss and parameter gradients for one sample.
    pub fn gradients(&self, input: &[f64], target: &Target) -> Result<(f64, Gradients)> {
        self.check_target(target)?;
        let (zs, acts) = self.forward_cached(input)?;
        let last = self.layers.len() - 1;
        let y = &acts[last + 1];
        let loss = target.loss(y);
        let mut grads = Gradients::zeros(self);
        let mut delta = target.output_delta(&zs[last], y, self.layers[last].activation);
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = &acts[li];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grads.bias[li][o] += d;
                let gw = &mut grads.weights[li][o * layer.n_in..(o + 1) * layer.n_in];
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if li == 0 {
                break;
            }
            let mut dx = vec![0.0; layer.n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (g, w) in dx.iter_mut().zip(row) {
                    *g += d * w;
                }
            }
            let prev = &self.layers[li - 1];
            delta = activation_backward(prev.activation, &zs[li - 1], &acts[li], &dx);
        }
        Ok((loss, grads))
    }

    fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            if i < l.weights.len() {
                return &mut l.weights[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)).copied().collect()
    }

    /// Serializes to the checkpoint layout: `u32` layer count, then per
    /// layer `u32 n_in, u32 n_out, u8 activation`, then every layer's
    /// row-major weights followed by its biases as `f64`, all little endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.layers.len() * 9 + self.parameter_count() * 8);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.n_in as u32).to_le_bytes());
            out.extend_from_slice(&(l.n_out as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for v in self.parameters() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let short = || Error::Checkpoint("checkpoint truncated".into());
        let u32_at = |pos: usize| -> Result<usize> {
            let b = bytes.get(pos..pos + 4).ok_or_else(short)?;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        };
        let n_layers = u32_at(0)?;
        let mut pos = 4;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let (n_in, n_out) = (u32_at(pos)?, u32_at(pos + 4)?);
            let act = Activation::from_code(*bytes.get(pos + 8).ok_or_else(short)?)?;
            pos += 9;
            layers.push(Layer { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out], activation: act });
        }
        let mut net = DenseNetwork { layers };
        let expected = pos + net.parameter_count() * 8;
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!("checkpoint has {} bytes, layout needs {expected}", bytes.len())));
        }
        for (p, chunk) in net.params_mut().zip(bytes[pos..].chunks_exact(8)) {
            *p = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
        net.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &DenseNetwork) -> Self {
        let n = net.parameter_count();
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One Adam step on the batch-mean loss. Returns the loss before the step.
pub fn train_batch(
    net: &mut DenseNetwork,
    inputs: &[Vec<f64>],
    targets: &[Target],
    opt: &mut Adam,
    learning_rate: f64,
) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Dimension(format!("batch of {} inputs and {} targets", inputs.len(), targets.len())));
    }
    let mut total = Gradients::zeros(net);
    let mut loss = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let (l, g) = net.gradients(x, t)?;
        loss += l;
        for (acc, gi) in total.weights.iter_mut().chain(total.bias.iter_mut()).zip(g.weights.iter().chain(&g.bias)) {
            acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b);
        }
    }
    let n = inputs.len() as f64;
    loss /= n;
    if !total.all_finite() || !loss.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let grad = total.flat();
    opt.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.step.min(i32::MAX as u64) as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.step.min(i32::MAX as u64) as i32);
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.epsilon);
    for (((p, g), m), v) in net.params_mut().zip(&grad).zip(opt.m.iter_mut()).zip(opt.v.iter_mut()) {
        let g = g / n;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    }
    if net.parameters().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(loss)
}

/// Max relative error between backprop and central differences (h = 1e-5)
/// over every parameter.
pub fn finite_diff_check(net: &DenseNetwork, input: &[f64], target: &Target) -> Result<f64> {
    const H: f64 = 1e-5;
    let (_, grads) = net.gradients(input, target)?;
    let analytic = grads.flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let n = probe.parameter_count();
    for i in 0..n {
        let orig = *probe.param_mut(i);
        let mut eval = |v: f64| -> Result<f64> {
            *probe.param_mut(i) = v;
            let y = probe.forward(input)?;
            Ok(target.loss(&y))
        };
        let numeric = (eval(orig + H)? - eval(orig - H)?) / (2.0 * H);
        eval(orig)?;
        worst = worst.max((analytic[i] - numeric).abs() / (numeric.abs() + 1e-8));
    }
    Ok(worst)
}
