//! Minimal fully connected network engine.
//!
//! Layers compute `z = a · Wᵀ + b` with `W` stored `out × in`. Every layer but the
//! last is followed by ReLU (subgradient 0 at 0); the last layer emits logits.
//! Losses are batch means, and logarithms take arguments floored at [`LOG_FLOOR`].

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::matrix::{argmax, gemm, Matrix};
use crate::rng::{self, Rng};

/// Floor applied to probabilities before taking logarithms in CE and KL.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Activation {
    #[default]
    Relu,
}

/// Layer widths `(input, hidden..., output)` of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an MLP needs at least 2 layer sizes, got {}",
                layer_sizes.len()
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("layer sizes must be >= 1: {layer_sizes:?}")));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation: Activation::Relu,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// One affine layer: `weight` is `out × in`, `bias` has length `out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (in + out))`, zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..input * output).map(|_| dist.sample(rng)).collect();
        Self {
            weight: Matrix::from_vec(output, input, data),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }
}

/// Trainable parameters of an MLP, first layer first.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    /// Validates that layer shapes chain and rebuilds the spec they describe.
    pub fn spec(&self) -> Result<MlpSpec> {
        let first = self.layers.first().ok_or(Error::Empty("MLP without layers"))?;
        let mut sizes = vec![first.input_dim()];
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.input_dim() != *sizes.last().unwrap() {
                return Err(Error::shape(
                    format!("layer {k} input {}", sizes.last().unwrap()),
                    format!("layer {k} input {}", layer.input_dim()),
                ));
            }
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::shape(
                    format!("layer {k} bias {}", layer.output_dim()),
                    format!("layer {k} bias {}", layer.bias.len()),
                ));
            }
            sizes.push(layer.output_dim());
        }
        MlpSpec::new(sizes)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.data().len() + l.bias.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }
}

/// Draws Glorot-uniform weights and zero biases from stream `(seed, 0)`.
pub fn init_params(spec: &MlpSpec, seed: u64) -> MlpParams {
    let mut rng = rng::stream(seed, 0);
    MlpParams {
        layers: init_layers(spec.layer_sizes(), &mut rng),
    }
}

pub(crate) fn init_layers(sizes: &[usize], rng: &mut Rng) -> Vec<Dense> {
    sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect()
}

/// Activations recorded by [`forward`] for use by [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input of every layer: `layer_inputs[0]` is the batch, `layer_inputs[k]` the
    /// ReLU output of layer `k - 1`.
    layer_inputs: Vec<Matrix>,
}

impl ForwardCache {
    pub fn layer_inputs(&self) -> &[Matrix] {
        &self.layer_inputs
    }
}

fn affine(layer: &Dense, input: &Matrix) -> Matrix {
    let mut z = Matrix::from_fn(input.rows(), layer.output_dim(), |_, c| layer.bias[c]);
    gemm(input, false, &layer.weight, true, 1.0, 1.0, &mut z);
    z
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.data_mut() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
fn relu_mask(grad: &mut Matrix, activated: &Matrix) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activated.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Runs a layer stack, returning its output and the input of every layer.
pub(crate) fn forward_stack(layers: &[Dense], input: &Matrix, activate_last: bool) -> (Matrix, Vec<Matrix>) {
    let mut layer_inputs = Vec::with_capacity(layers.len());
    let mut current = input.clone();
    for (k, layer) in layers.iter().enumerate() {
        let mut z = affine(layer, &current);
        if k + 1 < layers.len() || activate_last {
            relu_in_place(&mut z);
        }
        layer_inputs.push(current);
        current = z;
    }
    (current, layer_inputs)
}

/// Inference-only pass; keeps no activation record.
pub(crate) fn predict_stack(layers: &[Dense], input: &Matrix, activate_last: bool) -> Matrix {
    let mut current: Option<Matrix> = None;
    for (k, layer) in layers.iter().enumerate() {
        let mut z = affine(layer, current.as_ref().unwrap_or(input));
        if k + 1 < layers.len() || activate_last {
            relu_in_place(&mut z);
        }
        current = Some(z);
    }
    current.unwrap_or_else(|| input.clone())
}

/// Reverse pass through a stack produced by [`forward_stack`].
///
/// `activated_output` must be the stack output when `activate_last` was set.
/// Returns per-layer gradients and, if requested, the gradient w.r.t. the input.
pub(crate) fn backward_stack(
    layers: &[Dense],
    layer_inputs: &[Matrix],
    activated_output: Option<&Matrix>,
    grad_output: &Matrix,
    want_input_grad: bool,
) -> (Vec<Dense>, Option<Matrix>) {
    let mut delta = grad_output.clone();
    if let Some(out) = activated_output {
        relu_mask(&mut delta, out);
    }
    let mut grads: Vec<Dense> = Vec::with_capacity(layers.len());
    let mut input_grad = None;
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let a = &layer_inputs[k];
        let mut gw = Matrix::zeros(layer.output_dim(), layer.input_dim());
        gemm(&delta, true, a, false, 1.0, 0.0, &mut gw);
        let mut gb = vec![0.0; layer.output_dim()];
        for row in delta.row_iter() {
            for (b, d) in gb.iter_mut().zip(row) {
                *b += d;
            }
        }
        grads.push(Dense { weight: gw, bias: gb });
        if k > 0 || want_input_grad {
            let mut prev = Matrix::zeros(delta.rows(), layer.input_dim());
            gemm(&delta, false, &layer.weight, false, 1.0, 0.0, &mut prev);
            if k > 0 {
                relu_mask(&mut prev, a);
                delta = prev;
            } else {
                input_grad = Some(prev);
            }
        }
    }
    grads.reverse();
    (grads, input_grad)
}

/// Logits for a batch, plus the activation record needed by [`backward`].
pub fn forward(params: &MlpParams, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
    check_input(params, inputs)?;
    let (logits, layer_inputs) = forward_stack(&params.layers, inputs, false);
    Ok((logits, ForwardCache { layer_inputs }))
}

/// Logits without keeping an activation record.
pub fn predict_logits(params: &MlpParams, inputs: &Matrix) -> Result<Matrix> {
    check_input(params, inputs)?;
    Ok(predict_stack(&params.layers, inputs, false))
}

/// Class probabilities (softmax at T = 1).
pub fn predict_proba(params: &MlpParams, inputs: &Matrix) -> Result<Matrix> {
    Ok(softmax(&predict_logits(params, inputs)?))
}

fn check_input(params: &MlpParams, inputs: &Matrix) -> Result<()> {
    if params.layers.is_empty() {
        return Err(Error::Empty("MLP without layers"));
    }
    if inputs.cols() != params.input_dim() {
        return Err(Error::shape(
            format!("inputs with {} columns", params.input_dim()),
            format!("{} columns", inputs.cols()),
        ));
    }
    Ok(())
}

/// Exact gradients of a loss w.r.t. every parameter, given `dL/dlogits`.
pub fn backward(params: &MlpParams, cache: &ForwardCache, grad_wrt_logits: &Matrix) -> Result<MlpParams> {
    if cache.layer_inputs.len() != params.layers.len() {
        return Err(Error::shape(
            format!("cache for {} layers", params.layers.len()),
            format!("cache for {} layers", cache.layer_inputs.len()),
        ));
    }
    for (k, (layer, input)) in params.layers.iter().zip(&cache.layer_inputs).enumerate() {
        if input.cols() != layer.input_dim() {
            return Err(Error::shape(
                format!("layer {k} input width {}", layer.input_dim()),
                format!("{}", input.cols()),
            ));
        }
    }
    let batch = cache.layer_inputs[0].rows();
    grad_wrt_logits.ensure_shape(batch, params.output_dim())?;
    let (layers, _) = backward_stack(&params.layers, &cache.layer_inputs, None, grad_wrt_logits, false);
    Ok(MlpParams { layers })
}

/// Row-wise softmax of `logits / temperature`, computed with max subtraction.
pub fn softmax_t(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(logits.cols().max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = ((*v - max) / temperature).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Softmax at temperature 1.
pub fn softmax(logits: &Matrix) -> Matrix {
    softmax_t(logits, 1.0).expect("temperature 1 is valid")
}

/// Batch mean of `-Σ y log(max(p, LOG_FLOOR))`.
pub fn cross_entropy(probs: &Matrix, labels_onehot: &Matrix) -> Result<f64> {
    probs.ensure_same_shape(labels_onehot)?;
    if probs.rows() == 0 {
        return Err(Error::Empty("cross entropy over an empty batch"));
    }
    let total: f64 = probs
        .data()
        .iter()
        .zip(labels_onehot.data())
        .filter(|(_, &y)| y != 0.0)
        .map(|(&p, &y)| -y * p.max(LOG_FLOOR).ln())
        .sum();
    Ok(total / probs.rows() as f64)
}

/// Batch mean of `Σ p log(p / max(q, LOG_FLOOR))`, with `0 · log 0 = 0`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> Result<f64> {
    p.ensure_same_shape(q)?;
    if p.rows() == 0 {
        return Err(Error::Empty("KL divergence over an empty batch"));
    }
    Ok(kl_sum(p, q) / p.rows() as f64)
}

/// Unnormalised KL sum over all rows.
pub(crate) fn kl_sum(p: &Matrix, q: &Matrix) -> f64 {
    p.data()
        .iter()
        .zip(q.data())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(LOG_FLOOR)).ln())
        .sum()
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::InvalidArgument(format!("label {y} >= class count {classes}")));
        }
        m.set(r, y, 1.0);
    }
    Ok(m)
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(scores: &Matrix, labels: &[usize]) -> f64 {
    assert_eq!(scores.rows(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let hits = scores.row_iter().zip(labels).filter(|(row, &y)| argmax(row) == y).count();
    hits as f64 / labels.len() as f64
}

/// Inputs with one-hot labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Matrix,
    labels_onehot: Matrix,
}

impl Batch {
    pub fn new(inputs: Matrix, labels_onehot: Matrix) -> Result<Self> {
        if inputs.rows() != labels_onehot.rows() {
            return Err(Error::shape(
                format!("{} label rows", inputs.rows()),
                format!("{}", labels_onehot.rows()),
            ));
        }
        for (r, row) in labels_onehot.row_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::InvalidArgument(format!("label row {r} is not one-hot")));
            }
        }
        Ok(Self { inputs, labels_onehot })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels_onehot(&self) -> &Matrix {
        &self.labels_onehot
    }
}

/// Flat views over every trainable tensor, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Parameters for Dense {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weight.data(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.data_mut(), &mut self.bias]
    }
}

impl Parameters for [Dense] {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter().flat_map(Dense::tensors).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(Dense::tensors_mut).collect()
    }
}

impl Parameters for MlpParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.as_slice().tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.as_mut_slice().tensors_mut()
    }
}

/// Adam hyperparameters. Defaults: lr 1e-3, β1 0.9, β2 0.999, ε 1e-7.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam configuration {self:?}")))
        }
    }
}

/// Moment accumulators and step counter for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// Zeroed accumulators shaped like `params`.
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            config,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }
}

/// One bias-corrected Adam update, in place; increments the step counter.
pub fn adam_step<P: Parameters + ?Sized>(params: &mut P, grads: &P, state: &mut AdamState) -> Result<()> {
    let grads = grads.tensors();
    let mut params = params.tensors_mut();
    if params.len() != state.first_moment.len() || grads.len() != params.len() {
        return Err(Error::shape(
            format!("{} tensors", state.first_moment.len()),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for (k, ((p, g), m)) in params.iter().zip(&grads).zip(&state.first_moment).enumerate() {
        if p.len() != m.len() || g.len() != m.len() {
            return Err(Error::shape(
                format!("tensor {k} of length {}", m.len()),
                format!("{} params / {} grads", p.len(), g.len()),
            ));
        }
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

/// Shuffled minibatch stream over a fixed index set.
///
/// Indices are visited in successive Fisher-Yates permutations; a batch may span
/// two permutations, so every batch has exactly `batch_size` entries (or the whole
/// set when it is smaller).
pub struct BatchSampler {
    pool: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: Rng,
}

impl BatchSampler {
    pub fn new(indices: &[usize], batch_size: usize, rng: Rng) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("batch sampler over an empty index set"));
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        let pool = indices.to_vec();
        Ok(Self {
            order: pool.clone(),
            cursor: pool.len(),
            batch_size: batch_size.min(pool.len()),
            pool,
            rng,
        })
    }

    fn reshuffle(&mut self) {
        self.order.copy_from_slice(&self.pool);
        for i in (1..self.order.len()).rev() {
            let j = self.rng.random_range(0..=i);
            self.order.swap(i, j);
        }
        self.cursor = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        while batch.len() < self.batch_size {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            let take = (self.batch_size - batch.len()).min(self.order.len() - self.cursor);
            batch.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sizes: &[usize]) -> MlpSpec {
        MlpSpec::new(sizes.to_vec()).unwrap()
    }

    #[test]
    fn init_shapes_bounds_and_determinism() {
        let s = spec(&[2, 3, 2]);
        let p = init_params(&s, 7);
        assert_eq!(p.layers[0].weight.shape(), (3, 2));
        assert_eq!(p.layers[1].weight.shape(), (2, 3));
        assert_eq!(p.layers[0].bias, vec![0.0; 3]);
        assert_eq!(p.layers[1].bias, vec![0.0; 2]);
        let bound = (6.0f64 / 5.0).sqrt();
        for l in &p.layers {
            assert!(l.weight.data().iter().all(|w| w.abs() <= bound));
        }
        let q = init_params(&s, 7);
        let bits = |m: &MlpParams| m.tensors().concat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert_ne!(bits(&p), bits(&init_params(&s, 8)));
    }

    #[test]
    fn mnist_mlp_parameter_count() {
        // 784·50+50 + 50·50+50 + 50·10+10
        let s = spec(&[784, 50, 50, 10]);
        assert_eq!(s.parameter_count(), 42_310);
        assert_eq!(init_params(&s, 0).parameter_count(), 42_310);
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3]).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let s = spec(&[4, 5, 3]);
        let mut p = init_params(&s, 1);
        for l in &mut p.layers {
            l.weight.data_mut().fill(0.0);
        }
        let x = Matrix::from_fn(6, 4, |r, c| (r as f64) - (c as f64) * 0.3);
        let (logits, _) = forward(&p, &x).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_inputs_through() {
        let p = MlpParams {
            layers: vec![Dense {
                weight: Matrix::identity(3),
                bias: vec![0.0; 3],
            }],
        };
        let x = Matrix::from_fn(2, 3, |r, c| r as f64 * 1.5 - c as f64);
        let (logits, _) = forward(&p, &x).unwrap();
        assert_eq!(logits, x);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = init_params(&spec(&[3, 2]), 0);
        assert!(matches!(forward(&p, &Matrix::zeros(1, 4)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap());
        assert_eq!(s.row(0), &[0.5, 0.5]);
        let e = std::f64::consts::E;
        assert!((s.get(1, 0) - e / (e + 1.0)).abs() < 1e-15);
        assert!((s.get(1, 0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((s.get(1, 1) - 0.268_941_421_369_995_1).abs() < 1e-15);
        let hot = softmax_t(&Matrix::from_rows(&[vec![5.0, 1.0]]).unwrap(), 1000.0).unwrap();
        assert!(hot.row(0).iter().all(|p| (p - 0.5).abs() < 1e-3));
        assert!(softmax_t(&hot, 0.0).is_err());
        assert!(softmax_t(&hot, -1.0).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let one = |r: Vec<f64>| Matrix::from_rows(&[r]).unwrap();
        assert!(cross_entropy(&one(vec![1.0, 0.0]), &one(vec![1.0, 0.0])).unwrap().abs() < 1e-15);
        let v = cross_entropy(&one(vec![0.5, 0.5]), &one(vec![1.0, 0.0])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let v = cross_entropy(&one(vec![0.25, 0.75]), &one(vec![0.0, 1.0])).unwrap();
        assert!((v - 0.287_682_072_451_780_9).abs() < 1e-12);
        // floored, not infinite
        let v = cross_entropy(&one(vec![0.0, 1.0]), &one(vec![1.0, 0.0])).unwrap();
        assert!((v - 1e-12f64.ln().abs()).abs() < 1e-9);
        assert!(cross_entropy(&one(vec![1.0]), &one(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn kl_examples() {
        let one = |r: Vec<f64>| Matrix::from_rows(&[r]).unwrap();
        let p = one(vec![0.3, 0.7]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let v = kl_divergence(&one(vec![1.0, 0.0]), &one(vec![0.5, 0.5])).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        let v = kl_divergence(&one(vec![0.5, 0.5]), &one(vec![0.9, 0.1])).unwrap();
        assert!((v - 0.510_825_623_765_990_7).abs() < 1e-12);
        assert!(kl_divergence(&p, &one(vec![1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = init_params(&spec(&[3, 4, 2]), 3);
        let before = p.clone();
        let mut state = AdamState::new(AdamConfig::default(), &p);
        let g = p.zeros_like();
        adam_step(&mut p, &g, &mut state).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 1);
        assert!(state.first_moment().iter().flatten().all(|&m| m == 0.0));
        assert!(state.second_moment().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // At t = 1, m̂ = g and v̂ = g², so the step is lr·g/(|g| + ε).
        for g in [0.3, -2.0, 1e-3] {
            let mut p = vec![Dense {
                weight: Matrix::new(1, 1, vec![1.0]).unwrap(),
                bias: vec![0.0],
            }];
            let grads = vec![Dense {
                weight: Matrix::new(1, 1, vec![g]).unwrap(),
                bias: vec![0.0],
            }];
            let cfg = AdamConfig::default();
            let mut state = AdamState::new(cfg, p.as_slice());
            adam_step(p.as_mut_slice(), grads.as_slice(), &mut state).unwrap();
            let expected = 1.0 - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((p[0].weight.get(0, 0) - expected).abs() < 1e-15);
            assert!(((1.0 - p[0].weight.get(0, 0)).abs() - cfg.learning_rate).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut p = init_params(&spec(&[3, 2]), 0);
        let mut state = AdamState::new(AdamConfig::default(), &p);
        let g = init_params(&spec(&[3, 3]), 0);
        assert!(adam_step(&mut p, &g, &mut state).is_err());
    }

    #[test]
    fn batch_requires_one_hot_labels() {
        let x = Matrix::zeros(2, 3);
        assert!(Batch::new(x.clone(), one_hot(&[0, 1], 2).unwrap()).is_ok());
        let bad = Matrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!(Batch::new(x.clone(), bad).is_err());
        assert!(Batch::new(x, one_hot(&[0], 2).unwrap()).is_err());
    }

    #[test]
    fn batch_sampler_covers_every_index_each_pass() {
        let idx: Vec<usize> = (10..20).collect();
        let mut s = BatchSampler::new(&idx, 5, rng::stream(1, 1)).unwrap();
        let mut seen: Vec<usize> = s.next_batch();
        seen.extend(s.next_batch());
        seen.sort_unstable();
        assert_eq!(seen, idx);
        let mut small = BatchSampler::new(&[3, 4], 100, rng::stream(1, 1)).unwrap();
        assert_eq!(small.next_batch().len(), 2);
        assert!(BatchSampler::new(&[], 4, rng::stream(0, 0)).is_err());
    }
}
