//! Multi-teacher knowledge distillation with a single- or multi-head student.
//!
//! The loss weight `alpha` multiplies the imitation (KL) term: `alpha = 0` is plain
//! cross-entropy training and `alpha = 1` pure imitation. Temperature is fixed at 1.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{
    self, adam_step, backward_stack, forward_stack, init_layers, predict_stack, softmax, AdamConfig, AdamState,
    BatchSampler, Dense, MlpParams, MlpSpec, Parameters,
};
use crate::rng;

/// Softmax temperature used throughout distillation.
pub const TEMPERATURE: f64 = 1.0;

/// Inputs with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::shape(format!("{} labels", inputs.rows()), labels.len()));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(format!("label {y} >= class count {classes}")));
        }
        Ok(Self { inputs, labels, classes })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// The listed rows as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    fn one_hot(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(indices.len(), self.classes);
        for (r, &i) in indices.iter().enumerate() {
            m.set(r, self.labels[i], 1.0);
        }
        m
    }
}

/// Minibatch Adam budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 100,
            iterations: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bernoulli inclusion probability and seed for one teacher's training subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubsetSpec {
    p: f64,
    seed: u64,
}

impl SubsetSpec {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("inclusion probability {p} outside (0, 1]")));
        }
        Ok(Self { p, seed })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Indices kept independently with probability `p`; an empty draw retries with `seed + 1`.
pub fn generate_subset(dataset_size: usize, spec: SubsetSpec) -> Vec<usize> {
    if dataset_size == 0 {
        return Vec::new();
    }
    if spec.p >= 1.0 {
        return (0..dataset_size).collect();
    }
    let mut seed = spec.seed;
    loop {
        let mut rng = rng::stream(seed, 0);
        let subset: Vec<usize> = (0..dataset_size).filter(|_| rng.random::<f64>() < spec.p).collect();
        if !subset.is_empty() {
            return subset;
        }
        seed = seed.wrapping_add(1);
    }
}

fn check_indices(indices: &[usize], data: &Dataset) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Empty("training subset"));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidArgument(format!("index {i} outside a dataset of {}", data.len())));
    }
    Ok(())
}

fn check_dims(spec: &MlpSpec, data: &Dataset) -> Result<()> {
    if spec.input_dim() != data.feature_dim() || spec.output_dim() != data.classes() {
        return Err(Error::Incompatible(format!(
            "network {}→{} for data {}→{}",
            spec.input_dim(),
            spec.output_dim(),
            data.feature_dim(),
            data.classes()
        )));
    }
    Ok(())
}

/// `(s - y) / B` for softmax outputs `s` and distributions `y`.
fn softmax_ce_grad(s: &Matrix, y: &Matrix) -> Matrix {
    let b = s.rows() as f64;
    let data = s.data().iter().zip(y.data()).map(|(s, y)| (s - y) / b).collect();
    Matrix::from_vec(s.rows(), s.cols(), data)
}

/// Cross-entropy training on `subset`.
///
/// Weights come from stream `(seed, 0)` and minibatches from stream `(seed, 1)`.
pub fn train_teacher(
    spec: &MlpSpec,
    subset: &[usize],
    data: &Dataset,
    hyper: &TrainConfig,
    seed: u64,
) -> Result<MlpParams> {
    hyper.validate()?;
    check_dims(spec, data)?;
    check_indices(subset, data)?;
    let mut params = nn::init_params(spec, seed);
    let mut state = AdamState::new(hyper.adam, &params);
    let mut sampler = BatchSampler::new(subset, hyper.batch_size, rng::stream(seed, 1))?;
    for _ in 0..hyper.iterations {
        let idx = sampler.next_batch();
        let x = data.inputs.select_rows(&idx);
        let (logits, cache) = nn::forward(&params, &x)?;
        let grad = softmax_ce_grad(&softmax(&logits), &data.one_hot(&idx));
        let grads = nn::backward(&params, &cache, &grad)?;
        adam_step(&mut params, &grads, &mut state)?;
    }
    Ok(params)
}

/// Frozen teachers sharing one architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherBank {
    spec: MlpSpec,
    teachers: Vec<MlpParams>,
    subsets: Vec<SubsetSpec>,
}

impl TeacherBank {
    pub fn new(spec: MlpSpec, teachers: Vec<MlpParams>, subsets: Vec<SubsetSpec>) -> Result<Self> {
        if teachers.is_empty() {
            return Err(Error::Empty("teacher bank"));
        }
        if teachers.len() != subsets.len() {
            return Err(Error::shape(format!("{} subset specs", teachers.len()), subsets.len()));
        }
        for t in &teachers {
            if t.spec()? != spec {
                return Err(Error::Incompatible("teacher architecture differs from the bank".into()));
            }
        }
        Ok(Self {
            spec,
            teachers,
            subsets,
        })
    }

    /// Trains teacher `j` on `generate_subset(data.len(), subsets[j])` with seed `seeds[j]`.
    pub fn train(
        spec: &MlpSpec,
        data: &Dataset,
        subsets: &[SubsetSpec],
        hyper: &TrainConfig,
        seeds: &[u64],
    ) -> Result<Self> {
        if subsets.len() != seeds.len() {
            return Err(Error::shape(format!("{} seeds", subsets.len()), seeds.len()));
        }
        let teachers = subsets
            .par_iter()
            .zip(seeds)
            .map(|(s, &seed)| train_teacher(spec, &generate_subset(data.len(), *s), data, hyper, seed))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec.clone(), teachers, subsets.to_vec())
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn teachers(&self) -> &[MlpParams] {
        &self.teachers
    }

    pub fn subsets(&self) -> &[SubsetSpec] {
        &self.subsets
    }

    pub fn len(&self) -> usize {
        self.teachers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teachers.is_empty()
    }

    /// Softmax outputs of every teacher on `inputs`.
    pub fn predict(&self, inputs: &Matrix) -> Result<Vec<Matrix>> {
        self.teachers.par_iter().map(|t| nn::predict_proba(t, inputs)).collect()
    }
}

/// Which loss the student minimises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Imitate the mean teacher distribution.
    Avg,
    /// Imitate every teacher with one output.
    Geo,
    /// One head per teacher.
    Ind,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Avg, Variant::Geo, Variant::Ind];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Avg => "avg",
            Variant::Geo => "geo",
            Variant::Ind => "ind",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avg" | "output-avg" => Ok(Variant::Avg),
            "geo" | "single-output" => Ok(Variant::Geo),
            "ind" | "mimick-all" | "mimic-all" => Ok(Variant::Ind),
            other => Err(Error::InvalidArgument(format!("unknown distillation variant `{other}`"))),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")))
    }
}

/// Loss variant, imitation weight and teacher count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub teacher_count: usize,
}

impl DistillConfig {
    pub fn new(variant: Variant, alpha: f64, teacher_count: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if teacher_count == 0 {
            return Err(Error::InvalidArgument("teacher count must be >= 1".into()));
        }
        Ok(Self {
            variant,
            alpha,
            teacher_count,
        })
    }

    /// Checks that the head layout suits the variant.
    pub fn check_student(&self, student: &StudentSpec) -> Result<()> {
        match (self.variant, student.head_mode) {
            (Variant::Ind, HeadMode::PerTeacher(n)) if n == self.teacher_count => Ok(()),
            (Variant::Ind, mode) => Err(Error::Incompatible(format!(
                "variant ind needs {} heads, student has {mode:?}",
                self.teacher_count
            ))),
            (_, HeadMode::Single) => Ok(()),
            (v, mode) => Err(Error::Incompatible(format!("variant {v} needs a single head, student has {mode:?}"))),
        }
    }
}

fn check_loss_inputs(student: &Matrix, teachers: &[Matrix], labels: &Matrix, alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    if teachers.is_empty() {
        return Err(Error::Empty("teacher outputs"));
    }
    if student.rows() == 0 {
        return Err(Error::Empty("distillation batch"));
    }
    student.ensure_same_shape(labels)?;
    for t in teachers {
        student.ensure_same_shape(t)?;
    }
    Ok(())
}

fn teacher_mean(teachers: &[Matrix]) -> Matrix {
    let mut mean = teachers[0].clone();
    for t in &teachers[1..] {
        for (m, v) in mean.data_mut().iter_mut().zip(t.data()) {
            *m += v;
        }
    }
    let n = teachers.len() as f64;
    for m in mean.data_mut() {
        *m /= n;
    }
    mean
}

/// `(alpha (s - t) + (1 - alpha)(s - y)) / denom`, the logit gradient of
/// `alpha KL(t || s) + (1 - alpha) CE(y, s)` scaled by `B / denom`.
fn mixed_grad(s: &Matrix, t: &Matrix, y: &Matrix, alpha: f64, denom: f64) -> Matrix {
    let data = s
        .data()
        .iter()
        .zip(t.data())
        .zip(y.data())
        .map(|((&s, &t), &y)| (alpha * (s - t) + (1.0 - alpha) * (s - y)) / denom)
        .collect();
    Matrix::from_vec(s.rows(), s.cols(), data)
}

fn mixed_value(s: &Matrix, t: &Matrix, y: &Matrix, alpha: f64) -> Result<f64> {
    Ok(alpha * nn::kl_divergence(t, s)? + (1.0 - alpha) * nn::cross_entropy(s, y)?)
}

/// `alpha KL(mean_j t_j || s) + (1 - alpha) CE(y, s)` and its gradient w.r.t. the student logits.
pub fn loss_avg(student_probs: &Matrix, teacher_probs: &[Matrix], labels: &Matrix, alpha: f64) -> Result<(f64, Matrix)> {
    check_loss_inputs(student_probs, teacher_probs, labels, alpha)?;
    let mean = teacher_mean(teacher_probs);
    let value = mixed_value(student_probs, &mean, labels, alpha)?;
    let b = student_probs.rows() as f64;
    Ok((value, mixed_grad(student_probs, &mean, labels, alpha, b)))
}

/// `alpha (1/N) Σ_j KL(t_j || s) + (1 - alpha) CE(y, s)` and its logit gradient.
///
/// The gradient `alpha (s - mean_j t_j) + (1 - alpha)(s - y)` matches [`loss_avg`]: the two
/// objectives differ by a term that does not depend on the student.
pub fn loss_geo(student_probs: &Matrix, teacher_probs: &[Matrix], labels: &Matrix, alpha: f64) -> Result<(f64, Matrix)> {
    check_loss_inputs(student_probs, teacher_probs, labels, alpha)?;
    let n = teacher_probs.len() as f64;
    let kl = teacher_probs
        .iter()
        .map(|t| nn::kl_divergence(t, student_probs))
        .sum::<Result<f64>>()?
        / n;
    let value = alpha * kl + (1.0 - alpha) * nn::cross_entropy(student_probs, labels)?;
    let mean = teacher_mean(teacher_probs);
    let b = student_probs.rows() as f64;
    Ok((value, mixed_grad(student_probs, &mean, labels, alpha, b)))
}

/// `(1/N) Σ_j [alpha KL(t_j || h_j) + (1 - alpha) CE(y, h_j)]` and the gradient for every head.
pub fn loss_ind(
    head_probs: &[Matrix],
    teacher_probs: &[Matrix],
    labels: &Matrix,
    alpha: f64,
) -> Result<(f64, Vec<Matrix>)> {
    if head_probs.len() != teacher_probs.len() {
        return Err(Error::shape(format!("{} heads", teacher_probs.len()), head_probs.len()));
    }
    let first = head_probs.first().ok_or(Error::Empty("student heads"))?;
    check_loss_inputs(first, teacher_probs, labels, alpha)?;
    for h in head_probs {
        first.ensure_same_shape(h)?;
    }
    let n = head_probs.len() as f64;
    let denom = n * first.rows() as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(head_probs.len());
    for (h, t) in head_probs.iter().zip(teacher_probs) {
        value += mixed_value(h, t, labels, alpha)?;
        grads.push(mixed_grad(h, t, labels, alpha, denom));
    }
    Ok((value / n, grads))
}

/// Number of output layers on top of the shared trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadMode {
    Single,
    PerTeacher(usize),
}

impl HeadMode {
    pub fn head_count(self) -> usize {
        match self {
            HeadMode::Single => 1,
            HeadMode::PerTeacher(n) => n,
        }
    }
}

/// Student architecture: a ReLU trunk followed by one linear head per output.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentSpec {
    trunk: MlpSpec,
    classes: usize,
    head_mode: HeadMode,
}

impl StudentSpec {
    /// `trunk` runs from the input to the last hidden layer; every head maps it to `classes`.
    pub fn new(trunk: MlpSpec, classes: usize, head_mode: HeadMode) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidArgument("class count must be >= 1".into()));
        }
        if head_mode.head_count() == 0 {
            return Err(Error::InvalidArgument("per-teacher mode needs at least one head".into()));
        }
        Ok(Self {
            trunk,
            classes,
            head_mode,
        })
    }

    /// Student whose single-head form has the layer sizes of `net`.
    pub fn from_network(net: &MlpSpec, head_mode: HeadMode) -> Result<Self> {
        let sizes = net.layer_sizes();
        if sizes.len() < 3 {
            return Err(Error::InvalidArgument("a student needs at least one hidden layer".into()));
        }
        let trunk = MlpSpec::new(sizes[..sizes.len() - 1].to_vec())?;
        Self::new(trunk, net.output_dim(), head_mode)
    }

    pub fn trunk(&self) -> &MlpSpec {
        &self.trunk
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn head_mode(&self) -> HeadMode {
        self.head_mode
    }

    pub fn head_count(&self) -> usize {
        self.head_mode.head_count()
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }
}

/// Trunk and head weights. Trunk layers come first in parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentParams {
    pub trunk: Vec<Dense>,
    pub heads: Vec<Dense>,
}

impl StudentParams {
    /// Trunk plus head `j` as a plain network.
    pub fn head_network(&self, j: usize) -> MlpParams {
        let mut layers = self.trunk.clone();
        layers.push(self.heads[j].clone());
        MlpParams { layers }
    }

    fn check(&self, spec: &StudentSpec) -> Result<()> {
        let sizes = spec.trunk.layer_sizes();
        let ok = self.trunk.len() == sizes.len() - 1
            && self.trunk.iter().zip(sizes.windows(2)).all(|(l, w)| {
                l.weight.shape() == (w[1], w[0]) && l.bias.len() == w[1]
            })
            && self.heads.len() == spec.head_count()
            && self.heads.iter().all(|h| {
                h.weight.shape() == (spec.classes, spec.trunk.output_dim()) && h.bias.len() == spec.classes
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Incompatible("student parameters do not match the student spec".into()))
        }
    }
}

impl Parameters for StudentParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.trunk.as_slice().tensors();
        t.extend(self.heads.as_slice().tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.trunk.as_mut_slice().tensors_mut();
        t.extend(self.heads.as_mut_slice().tensors_mut());
        t
    }
}

/// Glorot trunk then heads, all from stream `(seed, 0)`; with one head this equals
/// [`nn::init_params`] for the matching network.
pub fn init_student(spec: &StudentSpec, seed: u64) -> StudentParams {
    let mut rng = rng::stream(seed, 0);
    let trunk = init_layers(spec.trunk.layer_sizes(), &mut rng);
    let hidden = spec.trunk.output_dim();
    let heads = (0..spec.head_count())
        .map(|_| Dense::glorot(hidden, spec.classes, &mut rng))
        .collect();
    StudentParams { trunk, heads }
}

fn head_logits(head: &Dense, hidden: &Matrix) -> Matrix {
    predict_stack(std::slice::from_ref(head), hidden, false)
}

/// Class probabilities: the softmax of the single head, or the mean of the heads' softmaxes.
pub fn student_infer(params: &StudentParams, spec: &StudentSpec, inputs: &Matrix) -> Result<Matrix> {
    params.check(spec)?;
    if inputs.cols() != spec.input_dim() {
        return Err(Error::shape(format!("{} input columns", spec.input_dim()), inputs.cols()));
    }
    let hidden = predict_stack(&params.trunk, inputs, true);
    let probs: Vec<Matrix> = params.heads.iter().map(|h| softmax(&head_logits(h, &hidden))).collect();
    Ok(if probs.len() == 1 {
        probs.into_iter().next().unwrap()
    } else {
        teacher_mean(&probs)
    })
}

/// Parameter gradients from per-head logit gradients.
fn student_backward(params: &StudentParams, trunk_inputs: &[Matrix], hidden: &Matrix, head_grads: &[Matrix]) -> StudentParams {
    let mut heads = Vec::with_capacity(params.heads.len());
    let mut hidden_grad: Option<Matrix> = None;
    for (head, g) in params.heads.iter().zip(head_grads) {
        let (mut grads, input_grad) =
            backward_stack(std::slice::from_ref(head), std::slice::from_ref(hidden), None, g, true);
        heads.push(grads.pop().unwrap());
        let input_grad = input_grad.unwrap();
        match hidden_grad.as_mut() {
            None => hidden_grad = Some(input_grad),
            Some(acc) => {
                for (a, v) in acc.data_mut().iter_mut().zip(input_grad.data()) {
                    *a += v;
                }
            }
        }
    }
    let (trunk, _) = backward_stack(&params.trunk, trunk_inputs, Some(hidden), &hidden_grad.unwrap(), false);
    StudentParams { trunk, heads }
}

/// Loss of the configured variant on one batch and its gradient w.r.t. every student parameter.
pub fn student_loss_and_grad(
    config: &DistillConfig,
    student: &StudentSpec,
    params: &StudentParams,
    inputs: &Matrix,
    teacher_probs: &[Matrix],
    labels: &Matrix,
) -> Result<(f64, StudentParams)> {
    config.check_student(student)?;
    params.check(student)?;
    if inputs.cols() != student.input_dim() {
        return Err(Error::shape(format!("{} input columns", student.input_dim()), inputs.cols()));
    }
    if teacher_probs.len() != config.teacher_count {
        return Err(Error::shape(format!("{} teacher outputs", config.teacher_count), teacher_probs.len()));
    }
    labels.ensure_shape(inputs.rows(), student.classes())?;
    let (hidden, trunk_inputs) = forward_stack(&params.trunk, inputs, true);
    let probs: Vec<Matrix> = params.heads.iter().map(|h| softmax(&head_logits(h, &hidden))).collect();
    let (value, head_grads) = match config.variant {
        Variant::Avg => {
            let (v, g) = loss_avg(&probs[0], teacher_probs, labels, config.alpha)?;
            (v, vec![g])
        }
        Variant::Geo => {
            let (v, g) = loss_geo(&probs[0], teacher_probs, labels, config.alpha)?;
            (v, vec![g])
        }
        Variant::Ind => loss_ind(&probs, teacher_probs, labels, config.alpha)?,
    };
    Ok((value, student_backward(params, &trunk_inputs, &hidden, &head_grads)))
}

/// Minibatch Adam on the selected distillation loss over the whole of `data`.
///
/// Teacher outputs are computed once up front. Weights come from stream `(seed, 0)` and
/// minibatches from stream `(seed, 1)`, so `alpha = 0` with one head reproduces
/// [`train_teacher`] on every index.
pub fn train_student(
    config: &DistillConfig,
    teachers: &TeacherBank,
    student: &StudentSpec,
    data: &Dataset,
    hyper: &TrainConfig,
    seed: u64,
) -> Result<StudentParams> {
    hyper.validate()?;
    config.check_student(student)?;
    if config.teacher_count != teachers.len() {
        return Err(Error::Incompatible(format!(
            "config expects {} teachers, bank has {}",
            config.teacher_count,
            teachers.len()
        )));
    }
    check_dims(teachers.spec(), data)?;
    if student.input_dim() != data.feature_dim() || student.classes() != data.classes() {
        return Err(Error::Incompatible("student dimensions do not match the data".into()));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    check_indices(&all, data)?;
    let cached = teachers.predict(data.inputs())?;

    let mut params = init_student(student, seed);
    let mut state = AdamState::new(hyper.adam, &params);
    let mut sampler = BatchSampler::new(&all, hyper.batch_size, rng::stream(seed, 1))?;
    for _ in 0..hyper.iterations {
        let idx = sampler.next_batch();
        let x = data.inputs.select_rows(&idx);
        let t: Vec<Matrix> = cached.iter().map(|c| c.select_rows(&idx)).collect();
        let (_, grads) = student_loss_and_grad(config, student, &params, &x, &t, &data.one_hot(&idx))?;
        adam_step(&mut params, &grads, &mut state)?;
    }
    Ok(params)
}
