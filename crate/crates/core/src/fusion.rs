//! Decision fusion over per-model class probabilities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{argmax, Matrix};
use crate::nn::LOG_FLOOR;
use crate::voting::{Ballot, PreferenceProfile, Rule};

/// Tolerance on row sums of probability matrices.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// `M` row-stochastic `B × K` probability matrices, one per model.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    models: Vec<Matrix>,
}

impl PredictionSet {
    pub fn new(models: Vec<Matrix>) -> Result<Self> {
        let first = models.first().ok_or(Error::Empty("prediction set without models"))?;
        let (b, k) = first.shape();
        for (m, probs) in models.iter().enumerate() {
            probs.ensure_shape(b, k)?;
            for (r, row) in probs.row_iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "model {m} row {r} is not a probability vector (sum {sum})"
                    )));
                }
            }
        }
        Ok(Self { models })
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn batch_size(&self) -> usize {
        self.models[0].rows()
    }

    pub fn class_count(&self) -> usize {
        self.models[0].cols()
    }

    pub fn models(&self) -> &[Matrix] {
        &self.models
    }

    /// Sub-ensemble of the listed models.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("empty model selection"));
        }
        let models = indices
            .iter()
            .map(|&i| {
                self.models
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("model index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { models })
    }
}

/// Arithmetic mean of the model probabilities.
pub fn average_fuse(preds: &PredictionSet) -> Matrix {
    let mut out = Matrix::zeros(preds.batch_size(), preds.class_count());
    for m in &preds.models {
        for (o, p) in out.data_mut().iter_mut().zip(m.data()) {
            *o += p;
        }
    }
    let scale = preds.model_count() as f64;
    for o in out.data_mut() {
        *o /= scale;
    }
    out
}

/// Classes by descending probability, ties to the lower class index.
pub fn to_ranking(prob_row: &[f64]) -> Ballot {
    let mut order: Vec<usize> = (0..prob_row.len()).collect();
    order.sort_by(|&a, &b| prob_row[b].total_cmp(&prob_row[a]).then(a.cmp(&b)));
    Ballot::new(order, prob_row.len()).expect("a permutation is a valid ballot")
}

/// Per-example winner when each model casts its probability ranking as a ballot.
pub fn vote_fuse(preds: &PredictionSet, rule: Rule) -> Result<Vec<usize>> {
    let k = preds.class_count();
    (0..preds.batch_size())
        .into_par_iter()
        .map(|b| {
            let mut profile = PreferenceProfile::new(k);
            for m in &preds.models {
                profile.push(to_ranking(m.row(b)), 1)?;
            }
            rule.winner(&profile)
        })
        .collect()
}

/// Log-likelihood of each model on validation data plus its log-prior.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesState {
    pub log_likelihood: Vec<f64>,
    pub log_prior: Vec<f64>,
}

/// `log P[D|h_i] = Σ log max(P_i(y_true | x), LOG_FLOOR)` over validation data.
///
/// `prior` defaults to uniform; given values must be positive.
pub fn bayes_fit(preds_val: &PredictionSet, labels: &[usize], prior: Option<&[f64]>) -> Result<BayesState> {
    if labels.len() != preds_val.batch_size() {
        return Err(Error::shape(format!("{} labels", preds_val.batch_size()), labels.len()));
    }
    let m = preds_val.model_count();
    let log_prior = match prior {
        None => vec![(1.0 / m as f64).ln(); m],
        Some(p) if p.len() != m => return Err(Error::shape(format!("{m} priors"), p.len())),
        Some(p) if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) => {
            return Err(Error::InvalidArgument("priors must be positive".into()))
        }
        Some(p) => p.iter().map(|v| v.ln()).collect(),
    };
    let k = preds_val.class_count();
    let log_likelihood = preds_val
        .models
        .iter()
        .map(|probs| {
            labels
                .iter()
                .enumerate()
                .map(|(b, &y)| {
                    if y >= k {
                        Err(Error::InvalidArgument(format!("label {y} >= class count {k}")))
                    } else {
                        Ok(probs.get(b, y).max(LOG_FLOOR).ln())
                    }
                })
                .sum::<Result<f64>>()
        })
        .collect::<Result<_>>()?;
    Ok(BayesState {
        log_likelihood,
        log_prior,
    })
}

/// Posterior weight of each model, normalised to sum to 1 (max-shifted in log space).
pub fn bayes_weights(state: &BayesState) -> Vec<f64> {
    let logs: Vec<f64> = state
        .log_likelihood
        .iter()
        .zip(&state.log_prior)
        .map(|(l, p)| l + p)
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Bayes optimal label: `argmax_y Σ_i P_i(y|x) · P[D|h_i] · P[h_i]`.
pub fn bayes_fuse(preds: &PredictionSet, state: &BayesState) -> Result<Vec<usize>> {
    let m = preds.model_count();
    if state.log_likelihood.len() != m || state.log_prior.len() != m {
        return Err(Error::shape(format!("Bayes state for {m} models"), state.log_likelihood.len()));
    }
    let weights = bayes_weights(state);
    let mut fused = Matrix::zeros(preds.batch_size(), preds.class_count());
    for (probs, w) in preds.models.iter().zip(&weights) {
        for (f, p) in fused.data_mut().iter_mut().zip(probs.data()) {
            *f += w * p;
        }
    }
    Ok(fused.argmax_rows())
}

/// Linear combination weights for stacked generalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedWeights {
    pub weights: Vec<f64>,
    pub ridge: f64,
}

/// Ridge used by [`stack_fit`] to keep the normal equations solvable.
pub const STACK_RIDGE: f64 = 1e-8;

/// Least-squares weights minimising `Σ ‖Σ_i w_i f_i(x) − target‖²`, solved through
/// the ridge-regularised normal equations `(G + λI) w = r`.
pub fn stack_fit(preds_val: &PredictionSet, targets: &Matrix) -> Result<StackedWeights> {
    stack_fit_with_ridge(preds_val, targets, STACK_RIDGE)
}

pub fn stack_fit_with_ridge(preds_val: &PredictionSet, targets: &Matrix, ridge: f64) -> Result<StackedWeights> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge {ridge} must be finite and >= 0")));
    }
    targets.ensure_shape(preds_val.batch_size(), preds_val.class_count())?;
    let m = preds_val.model_count();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let fi = preds_val.models[i].data();
        rhs[i] = dot(fi, targets.data());
        for j in 0..=i {
            let g = dot(fi, preds_val.models[j].data());
            gram[i * m + j] = g;
            gram[j * m + i] = g;
        }
        gram[i * m + i] += ridge;
    }
    let weights = cholesky_solve(&gram, &rhs, m)?;
    Ok(StackedWeights { weights, ridge })
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `n × n`).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i * n + i] - s;
                if !(d > 0.0) {
                    return Err(Error::Singular);
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i * n + j] - s) / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Ok(x)
}

/// Weighted sum of model outputs (raw scores, not renormalised) and its argmax.
pub fn stack_fuse(preds: &PredictionSet, weights: &StackedWeights) -> Result<(Matrix, Vec<usize>)> {
    if weights.weights.len() != preds.model_count() {
        return Err(Error::shape(format!("{} weights", preds.model_count()), weights.weights.len()));
    }
    let mut scores = Matrix::zeros(preds.batch_size(), preds.class_count());
    for (probs, w) in preds.models.iter().zip(&weights.weights) {
        for (s, p) in scores.data_mut().iter_mut().zip(probs.data()) {
            *s += w * p;
        }
    }
    let labels = scores.argmax_rows();
    Ok((scores, labels))
}

/// Fusion schemes used by the experiments: a voting rule or softmax averaging.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FusionRule {
    Vote(Rule),
    /// Argmax of the averaged (equivalently summed) softmax outputs.
    Softmax,
}

impl FusionRule {
    pub fn name(self) -> &'static str {
        match self {
            FusionRule::Vote(r) => r.name(),
            FusionRule::Softmax => "softmax",
        }
    }

    pub fn labels(self, preds: &PredictionSet) -> Result<Vec<usize>> {
        match self {
            FusionRule::Vote(r) => vote_fuse(preds, r),
            FusionRule::Softmax => Ok(average_fuse(preds).argmax_rows()),
        }
    }
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "softmax" | "average" | "softmax-sum" => Ok(FusionRule::Softmax),
            other => other.parse().map(FusionRule::Vote),
        }
    }
}

/// Label of each row's top class.
pub fn argmax_labels(probs: &Matrix) -> Vec<usize> {
    probs.row_iter().map(argmax).collect()
}
