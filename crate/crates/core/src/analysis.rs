//! Ensemble diagnostics: ambiguity decomposition, agreement matrices and binary metrics.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Terms of the bias/variance/covariance split of an ensemble's squared error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbiguityReport {
    pub bias: f64,
    pub var: f64,
    pub covar: f64,
    pub lhs_mse: f64,
    pub rhs_total: f64,
}

/// Decomposes `E[(ō - y)²]` for `outputs` holding `R` replicates (rows) of `M` members (columns).
///
/// Expectations are means over replicates; `covar` is 0 for a single member.
pub fn ambiguity_decompose(outputs: &Matrix, target: f64) -> Result<AmbiguityReport> {
    let (r, m) = outputs.shape();
    if r < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replicates, got {r}")));
    }
    if m == 0 {
        return Err(Error::Empty("ensemble without members"));
    }
    let rf = r as f64;
    let mf = m as f64;
    let means: Vec<f64> = (0..m)
        .map(|i| outputs.row_iter().map(|row| row[i]).sum::<f64>() / rf)
        .collect();
    let bias = means.iter().map(|e| e - target).sum::<f64>() / mf;

    let mut var = 0.0;
    let mut cov_sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = outputs
                .row_iter()
                .map(|row| (row[i] - means[i]) * (row[j] - means[j]))
                .sum::<f64>()
                / rf;
            if i == j {
                var += c;
            } else {
                cov_sum += c;
            }
        }
    }
    var /= mf;
    let covar = if m > 1 { cov_sum / (mf * (mf - 1.0)) } else { 0.0 };

    let lhs_mse = outputs
        .row_iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / mf;
            (mean - target).powi(2)
        })
        .sum::<f64>()
        / rf;
    let rhs_total = bias * bias + var / mf + (1.0 - 1.0 / mf) * covar;
    Ok(AmbiguityReport {
        bias,
        var,
        covar,
        lhs_mse,
        rhs_total,
    })
}

/// Symmetric `M × M` matrix of pairwise label-agreement fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix(Matrix);

impl SimilarityMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// Mean over the `M (M - 1)` off-diagonal entries; `None` for a single model.
    pub fn mean_off_diagonal(&self) -> Option<f64> {
        let m = self.size();
        if m < 2 {
            return None;
        }
        let total: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .sum();
        Some(total / (m * (m - 1)) as f64)
    }
}

/// Fraction of examples on which each pair of models predicts the same label.
pub fn similarity_matrix(label_preds: &[Vec<usize>]) -> Result<SimilarityMatrix> {
    let first = label_preds.first().ok_or(Error::Empty("similarity over no models"))?;
    let b = first.len();
    if b == 0 {
        return Err(Error::Empty("similarity over no examples"));
    }
    if let Some(bad) = label_preds.iter().find(|p| p.len() != b) {
        return Err(Error::shape(format!("{b} predictions per model"), bad.len()));
    }
    let m = label_preds.len();
    let mut out = Matrix::identity(m);
    for i in 0..m {
        for j in (i + 1)..m {
            let same = label_preds[i].iter().zip(&label_preds[j]).filter(|(a, b)| a == b).count();
            let s = same as f64 / b as f64;
            out.set(i, j, s);
            out.set(j, i, s);
        }
    }
    Ok(SimilarityMatrix(out))
}

/// Confusion counts and derived rates at one threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

fn check_binary(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} labels", scores.len()), labels.len()));
    }
    if scores.is_empty() {
        return Err(Error::Empty("binary scores"));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, recall, precision and F1 with `score >= threshold` predicted positive.
/// Precision and recall are 0 when their denominator is 0.
pub fn metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    check_binary(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricsReport {
        accuracy: ratio(tp + tn, scores.len()),
        recall,
        precision,
        f1,
        threshold,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Candidate thresholds: 0, 1 and midpoints between consecutive distinct scores, ascending.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = vec![0.0];
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(1.0);
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Threshold with the highest accuracy on validation data; ties go to the smallest.
pub fn select_threshold(scores_val: &[f64], labels_val: &[bool]) -> Result<f64> {
    check_binary(scores_val, labels_val)?;
    let mut pairs: Vec<(f64, bool)> = scores_val.iter().copied().zip(labels_val.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = labels_val.iter().filter(|&&y| y).count();
    // sweep upwards, moving examples with score < threshold to the negative side
    let (mut below, mut neg_below, mut pos_below) = (0, 0usize, 0usize);
    let mut best = (0usize, 0.0);
    for (k, theta) in threshold_candidates(scores_val).into_iter().enumerate() {
        while below < pairs.len() && pairs[below].0 < theta {
            if pairs[below].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            below += 1;
        }
        let correct = neg_below + (positives - pos_below);
        if k == 0 || correct > best.0 {
            best = (correct, theta);
        }
    }
    Ok(best.1)
}

/// One point of a receiver operating characteristic sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// False and true positive rates at every candidate threshold, descending in threshold.
pub fn roc_table(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_binary(scores, labels)?;
    let mut out: Vec<RocPoint> = threshold_candidates(scores)
        .into_iter()
        .map(|t| {
            let r = metrics(scores, labels, t).expect("inputs checked");
            RocPoint {
                threshold: t,
                fpr: ratio(r.fp, r.fp + r.tn),
                tpr: r.recall,
            }
        })
        .collect();
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ambiguity_single_member_and_constant() {
        let o = Matrix::new(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let r = ambiguity_decompose(&o, 2.0).unwrap();
        assert_eq!(r.covar, 0.0);
        assert!((r.rhs_total - (r.bias * r.bias + r.var)).abs() < 1e-15);
        assert!((r.lhs_mse - r.rhs_total).abs() < 1e-12);
        let c = Matrix::new(4, 3, vec![0.5; 12]).unwrap();
        let r = ambiguity_decompose(&c, 0.5).unwrap();
        assert_eq!((r.bias, r.var, r.covar, r.lhs_mse, r.rhs_total), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert!(ambiguity_decompose(&Matrix::zeros(1, 3), 0.0).is_err());
    }

    #[test]
    fn similarity_examples() {
        let s = similarity_matrix(&[vec![0, 1, 2, 3], vec![1, 2, 3, 0], vec![0, 1, 0, 0]]).unwrap();
        assert_eq!(s.get(0, 0), 1.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(0, 2), 0.5);
        assert_eq!(s.get(2, 0), 0.5);
        assert_eq!(s.get(1, 2), 0.25);
        assert!((s.mean_off_diagonal().unwrap() - 0.25).abs() < 1e-15);
        assert!(similarity_matrix(&[vec![0, 1], vec![0]]).is_err());
        assert!(similarity_matrix(&[]).is_err());
    }

    #[test]
    fn metrics_examples() {
        let r = metrics(&[0.9, 0.6, 0.4, 0.2], &[true, false, true, false], 0.5).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 1, 1));
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (0.5, 0.5, 0.5, 0.5));
        let r = metrics(&[1.0, 0.0, 1.0], &[true, false, true], 0.5).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
        let r = metrics(&[0.1, 0.2], &[true, false], 0.5).unwrap();
        assert_eq!((r.recall, r.precision, r.f1), (0.0, 0.0, 0.0));
        assert!(metrics(&[0.1], &[true, false], 0.5).is_err());
        assert!(metrics(&[1.1], &[true], 0.5).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(select_threshold(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 0.5);
        assert_eq!(select_threshold(&[0.3, 0.6, 0.9], &[true, true, true]).unwrap(), 0.0);
        assert_eq!(select_threshold(&[0.3, 0.6], &[false, false]).unwrap(), 1.0);
        assert!(select_threshold(&[], &[]).is_err());
    }

    #[test]
    fn roc_endpoints() {
        let roc = roc_table(&[0.9, 0.6, 0.4, 0.2], &[true, false, true, false]).unwrap();
        let last = roc.last().unwrap();
        assert_eq!((last.threshold, last.fpr, last.tpr), (0.0, 1.0, 1.0));
        let first = roc.first().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
    }
}
