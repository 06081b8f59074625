use efkd_core::fusion::{
    average_fuse, bayes_fit, bayes_fuse, stack_fit, stack_fuse, vote_fuse, BayesState, PredictionSet, StackedWeights,
    STACK_RIDGE,
};
use efkd_core::nn::{one_hot, softmax};
use efkd_core::voting::Rule;
use efkd_core::{rng, Matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_probs(r: &mut rng::Rng, b: usize, k: usize) -> Matrix {
    softmax(&Matrix::from_fn(b, k, |_, _| 2.0 * r.sample::<f64, _>(StandardNormal)))
}

fn random_set(seed: u64, m: usize, b: usize, k: usize) -> PredictionSet {
    let mut r = rng::stream(seed, 0);
    PredictionSet::new((0..m).map(|_| random_probs(&mut r, b, k)).collect()).unwrap()
}

/// Models that all put their strict maximum on `top[b]` for every example `b`.
fn agreeing_set(seed: u64, m: usize, b: usize, k: usize) -> (PredictionSet, Vec<usize>) {
    let mut r = rng::stream(seed, 1);
    let top: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
    let models = (0..m)
        .map(|_| {
            let raw = Matrix::from_fn(b, k, |row, c| {
                let noise = r.random::<f64>();
                if c == top[row] {
                    2.0 + noise
                } else {
                    noise
                }
            });
            softmax(&raw)
        })
        .collect();
    (PredictionSet::new(models).unwrap(), top)
}

fn residual(preds: &PredictionSet, w: &[f64], target: &Matrix) -> f64 {
    let (scores, _) = stack_fuse(preds, &StackedWeights { weights: w.to_vec(), ridge: 0.0 }).unwrap();
    scores.data().iter().zip(target.data()).map(|(s, t)| (s - t).powi(2)).sum()
}

proptest! {
    #[test]
    fn average_rows_are_distributions(seed in any::<u64>(), m in 1usize..8, b in 1usize..10, k in 2usize..6) {
        let f = average_fuse(&random_set(seed, m, b, k));
        for row in f.row_iter() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn every_scheme_keeps_a_shared_argmax(seed in any::<u64>(), m in 1usize..7, b in 1usize..8, k in 2usize..6) {
        let (preds, top) = agreeing_set(seed, m, b, k);
        for rule in Rule::ALL {
            prop_assert_eq!(&vote_fuse(&preds, rule).unwrap(), &top);
        }
        prop_assert_eq!(&average_fuse(&preds).argmax_rows(), &top);
        let mut r = rng::stream(seed, 2);
        let state = BayesState {
            log_likelihood: (0..m).map(|_| -50.0 * r.random::<f64>()).collect(),
            log_prior: vec![-(m as f64).ln(); m],
        };
        prop_assert_eq!(&bayes_fuse(&preds, &state).unwrap(), &top);
        // nonnegative, not all zero
        let mut weights: Vec<f64> = (0..m).map(|_| r.random::<f64>()).collect();
        weights[0] += 0.1;
        let (_, labels) = stack_fuse(&preds, &StackedWeights { weights, ridge: 0.0 }).unwrap();
        prop_assert_eq!(&labels, &top);
    }

    #[test]
    fn uniform_bayes_equals_averaging(seed in any::<u64>(), m in 1usize..7, b in 1usize..12, k in 2usize..6) {
        let preds = random_set(seed, m, b, k);
        let state = BayesState { log_likelihood: vec![-3.0; m], log_prior: vec![-(m as f64).ln(); m] };
        prop_assert_eq!(bayes_fuse(&preds, &state).unwrap(), average_fuse(&preds).argmax_rows());
        let labels: Vec<usize> = (0..b).map(|i| i % k).collect();
        let fitted = bayes_fit(&preds.select(&vec![0; m]).unwrap(), &labels, None).unwrap();
        prop_assert_eq!(bayes_fuse(&preds, &fitted).unwrap(), average_fuse(&preds).argmax_rows());
    }

    #[test]
    fn copies_of_one_model_fuse_to_its_argmax(seed in any::<u64>(), m in 1usize..6, b in 1usize..10, k in 2usize..6) {
        let one = random_set(seed, 1, b, k).models()[0].clone();
        let preds = PredictionSet::new(vec![one.clone(); m]).unwrap();
        let expected = one.argmax_rows();
        for rule in Rule::ALL {
            prop_assert_eq!(&vote_fuse(&preds, rule).unwrap(), &expected);
        }
        prop_assert_eq!(&average_fuse(&preds).argmax_rows(), &expected);
        let state = bayes_fit(&preds, &expected, None).unwrap();
        prop_assert_eq!(&bayes_fuse(&preds, &state).unwrap(), &expected);
        let w = stack_fit(&preds, &one_hot(&expected, k).unwrap()).unwrap();
        prop_assert_eq!(&stack_fuse(&preds, &w).unwrap().1, &expected);
    }
}

#[test]
fn stacked_weights_beat_uniform_and_match_an_independent_solver() {
    for seed in 0..100 {
        let mut r = rng::stream(seed, 3);
        let m = r.random_range(1..=6);
        let b = r.random_range(4..=20);
        let k = r.random_range(2..=5);
        let preds = random_set(seed, m, b, k);
        let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..k)).collect();
        let target = one_hot(&labels, k).unwrap();
        let w = stack_fit(&preds, &target).unwrap();
        let uniform = vec![1.0 / m as f64; m];
        assert!(residual(&preds, &w.weights, &target) <= residual(&preds, &uniform, &target) + 1e-9);

        // ridge least squares via an SVD solve of the stacked system
        let a = DMatrix::from_fn(b * k, m, |row, col| preds.models()[col].data()[row]);
        let gram = a.transpose() * &a + DMatrix::identity(m, m) * STACK_RIDGE;
        let rhs = a.transpose() * DVector::from_column_slice(target.data());
        let oracle = gram.svd(true, true).solve(&rhs, 1e-300).unwrap();
        let diff = residual(&preds, &w.weights, &target) - residual(&preds, oracle.as_slice(), &target);
        assert!(diff.abs() < 1e-8, "seed {seed}: residual gap {diff}");
    }
}
