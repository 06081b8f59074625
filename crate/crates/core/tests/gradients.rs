//! Analytic gradients against central finite differences.

use efkd_core::distill::{init_student, student_loss_and_grad, DistillConfig, HeadMode, StudentParams, StudentSpec, Variant};
use efkd_core::nn::{self, Dense, MlpParams, MlpSpec, Parameters};
use efkd_core::{rng, Matrix};
use rand::Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
const MAX_REL: f64 = 1e-4;
/// Floor on the relative-error denominator so that near-zero gradients are
/// compared by absolute error (round-off of the difference quotient is ~1e-11).
const REL_FLOOR: f64 = 1e-6;
const INSTANCES: u64 = 20;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn normal_matrix(r: &mut rng::Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * r.sample::<f64, _>(StandardNormal))
}

/// ReLU is not differentiable at 0; inputs are redrawn until no hidden pre-activation
/// lies within `KINK_MARGIN` of it, far outside the reach of an `H` perturbation.
const KINK_MARGIN: f64 = 1e-3;

fn inputs_away_from_kinks(r: &mut rng::Rng, hidden_layers: &[Dense], rows: usize, cols: usize) -> Matrix {
    loop {
        let x = normal_matrix(r, rows, cols, 1.0);
        let mut current = x.clone();
        let mut clear = true;
        for layer in hidden_layers {
            let z = nn::predict_logits(&MlpParams { layers: vec![layer.clone()] }, &current).unwrap();
            clear &= z.data().iter().all(|v| v.abs() > KINK_MARGIN);
            current = Matrix::new(z.rows(), z.cols(), z.data().iter().map(|v| v.max(0.0)).collect()).unwrap();
        }
        if clear {
            return x;
        }
    }
}

fn random_probs(r: &mut rng::Rng, rows: usize, cols: usize) -> Matrix {
    nn::softmax(&normal_matrix(r, rows, cols, 2.0))
}

fn random_labels(r: &mut rng::Rng, rows: usize, classes: usize) -> Matrix {
    let labels: Vec<usize> = (0..rows).map(|_| r.random_range(0..classes)).collect();
    nn::one_hot(&labels, classes).unwrap()
}

/// Compares every coordinate of `grads` against `(f(θ + h) - f(θ - h)) / 2h`; returns
/// the number of coordinates checked and the worst relative error.
fn check_all<P: Parameters + Clone>(params: &P, grads: &P, mut loss: impl FnMut(&P) -> f64) -> (usize, f64) {
    let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
    let mut worst = 0.0f64;
    let mut k = 0;
    let shape: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in shape.iter().enumerate() {
        for i in 0..len {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += H;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= H;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[k], numeric));
            k += 1;
        }
    }
    (k, worst)
}

fn student_case(variant: Variant, seed: u64) -> (usize, f64) {
    let mut r = rng::stream(seed, 77);
    let (d, hidden, k, b, n) = (8, 10, 4, 6, 3);
    let mode = if variant == Variant::Ind { HeadMode::PerTeacher(n) } else { HeadMode::Single };
    let spec = StudentSpec::new(MlpSpec::new(vec![d, hidden]).unwrap(), k, mode).unwrap();
    let mut params = init_student(&spec, seed);
    // non-zero biases so no coordinate is structurally inactive
    for layer in params.trunk.iter_mut().chain(params.heads.iter_mut()) {
        for v in layer.bias.iter_mut() {
            *v = 0.1 * r.sample::<f64, _>(StandardNormal);
        }
    }
    let x = inputs_away_from_kinks(&mut r, &params.trunk, b, d);
    let teachers: Vec<Matrix> = (0..n).map(|_| random_probs(&mut r, b, k)).collect();
    let y = random_labels(&mut r, b, k);
    let alpha = r.random::<f64>();
    let cfg = DistillConfig::new(variant, alpha, n).unwrap();
    let (_, grads) = student_loss_and_grad(&cfg, &spec, &params, &x, &teachers, &y).unwrap();
    check_all(&params, &grads, |p: &StudentParams| {
        student_loss_and_grad(&cfg, &spec, p, &x, &teachers, &y).unwrap().0
    })
}

fn run_variant(variant: Variant) {
    for seed in 0..INSTANCES {
        let (coords, worst) = student_case(variant, seed);
        assert!(coords >= 100, "{coords} coordinates");
        assert!(worst < MAX_REL, "{variant} instance {seed}: relative error {worst:e}");
    }
}

#[test]
fn loss_avg_gradient_matches_finite_differences() {
    run_variant(Variant::Avg);
}

#[test]
fn loss_geo_gradient_matches_finite_differences() {
    run_variant(Variant::Geo);
}

#[test]
fn loss_ind_gradient_matches_finite_differences() {
    run_variant(Variant::Ind);
}

#[test]
fn cross_entropy_gradient_through_deep_mlp() {
    for seed in 0..INSTANCES {
        let mut r = rng::stream(seed, 78);
        let spec = MlpSpec::new(vec![6, 9, 7, 5]).unwrap();
        let mut params = nn::init_params(&spec, seed);
        for layer in params.layers.iter_mut() {
            for v in layer.bias.iter_mut() {
                *v = 0.1 * r.sample::<f64, _>(StandardNormal);
            }
        }
        let x = inputs_away_from_kinks(&mut r, &params.layers[..2], 5, 6);
        let y = random_labels(&mut r, 5, 5);
        let (logits, cache) = nn::forward(&params, &x).unwrap();
        let s = nn::softmax(&logits);
        let g = Matrix::new(5, 5, s.data().iter().zip(y.data()).map(|(s, y)| (s - y) / 5.0).collect()).unwrap();
        let grads = nn::backward(&params, &cache, &g).unwrap();
        let (coords, worst) = check_all(&params, &grads, |p| {
            nn::cross_entropy(&nn::predict_proba(p, &x).unwrap(), &y).unwrap()
        });
        assert!(coords >= 100);
        assert!(worst < MAX_REL, "instance {seed}: relative error {worst:e}");
    }
}
