//! Teachers, a single-model baseline and one student per (variant, alpha), per grid cell.

use efkd_core::distill::{
    generate_subset, student_infer, train_student, train_teacher, DistillConfig, HeadMode, StudentSpec,
    SubsetSpec, TeacherBank, TrainConfig, Variant,
};
use efkd_core::fusion::{average_fuse, PredictionSet};
use efkd_core::{nn, rng};
use rayon::prelude::*;

use super::{mean_std, prob_accuracy_pct};
use crate::config::{DistillGrid, ExperimentConfig};
use crate::data::Split;
use crate::error::{CliError, Result};
use crate::report::Row;
use crate::runner::Cell;

const NAME: &str = "distill";

pub fn cell_name(n: usize, p: f64) -> String {
    format!("N={n},p={p}")
}

pub fn cell_names(grid: &DistillGrid) -> Vec<String> {
    grid.teachers
        .iter()
        .flat_map(|&n| grid.p.iter().map(move |&p| cell_name(n, p)))
        .collect()
}

fn parse_cell(name: &str) -> Result<(usize, f64)> {
    let bad = || CliError::Runtime(format!("malformed distillation cell `{name}`"));
    let (n, p) = name.split_once(',').ok_or_else(bad)?;
    let n = n.strip_prefix("N=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let p = p.strip_prefix("p=").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    Ok((n, p))
}

pub fn student_metric(variant: Variant, alpha: f64) -> String {
    format!("{}_a{alpha}_acc", variant.name())
}

/// Teacher `j` of a seed uses weights seed `mix(seed, 1 + j)` and subset seed
/// `mix(seed, 1000 + j)` whatever `N` is, so larger cells extend smaller ones. The
/// single model and every student share seed `mix(seed, 0)`.
pub fn run_cell(config: &ExperimentConfig, split: &Split, cell: &Cell) -> Result<Vec<Row>> {
    let (n, p) = parse_cell(&cell.name)?;
    let seed = cell.seed;
    let grid = &config.distill;
    let train = &split.train;
    let spec = config.model.spec(train.feature_dim(), train.classes())?;
    let teacher_hyper = config.model.train;
    let student_hyper = TrainConfig {
        iterations: grid.student_iterations,
        ..teacher_hyper
    };

    let subsets = (0..n)
        .map(|j| SubsetSpec::new(p, rng::mix(seed, 1000 + j as u64)))
        .collect::<efkd_core::Result<Vec<_>>>()?;
    let seeds: Vec<u64> = (0..n).map(|j| rng::mix(seed, 1 + j as u64)).collect();
    let bank = TeacherBank::train(&spec, train, &subsets, &teacher_hyper, &seeds)?;
    let teacher_probs = bank.predict(split.test.inputs())?;

    let student_seed = rng::mix(seed, 0);
    let all: Vec<usize> = (0..train.len()).collect();
    let single = train_teacher(&spec, &all, train, &student_hyper, student_seed)?;
    let single_acc = prob_accuracy_pct(&nn::predict_proba(&single, split.test.inputs())?, &split.test);

    let jobs: Vec<(Variant, f64)> = grid
        .variants
        .iter()
        .flat_map(|&v| grid.alphas.iter().map(move |&a| (v, a)))
        .collect();
    let students: Vec<f64> = jobs
        .par_iter()
        .map(|&(variant, alpha)| {
            let mode = match variant {
                Variant::Ind => HeadMode::PerTeacher(n),
                _ => HeadMode::Single,
            };
            let sspec = StudentSpec::from_network(&spec, mode)?;
            let cfg = DistillConfig::new(variant, alpha, n)?;
            let params = train_student(&cfg, &bank, &sspec, train, &student_hyper, student_seed)?;
            Ok(prob_accuracy_pct(&student_infer(&params, &sspec, split.test.inputs())?, &split.test))
        })
        .collect::<Result<_>>()?;

    let teacher_acc: Vec<f64> = teacher_probs.iter().map(|t| prob_accuracy_pct(t, &split.test)).collect();
    let (t_mean, t_std) = mean_std(&teacher_acc);
    let ensemble = average_fuse(&PredictionSet::new(teacher_probs)?);
    let subset_sizes: Vec<f64> = subsets.iter().map(|s| generate_subset(train.len(), *s).len() as f64).collect();

    let row = |metric: String, v: f64| Row::new(NAME, seed, cell.name.clone(), metric, v);
    let mut rows = vec![
        row("single_acc".into(), single_acc),
        row("ensemble_acc".into(), prob_accuracy_pct(&ensemble, &split.test)),
        row("teacher_mean_acc".into(), t_mean),
        row("teacher_std_acc".into(), t_std),
        row("teacher_subset_mean".into(), mean_std(&subset_sizes).0),
    ];
    for (&(variant, alpha), acc) in jobs.iter().zip(students) {
        rows.push(row(student_metric(variant, alpha), acc));
    }
    Ok(rows)
}
