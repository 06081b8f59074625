//! One scheduled training run checkpointed per policy, against independently trained models.

use std::fs;
use std::path::Path;

use efkd_core::analysis::similarity_matrix;
use efkd_core::distill::{train_teacher, Dataset, TrainConfig};
use efkd_core::fusion::PredictionSet;
use efkd_core::nn::{self, AdamState, BatchSampler, MlpParams, MlpSpec};
use efkd_core::schedules::{checkpoint_epochs, lr_at, ScheduleKind, ScheduleSpec};
use efkd_core::{rng, Matrix};
use rayon::prelude::*;

use super::{accuracy_pct, prob_accuracy_pct};
use crate::checkpoint;
use crate::config::{CyclicConfig, ExperimentConfig};
use crate::data::Split;
use crate::error::{CliError, Result};
use crate::report::Row;

const NAME: &str = "cyclic";

pub fn schedule_name(c: &CyclicConfig) -> &'static str {
    match c.schedule {
        ScheduleKind::Constant { .. } => "constant",
        ScheduleKind::SnapshotCosine { .. } => "snapshot",
        ScheduleKind::Fge { .. } => "fge",
    }
}

pub fn iterations_per_epoch(examples: usize, batch_size: usize) -> usize {
    examples.div_ceil(batch_size).max(1)
}

/// Minibatch Adam with the rate replaced by `lr_at(schedule, t)` at every step.
///
/// Seeding matches `train_teacher`, so a constant schedule at the Adam rate reproduces
/// it exactly. `on_epoch(e, params)` runs after the last step of each epoch.
pub fn train_scheduled(
    spec: &MlpSpec,
    data: &Dataset,
    hyper: &TrainConfig,
    schedule: &ScheduleSpec,
    seed: u64,
    mut on_epoch: impl FnMut(usize, &MlpParams) -> Result<()>,
) -> Result<MlpParams> {
    hyper.validate()?;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut params = nn::init_params(spec, seed);
    let mut state = AdamState::new(hyper.adam, &params);
    let mut sampler = BatchSampler::new(&all, hyper.batch_size, rng::stream(seed, 1))?;
    let ipe = schedule.iterations_per_epoch();
    for t in 1..=schedule.horizon() {
        state.config.learning_rate = lr_at(schedule, t)?;
        let idx = sampler.next_batch();
        let labels: Vec<usize> = idx.iter().map(|&i| data.labels()[i]).collect();
        let y = nn::one_hot(&labels, data.classes())?;
        let (logits, cache) = nn::forward(&params, &data.inputs().select_rows(&idx))?;
        let s = nn::softmax(&logits);
        let b = idx.len() as f64;
        let grad = Matrix::from_fn(s.rows(), s.cols(), |r, c| (s.get(r, c) - y.get(r, c)) / b);
        let grads = nn::backward(&params, &cache, &grad)?;
        nn::adam_step(&mut params, &grads, &mut state)?;
        if t % ipe == 0 {
            on_epoch(t / ipe, &params)?;
        }
    }
    Ok(params)
}

fn write_outputs(path: &Path, probs: &Matrix, labels: &[usize]) -> Result<()> {
    let fail = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(fail)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..probs.cols()).map(|c| format!("p{c}")));
    w.write_record(&header).map_err(fail)?;
    for (row, y) in probs.row_iter().zip(labels) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(|p| p.to_string()));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path)(e))
}

/// Accuracy, fused accuracy and label-agreement rows for one set of models.
fn describe(
    config: &ExperimentConfig,
    seed: u64,
    cell: &str,
    names: &[String],
    probs: Vec<Matrix>,
    test: &Dataset,
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let row = |metric: String, v: f64| Row::new(NAME, seed, cell, metric, v);
    for (name, p) in names.iter().zip(&probs) {
        rows.push(row(format!("{name}_acc"), prob_accuracy_pct(p, test)));
    }
    let labels: Vec<Vec<usize>> = probs.iter().map(|p| p.argmax_rows()).collect();
    let preds = PredictionSet::new(probs)?;
    for rule in &config.vote.rules {
        rows.push(row(format!("ensemble_{rule}_acc"), accuracy_pct(&rule.labels(&preds)?, test)));
    }
    let sim = similarity_matrix(&labels)?;
    if let Some(m) = sim.mean_off_diagonal() {
        rows.push(row("mean_similarity".into(), m));
    }
    for i in 0..sim.size() {
        for j in i + 1..sim.size() {
            rows.push(row(format!("similarity_{i}_{j}"), sim.get(i, j)));
        }
    }
    Ok(rows)
}

pub fn run_cell(config: &ExperimentConfig, split: &Split, seed: u64) -> Result<Vec<Row>> {
    let c = &config.cyclic;
    let hyper = config.model.train;
    let spec = config.model.spec(split.train.feature_dim(), split.train.classes())?;
    let schedule = c.schedule_spec(iterations_per_epoch(split.train.len(), hyper.batch_size))?;
    let policy = checkpoint_epochs(&schedule);
    let tag = schedule_name(c);
    for dir in [&c.checkpoint_dir, &c.outputs_dir].into_iter().flatten() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }

    let mut snapshots: Vec<(usize, MlpParams)> = Vec::new();
    train_scheduled(&spec, &split.train, &hyper, &schedule, rng::mix(seed, 0), |epoch, params| {
        if policy.contains(epoch) {
            if let Some(dir) = &c.checkpoint_dir {
                checkpoint::save(&dir.join(format!("seed{seed}_{tag}_e{epoch:04}.efckpt")), params)?;
            }
            snapshots.push((epoch, params.clone()));
        }
        Ok(())
    })?;

    let independent_hyper = TrainConfig {
        iterations: schedule.horizon(),
        ..hyper
    };
    let all: Vec<usize> = (0..split.train.len()).collect();
    let independent: Vec<MlpParams> = (0..snapshots.len())
        .into_par_iter()
        .map(|j| Ok(train_teacher(&spec, &all, &split.train, &independent_hyper, rng::mix(seed, 1 + j as u64))?))
        .collect::<Result<_>>()?;

    let snap_probs: Vec<Matrix> = snapshots
        .iter()
        .map(|(_, p)| nn::predict_proba(p, split.test.inputs()))
        .collect::<efkd_core::Result<_>>()?;
    let ind_probs: Vec<Matrix> = independent
        .iter()
        .map(|p| nn::predict_proba(p, split.test.inputs()))
        .collect::<efkd_core::Result<_>>()?;
    if let Some(dir) = &c.outputs_dir {
        for ((epoch, _), p) in snapshots.iter().zip(&snap_probs) {
            write_outputs(&dir.join(format!("seed{seed}_{tag}_e{epoch:04}.csv")), p, split.test.labels())?;
        }
        for (j, p) in ind_probs.iter().enumerate() {
            write_outputs(&dir.join(format!("seed{seed}_independent_{j}.csv")), p, split.test.labels())?;
        }
    }

    let snap_names: Vec<String> = snapshots.iter().map(|(e, _)| format!("checkpoint_e{e}")).collect();
    let ind_names: Vec<String> = (0..independent.len()).map(|j| format!("model_{j}")).collect();
    let mut rows = vec![Row::new(NAME, seed, tag, "checkpoints", snapshots.len() as f64)];
    rows.extend(describe(config, seed, tag, &snap_names, snap_probs, &split.test)?);
    rows.extend(describe(config, seed, "independent", &ind_names, ind_probs, &split.test)?);
    Ok(rows)
}
