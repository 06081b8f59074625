//! The four experiments. Each splits into independent cells that the runner executes.

pub mod cyclic;
pub mod distill;
pub mod spatial;
pub mod vote;

use std::time::Instant;

use efkd_core::distill::Dataset;
use efkd_core::Matrix;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::data::Split;
use crate::error::Result;
use crate::report::{Metadata, RunReport};
use crate::runner::{run_cells, Cell, RunOptions};

/// Percentage of `predicted` equal to the data's labels.
pub fn accuracy_pct(predicted: &[usize], data: &Dataset) -> f64 {
    let hits = predicted.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    100.0 * hits as f64 / data.len() as f64
}

pub fn prob_accuracy_pct(probs: &Matrix, data: &Dataset) -> f64 {
    100.0 * efkd_core::nn::accuracy(probs, data.labels())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The cells of `config`, cell-major then seed.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let names = match config.kind {
        ExperimentKind::Vote => vec!["pool".to_string()],
        ExperimentKind::Cyclic => vec![cyclic::schedule_name(&config.cyclic).to_string()],
        ExperimentKind::Distill => distill::cell_names(&config.distill),
        ExperimentKind::Spatial => config.spatial.rules.iter().map(|r| r.name().to_string()).collect(),
    };
    names
        .into_iter()
        .flat_map(|name| {
            config.seeds.iter().map(move |&seed| Cell {
                name: name.clone(),
                seed,
            })
        })
        .collect()
}

/// Run `config` end to end.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let split: Option<Split> = match config.kind {
        ExperimentKind::Spatial => None,
        _ => Some(config.data.load()?),
    };
    let cells = cells(config);
    let hash = config.hash();
    let (rows, resumed) = run_cells(&cells, &hash, options, |cell| match config.kind {
        ExperimentKind::Vote => vote::run_cell(config, split.as_ref().expect("data"), cell.seed),
        ExperimentKind::Cyclic => cyclic::run_cell(config, split.as_ref().expect("data"), cell.seed),
        ExperimentKind::Distill => distill::run_cell(config, split.as_ref().expect("data"), cell),
        ExperimentKind::Spatial => spatial::run_cell(config, cell),
    })?;
    Ok(RunReport {
        rows,
        meta: Metadata {
            experiment: config.kind.name().to_string(),
            config_hash: hash,
            wall_time_secs: start.elapsed().as_secs_f64(),
            workers: options.workers,
            cells: cells.len(),
            resumed_cells: resumed,
        },
    })
}
