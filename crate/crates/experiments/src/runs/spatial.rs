//! Monte Carlo spatial elections in the unit square.

use efkd_core::voting::spatial_election;

use super::mean_std;
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::report::Row;
use crate::runner::Cell;

const NAME: &str = "spatial";

pub fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<Vec<Row>> {
    let rule = cell.name.parse().map_err(|e| CliError::Config(format!("{e}")))?;
    let s = &config.spatial;
    // every rule sees the same electorates for a given seed
    let winners = spatial_election(s.voters, s.candidates, rule, s.trials, cell.seed)?;
    let xs: Vec<f64> = winners.iter().map(|w| w[0]).collect();
    let ys: Vec<f64> = winners.iter().map(|w| w[1]).collect();
    let dist: Vec<f64> = winners.iter().map(|w| ((w[0] - 0.5).powi(2) + (w[1] - 0.5).powi(2)).sqrt()).collect();
    let (mx, sx) = mean_std(&xs);
    let (my, sy) = mean_std(&ys);
    let (md, sd) = mean_std(&dist);
    let row = |metric: &str, v: f64| Row::new(NAME, cell.seed, cell.name.clone(), metric, v);
    Ok(vec![
        row("mean_x", mx),
        row("mean_y", my),
        row("std_x", sx),
        row("std_y", sy),
        row("center_distance_mean", md),
        row("center_distance_std", sd),
    ])
}
