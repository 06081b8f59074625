//! Weak-model pool, random ensembles of each size, every fusion rule.

use efkd_core::distill::{generate_subset, train_teacher, SubsetSpec};
use efkd_core::fusion::PredictionSet;
use efkd_core::{nn, rng, Matrix};
use rand::seq::index;
use rayon::prelude::*;

use super::{accuracy_pct, mean_std, prob_accuracy_pct};
use crate::config::ExperimentConfig;
use crate::data::Split;
use crate::error::Result;
use crate::report::Row;

const NAME: &str = "vote";

/// Test-set probabilities of `pool_size` independently trained members.
///
/// Member `j` uses seed `mix(seed, j)` and a Bernoulli subset drawn with `mix(member, 1)`.
pub fn train_pool(config: &ExperimentConfig, split: &Split, seed: u64) -> Result<Vec<Matrix>> {
    let spec = config.model.spec(split.train.feature_dim(), split.train.classes())?;
    let vote = &config.vote;
    (0..vote.pool_size)
        .into_par_iter()
        .map(|j| {
            let member = rng::mix(seed, j as u64);
            let subset = generate_subset(split.train.len(), SubsetSpec::new(vote.pool_p, rng::mix(member, 1))?);
            let params = train_teacher(&spec, &subset, &split.train, &config.model.train, member)?;
            Ok(nn::predict_proba(&params, split.test.inputs())?)
        })
        .collect()
}

/// Members of draw `d` for ensemble size `n`.
pub fn draw_members(seed: u64, n: usize, d: usize, pool: usize) -> Vec<usize> {
    let mut r = rng::stream(rng::mix(seed, n as u64), d as u64);
    index::sample(&mut r, pool, n).into_vec()
}

pub fn run_cell(config: &ExperimentConfig, split: &Split, seed: u64) -> Result<Vec<Row>> {
    let pool = train_pool(config, split, seed)?;
    let member_acc: Vec<f64> = pool.iter().map(|p| prob_accuracy_pct(p, &split.test)).collect();
    let (m, s) = mean_std(&member_acc);
    let mut rows = vec![
        Row::new(NAME, seed, "pool", "members", pool.len() as f64),
        Row::new(NAME, seed, "pool", "member_mean", m),
        Row::new(NAME, seed, "pool", "member_std", s),
    ];
    let vote = &config.vote;
    for &n in &vote.ensemble_sizes {
        // accuracies[draw][rule]
        let accuracies: Vec<Vec<f64>> = (0..vote.draws)
            .into_par_iter()
            .map(|d| {
                let members = draw_members(seed, n, d, pool.len());
                let preds = PredictionSet::new(members.iter().map(|&i| pool[i].clone()).collect())?;
                vote.rules
                    .iter()
                    .map(|rule| Ok(accuracy_pct(&rule.labels(&preds)?, &split.test)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let cell = format!("N={n}");
        for (k, rule) in vote.rules.iter().enumerate() {
            let column: Vec<f64> = accuracies.iter().map(|a| a[k]).collect();
            let (mean, std) = mean_std(&column);
            let min = column.iter().copied().fold(f64::INFINITY, f64::min);
            let max = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (stat, v) in [("mean", mean), ("std", std), ("min", min), ("max", max)] {
                rows.push(Row::new(NAME, seed, cell.clone(), format!("{rule}_{stat}"), v));
            }
        }
    }
    Ok(rows)
}
