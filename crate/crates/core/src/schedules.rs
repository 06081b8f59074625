//! Learning-rate schedules and the epochs at which cyclic ensembles save snapshots.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Shape of the learning-rate curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleKind {
    Constant {
        rate: f64,
    },
    /// Shifted cosine restarted `cycles` times over the whole horizon.
    SnapshotCosine {
        alpha0: f64,
        cycles: usize,
    },
    /// `alpha1` for the pretraining share of the epochs, then a triangular wave
    /// `alpha1 → alpha2 → alpha1` with a period of `cycle_epochs`.
    Fge {
        pretrain_fraction: f64,
        alpha1: f64,
        alpha2: f64,
        cycle_epochs: usize,
    },
}

/// A schedule bound to a training horizon of `total_epochs × iterations_per_epoch`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    total_epochs: usize,
    iterations_per_epoch: usize,
}

/// Default share of the budget spent in FGE pretraining.
pub const FGE_PRETRAIN_FRACTION: f64 = 0.75;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, total_epochs: usize, iterations_per_epoch: usize) -> Result<Self> {
        if total_epochs == 0 || iterations_per_epoch == 0 {
            return Err(Error::InvalidArgument("schedule horizon must be non-empty".into()));
        }
        let horizon = total_epochs * iterations_per_epoch;
        match kind {
            ScheduleKind::Constant { rate } => positive("rate", rate)?,
            ScheduleKind::SnapshotCosine { alpha0, cycles } => {
                positive("alpha0", alpha0)?;
                if cycles == 0 || cycles > horizon {
                    return Err(Error::InvalidArgument(format!(
                        "cycle count {cycles} must lie in 1..={horizon}"
                    )));
                }
            }
            ScheduleKind::Fge {
                pretrain_fraction,
                alpha1,
                alpha2,
                cycle_epochs,
            } => {
                positive("alpha1", alpha1)?;
                positive("alpha2", alpha2)?;
                if alpha1 <= alpha2 {
                    return Err(Error::InvalidArgument("FGE needs alpha1 > alpha2".into()));
                }
                if !(pretrain_fraction > 0.0 && pretrain_fraction < 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "pretrain fraction {pretrain_fraction} outside (0, 1)"
                    )));
                }
                if cycle_epochs == 0 {
                    return Err(Error::InvalidArgument("FGE cycle length must be positive".into()));
                }
            }
        }
        Ok(Self {
            kind,
            total_epochs,
            iterations_per_epoch,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    pub fn iterations_per_epoch(&self) -> usize {
        self.iterations_per_epoch
    }

    /// Total number of iterations `T`.
    pub fn horizon(&self) -> usize {
        self.total_epochs * self.iterations_per_epoch
    }

    /// Iterations per Snapshot cycle, `ceil(T / M)`.
    pub fn cycle_iterations(&self) -> Option<usize> {
        match self.kind {
            ScheduleKind::SnapshotCosine { cycles, .. } => Some(self.horizon().div_ceil(cycles)),
            _ => None,
        }
    }

    /// FGE pretraining length in whole epochs.
    pub fn pretrain_epochs(&self) -> Option<usize> {
        match self.kind {
            ScheduleKind::Fge { pretrain_fraction, .. } => {
                Some((pretrain_fraction * self.total_epochs as f64).round() as usize)
            }
            _ => None,
        }
    }
}

/// Learning rate at 1-based iteration `t`.
///
/// FGE positions are measured in epochs, with iteration `t` ending at `t / iterations_per_epoch`,
/// so the last iteration of epoch `e` sits exactly at `e`.
pub fn lr_at(spec: &ScheduleSpec, t: usize) -> Result<f64> {
    let horizon = spec.horizon();
    if t == 0 || t > horizon {
        return Err(Error::OutOfRange { t, horizon });
    }
    Ok(match spec.kind {
        ScheduleKind::Constant { rate } => rate,
        ScheduleKind::SnapshotCosine { alpha0, cycles } => {
            let len = horizon.div_ceil(cycles);
            let phase = ((t - 1) % len) as f64 / len as f64;
            alpha0 / 2.0 * ((PI * phase).cos() + 1.0)
        }
        ScheduleKind::Fge {
            alpha1,
            alpha2,
            cycle_epochs,
            ..
        } => {
            let ipe = spec.iterations_per_epoch;
            let pretrain = spec.pretrain_epochs().unwrap_or(0) * ipe;
            if t <= pretrain {
                alpha1
            } else {
                let period = cycle_epochs * ipe;
                let offset = (t - pretrain) % period;
                // integer distance from the trough keeps rising and falling edges symmetric
                let depth = 1.0 - (2 * offset).abs_diff(period) as f64 / period as f64;
                (1.0 - depth) * alpha1 + depth * alpha2
            }
        }
    })
}

/// Strictly increasing epochs (1-based) at which parameters are saved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointPolicy {
    epochs: Vec<usize>,
}

impl CheckpointPolicy {
    pub fn new(epochs: Vec<usize>, total_epochs: usize) -> Result<Self> {
        if epochs.first() == Some(&0) || epochs.last().is_some_and(|&e| e > total_epochs) {
            return Err(Error::InvalidArgument(format!("checkpoint outside 1..={total_epochs}")));
        }
        if epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("checkpoints must be strictly increasing".into()));
        }
        Ok(Self { epochs })
    }

    pub fn epochs(&self) -> &[usize] {
        &self.epochs
    }

    pub fn contains(&self, epoch: usize) -> bool {
        self.epochs.binary_search(&epoch).is_ok()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Epochs with the lowest learning rate of each cycle.
///
/// Snapshot: the last epoch that ends inside each cycle (the final cycle ends with training).
/// FGE: the epoch during which each trough `P + (k + 0.5) C` falls, `ceil` of it, for
/// troughs inside the horizon.
/// Constant: the final epoch.
pub fn checkpoint_epochs(spec: &ScheduleSpec) -> CheckpointPolicy {
    let total = spec.total_epochs;
    let ipe = spec.iterations_per_epoch;
    let mut epochs = Vec::new();
    match spec.kind {
        ScheduleKind::Constant { .. } => epochs.push(total),
        ScheduleKind::SnapshotCosine { cycles, .. } => {
            let len = spec.horizon().div_ceil(cycles);
            let mut end = len;
            while end < spec.horizon() {
                let e = end / ipe;
                if e > 0 && epochs.last() != Some(&e) {
                    epochs.push(e);
                }
                end += len;
            }
            if epochs.last() != Some(&total) {
                epochs.push(total);
            }
        }
        ScheduleKind::Fge { cycle_epochs, .. } => {
            let pretrain = spec.pretrain_epochs().unwrap_or(0);
            // trough k at P + (k + 0.5) C, doubled to stay in integers
            let mut twice = 2 * pretrain + cycle_epochs;
            while twice <= 2 * total {
                epochs.push(twice.div_ceil(2));
                twice += 2 * cycle_epochs;
            }
        }
    }
    CheckpointPolicy::new(epochs, total).expect("generated checkpoints are increasing and in range")
}
