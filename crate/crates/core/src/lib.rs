//! Ensemble decision fusion and multi-teacher knowledge distillation on small
//! fully connected networks.
//!
//! The crate is organised by concern:
//!
//! - [`matrix`] and [`nn`]: a dense `f64` MLP engine (forward, exact reverse-mode
//!   gradients, softmax with temperature, CE/KL losses, Adam).
//! - [`voting`]: ranked-ballot rules (positional, Copeland, minimax, STV), the
//!   net-margin preference matrix, Condorcet detection and the spatial-election
//!   Monte Carlo.
//! - [`fusion`]: combining per-model class probabilities (averaging, voting,
//!   Bayes optimal weighting, least-squares stacking).
//! - [`schedules`]: constant, cosine snapshot and FGE learning-rate schedules and
//!   their checkpoint policies.
//! - [`distill`]: teacher subsets and training, the three teacher-mimicking
//!   losses, multi-head students.
//! - [`analysis`]: ambiguity decomposition, similarity matrices, binary metrics.
//!
//! Everything is a pure function of its inputs. Randomness always comes from an
//! explicit seed through [`rng::stream`].

pub mod analysis;
pub mod distill;
pub mod error;
pub mod fusion;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod schedules;
pub mod voting;

pub use error::{Error, Result};
pub use matrix::Matrix;
