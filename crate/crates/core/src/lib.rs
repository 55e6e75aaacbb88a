//! Learning-by-confusion: locate phase transitions and distribution change
//! points from samples taken on a one-dimensional parameter grid.
//!
//! For a grid `θ_0 < … < θ_K` there are `K` ways to split the grid into a
//! lower and an upper contiguous region. Each split defines a binary task;
//! the split whose classifier is least confused (lowest class-balanced error)
//! marks the most likely transition. Two training modes are provided:
//!
//! * single-task: one binary classifier per split ([`confusion::train_single_task`]),
//! * multi-task: one network with `K` sigmoid heads trained on the mean of the
//!   `K` balanced losses ([`confusion::train_multi_task`]).
//!
//! [`ising`] generates 2D Ising datasets by Metropolis-Hastings sampling and
//! [`oracle`] provides exact enumeration and an energy-histogram Bayes
//! classifier used as ground truth.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confusion;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod ising;
pub mod nn;
pub mod oracle;

pub use error::{Error, Result};

/// Seedable generator used everywhere randomness is needed (ChaCha with
/// 8 rounds, seeded through `SeedableRng::seed_from_u64`).
pub type Rng = rand_chacha::ChaCha8Rng;

/// Exact critical temperature `k_B T_c / J = 2 / ln(1 + √2)` of the square-lattice Ising model.
pub const ISING_CRITICAL_TEMPERATURE: f64 = 2.269_185_314_213_022;
