//! Synthetic scenes, noise injection, Monte-Carlo benchmarks and test oracles.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), a counter-based generator
//! whose output is fixed across platforms, so seeds are portable. Each
//! consumer derives its own stream from the scene seed.

pub mod monte_carlo;
pub mod oracle;
mod scene;
pub mod stats;

pub use monte_carlo::{monte_carlo, trial_scene, trial_seed, two_view_init, Method, ResultTable, RunSpec, Summary, TrialRecord};
pub use oracle::{jacobi_eigen, triangulate_midpoint, OracleError};
pub use scene::*;
