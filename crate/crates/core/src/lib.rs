//! Elapsed time between two transient-state observations of an absorbing
//! discrete-time Markov chain.
//!
//! Given a transition matrix, a start state `i` and a later observed state `j`
//! (both transient), this crate computes the mean, variance and distribution
//! of the number of steps between the two observations. The pipeline is:
//!
//! 1. [`chain::classify`] splits the chain into transient and absorbing states.
//! 2. [`passage::passage_summary`] makes `j` absorbing and extracts hitting
//!    probabilities, conditional first-passage moments and return moments.
//! 3. [`elapsed`] combines them into `E(T)`, `V(T)` and `P(T = t)`.
//!
//! [`oracle`] holds independent brute-force checks and [`wright_fisher`]
//! applies the machinery to allele ages.

pub mod chain;
pub mod cli;
pub mod elapsed;
pub mod error;
pub mod matrix;
pub mod oracle;
pub mod passage;
pub mod report;
pub mod wright_fisher;

pub use chain::{absorption_probabilities, classify, AbsorptionProbabilities, ChainStructure};
pub use elapsed::{
    distribution_of_elapsed, expected_elapsed, variance_elapsed, ElapsedDistribution,
    ElapsedMoments, ElapsedQuery, VarianceMode,
};
pub use error::{ChainError, Result};
pub use matrix::{load_matrix, load_matrix_file, TransitionMatrix};
pub use oracle::{enumerate_elapsed, simulate_elapsed, simulate_recurrence, SimConfig, SimEstimate};
pub use passage::{passage_summary, PassageMoments, PassageSummary, RecurrenceMode};
pub use wright_fisher::{allele_age, build_wf_matrix, AlleleAgeResult, WrightFisherParams};
