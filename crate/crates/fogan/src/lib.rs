//! Penalized Wasserstein divergences for adversarial training.
//!
//! This crate implements a family of critic-based adversarial divergences
//! between finite-support measures, built around two ideas:
//!
//! - a **penalized Wasserstein divergence** whose Lipschitz penalty is weighted
//!   by the pair distance, so the optimal critic slope between the two supports
//!   is `1/(2λ)` regardless of how far apart they sit, and
//! - a **first order** refinement that additionally pins the critic's input
//!   gradient on the generated support to a prescribed field, which makes the
//!   cheap generator update `½ ∇_θ E[f*]` point in the direction of steepest
//!   descent and removes the penalty term's mini-batch variance.
//!
//! The crate provides:
//!
//! - [`autodiff`]: a scalar expression tape whose reverse pass emits new
//!   expressions, so gradients can be differentiated again (needed because the
//!   first-order critic loss contains input gradients of the critic),
//! - [`nets`]: small MLP critics/generators over the tape with flat parameter
//!   vectors and a binary checkpoint format,
//! - [`measures`]: weighted finite point sets, analytic generator families,
//!   and the stretched sampler that pulls generated points toward the data,
//! - [`divergences`]: the four divergence instantiations, the gradient-penalty
//!   functional `G`, and an exact 1-D Wasserstein oracle,
//! - [`critic_solver`]: the contraction `T` with projection `S` that computes
//!   optimal tabular critics on finite supports, plus a `C¹` extension whose
//!   input gradient zeroes `G`,
//! - [`training`]: critic/generator loops, the half-gradient and envelope
//!   update rules, and a mini-batch variance probe,
//! - [`metrics`], [`corpus`], [`experiment`]: n-gram JSD with a Bayes-limit
//!   estimate, mode coverage, a toy Markov text corpus, and the experiment
//!   runner behind the `fogan` binary.

use thiserror::Error;

pub mod autodiff;
pub mod check;
pub mod corpus;
pub mod critic_solver;
pub mod divergences;
pub mod experiment;
pub mod measures;
pub mod metrics;
pub mod nets;
pub mod oracle;
pub mod plot;
pub mod quadrature;
pub mod training;

pub use critic_solver::{solve_optimal_critic, TabularCritic};
pub use divergences::{estimate, DivergenceEstimate, DivergenceKind, DivergenceSpec};
pub use measures::{EmpiricalMeasure, GeneratorFamily, StretchSpec};
pub use metrics::{bayes_limit, mode_coverage, ngram_jsd, NGramDistribution};
pub use nets::Mlp;
pub use training::{train, TrainConfig, UpdateRule};

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate critic: {0}")]
    DegenerateCritic(String),

    #[error(
        "fixed-point solver did not converge: delta {final_delta:.3e} after {iterations} sweeps"
    )]
    NotConverged { iterations: usize, final_delta: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Distance floor used whenever `‖x - x'‖` appears in a denominator.
///
/// Disjoint supports make every such distance positive in theory; sampled data
/// can violate that numerically, so pair distances are clamped from below.
pub const DIST_FLOOR: f64 = 1e-9;

/// Smoothing constant for Euclidean norms inside differentiated penalty terms,
/// where the exact norm has no gradient at zero: `‖v‖ ≈ sqrt(‖v‖² + δ²)`.
pub const NORM_SMOOTH: f64 = 1e-12;
