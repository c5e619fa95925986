//! Bayesian optimization over categorical design spaces.
//!
//! Categorical sites are binary-encoded, a quadratic (QUBO) surrogate is fit
//! with Bayesian ridge regression, and each loop minimizes a Thompson draw of
//! the surrogate (with penalty terms for invalid codes) to propose the next
//! batch of points to evaluate.

pub mod acquisition;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod driver;
pub mod encoding;
pub mod error;
pub mod objective;
pub mod report;
pub mod seed;
pub mod solver;
pub mod surrogate;
pub mod trace;

pub use acquisition::{build_acquisition, energy, QuboProblem};
pub use dataset::{Dataset, Observation};
pub use driver::{
    run_baseline, run_bo, run_sweep, InitialData, LoopRecord, RunConfig, RunKind, RunOutput,
    SweepOutput,
};
pub use encoding::{
    build_penalty_spec, decode, encode, is_feasible, BitVector, DesignSpace, PenaltySpec, SiteSpec,
};
pub use error::{Error, Result};
pub use objective::{make_synthetic, ObjectiveSpec, Orientation, SyntheticKind, SyntheticParams};
pub use solver::{random_batch, select_batch, solve, Backend, BetaSchedule, SamplePool, SolverConfig};
pub use surrogate::{
    design_row, fit_posterior, predict, r_squared, sample_coefficients, CoefficientSample,
    FeatureMap, PosteriorModel,
};
