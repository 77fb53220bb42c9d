//! Parallel surrogate-based global optimization for noisy black-box functions:
//! radial basis function surrogates, stochastic response surface proposals,
//! and a zoom tree that refines the search domain.

pub mod benchmarks;
pub mod doe;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod problem;
pub mod rng;
pub mod srs;
pub mod surrogate;
pub mod zoomtree;

pub use benchmarks::{make_benchmark, BenchmarkProblem, BENCHMARK_NAMES};
pub use engine::{
    run_prosrs, run_prosrs_with, run_random_search, run_random_search_with, EngineOptions, Evaluator, IterationEvent,
    IterationLog, ParallelEvaluator, RunResult, SerialEvaluator,
};
pub use error::{Error, Result};
pub use problem::{default_config, BoxDomain, EvalDataset, FnObjective, Objective, RunConfig};
pub use surrogate::{fit_rbf, CvConfig, RbfSurrogate};
pub use zoomtree::ExploitState;
