//! The optimization driver: initial design, the fit / propose / evaluate /
//! update cycle, zooming, restarts, and a uniform random-search baseline.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::latin_hypercube_maximin;
use crate::error::{Error, Result};
use crate::problem::{BoxDomain, EvalDataset, Objective, RunConfig};
use crate::rng::{derive_seed, stream_rng, Stream, StreamRng};
use crate::srs::{generate_candidates, select_batch, surrogate_argmin, weight_pattern};
use crate::surrogate::{fit_rbf, CvConfig, RbfSurrogate};
use crate::zoomtree::{effective_n, update_state, ExploitState, ZoomTree};

/// What happened to the tree during an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationEvent {
    /// A batch of an initial or post-restart design.
    Doe,
    Normal,
    ZoomIn,
    ZoomOut,
    Restart,
}

impl IterationEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            IterationEvent::Doe => "doe",
            IterationEvent::Normal => "normal",
            IterationEvent::ZoomIn => "zoom_in",
            IterationEvent::ZoomOut => "zoom_out",
            IterationEvent::Restart => "restart",
        }
    }
}

/// One record per evaluated batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    /// 0 for the initial design, then 1..=N.
    pub iteration: usize,
    pub event: IterationEvent,
    pub node_id: usize,
    pub zoom_level: usize,
    pub state: ExploitState,
    pub proposed: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub best_x: Vec<f64>,
    /// Running minimum over every evaluation of the run.
    pub best_y: f64,
    /// Wall time spent in the algorithm, excluding evaluations.
    pub algo_time_s: f64,
    /// Wall time of the batch evaluation barrier.
    pub eval_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub x_best: Vec<f64>,
    pub y_best: f64,
    pub logs: Vec<IterationLog>,
    pub n_evaluations: usize,
    pub n_restarts: usize,
    pub max_zoom_level: usize,
    pub config: RunConfig,
}

impl RunResult {
    /// Every evaluation in the order it was made.
    pub fn evaluations(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.logs.iter().flat_map(|log| log.proposed.iter().map(Vec::as_slice).zip(log.values.iter().copied()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineOptions {
    /// When false, timing fields are logged as zero so logs are reproducible.
    pub record_timing: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { record_timing: true }
    }
}

/// A point to evaluate and the seed of its private noise stream.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTask {
    pub x: Vec<f64>,
    pub noise_seed: u64,
}

impl EvalTask {
    pub fn rng(&self) -> StreamRng {
        ChaCha8Rng::seed_from_u64(self.noise_seed)
    }

    fn run(&self, objective: &dyn Objective) -> Result<f64> {
        objective.evaluate(&self.x, &mut self.rng()).map_err(|e| match e {
            e @ Error::Evaluation { .. } => e,
            other => Error::Evaluation { x: self.x.clone(), message: other.to_string() },
        })
    }
}

/// Executes a batch of evaluations and returns the values in task order.
pub trait Evaluator {
    fn evaluate_batch(&self, objective: &dyn Objective, batch: &[EvalTask]) -> Result<Vec<f64>>;
}

/// Evaluates one point after another on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct SerialEvaluator;

impl Evaluator for SerialEvaluator {
    fn evaluate_batch(&self, objective: &dyn Objective, batch: &[EvalTask]) -> Result<Vec<f64>> {
        batch.iter().map(|t| t.run(objective)).collect()
    }
}

/// Evaluates the batch concurrently on the rayon pool.
#[derive(Clone, Copy, Debug, Default)]
pub struct ParallelEvaluator;

impl Evaluator for ParallelEvaluator {
    fn evaluate_batch(&self, objective: &dyn Objective, batch: &[EvalTask]) -> Result<Vec<f64>> {
        batch.par_iter().map(|t| t.run(objective)).collect()
    }
}

/// An iteration fails when no proposed value strictly improves on the best
/// value known before proposing.
pub fn is_failure(proposed_y: &[f64], best_prior_y: f64) -> bool {
    let best = proposed_y.iter().copied().fold(f64::INFINITY, f64::min);
    best >= best_prior_y
}

fn check_setup(objective: &dyn Objective, config: &RunConfig) -> Result<()> {
    config.validate()?;
    if objective.dimension() != objective.domain().dim() {
        return Err(Error::DimensionMismatch { expected: objective.domain().dim(), got: objective.dimension() });
    }
    Ok(())
}

/// Evaluation bookkeeping shared by both drivers.
struct Ledger<'a> {
    objective: &'a dyn Objective,
    evaluator: &'a dyn Evaluator,
    seed: u64,
    options: EngineOptions,
    n_evaluations: usize,
    best: Option<(Vec<f64>, f64)>,
    logs: Vec<IterationLog>,
}

impl<'a> Ledger<'a> {
    fn new(objective: &'a dyn Objective, evaluator: &'a dyn Evaluator, seed: u64, options: EngineOptions) -> Self {
        Self { objective, evaluator, seed, options, n_evaluations: 0, best: None, logs: Vec::new() }
    }

    fn evaluate(&mut self, points: &[Vec<f64>]) -> Result<(Vec<f64>, Duration)> {
        let tasks: Vec<EvalTask> = points
            .iter()
            .enumerate()
            .map(|(k, x)| EvalTask {
                x: x.clone(),
                noise_seed: derive_seed(self.seed, Stream::Noise, (self.n_evaluations + k) as u64),
            })
            .collect();
        let start = Instant::now();
        let values = self.evaluator.evaluate_batch(self.objective, &tasks)?;
        let elapsed = start.elapsed();
        if values.len() != points.len() {
            return Err(Error::BatchSizeMismatch { expected: points.len(), got: values.len() });
        }
        if let Some((x, v)) = points.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteValue { x: x.clone(), value: *v });
        }
        self.n_evaluations += points.len();
        for (x, &y) in points.iter().zip(&values) {
            if self.best.as_ref().is_none_or(|(_, b)| y < *b) {
                self.best = Some((x.clone(), y));
            }
        }
        Ok((values, elapsed))
    }

    fn log(&mut self, mut entry: IterationLog, total: Duration, eval: Duration) {
        let (best_x, best_y) = self.best.clone().expect("logged after an evaluation");
        entry.best_x = best_x;
        entry.best_y = best_y;
        if self.options.record_timing {
            entry.algo_time_s = total.saturating_sub(eval).as_secs_f64();
            entry.eval_time_s = eval.as_secs_f64();
        }
        self.logs.push(entry);
    }

    fn finish(self, config: &RunConfig, n_restarts: usize, max_zoom_level: usize) -> RunResult {
        let (x_best, y_best) = self.best.unwrap_or_default();
        RunResult {
            x_best,
            y_best,
            logs: self.logs,
            n_evaluations: self.n_evaluations,
            n_restarts,
            max_zoom_level,
            config: config.clone(),
        }
    }
}

fn entry(iteration: usize, event: IterationEvent, tree: &ZoomTree, state: ExploitState) -> IterationLog {
    IterationLog {
        iteration,
        event,
        node_id: tree.current_id(),
        zoom_level: tree.current().zoom_level,
        state,
        proposed: Vec::new(),
        values: Vec::new(),
        best_x: Vec::new(),
        best_y: f64::NAN,
        algo_time_s: 0.0,
        eval_time_s: 0.0,
    }
}

fn design_batches(config: &RunConfig, domain: &BoxDomain, rng: &mut StreamRng) -> VecDeque<Vec<Vec<f64>>> {
    let design = latin_hypercube_maximin(config.m_doe, domain, config.lhs_restarts, rng);
    design.points.chunks(config.n_par).map(<[Vec<f64>]>::to_vec).collect()
}

/// Which optimizer to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Prosrs,
    Random,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Prosrs => "prosrs",
            Algorithm::Random => "random",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prosrs" => Ok(Algorithm::Prosrs),
            "random" => Ok(Algorithm::Random),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}, expected prosrs or random"))),
        }
    }
}

/// A run that stopped on an error, with whatever was logged before it.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    /// `None` when the run failed before any evaluation.
    pub partial: Option<Box<RunResult>>,
}

impl From<Aborted> for Error {
    fn from(a: Aborted) -> Self {
        a.error
    }
}

/// Runs `algorithm`, keeping the partial log if an evaluation fails.
pub fn run_algorithm(
    algorithm: Algorithm,
    objective: &dyn Objective,
    config: &RunConfig,
    evaluator: &dyn Evaluator,
    options: EngineOptions,
) -> std::result::Result<RunResult, Aborted> {
    let setup = |error| Aborted { error, partial: None };
    match algorithm {
        Algorithm::Prosrs => {
            let mut driver = Driver::new(objective, config, evaluator, options).map_err(setup)?;
            let steps = driver
                .initial_design()
                .and_then(|()| (1..=config.n_iterations).try_for_each(|iteration| driver.step(iteration)));
            match steps {
                Ok(()) => Ok(driver.finish()),
                Err(error) => Err(Aborted { error, partial: Some(Box::new(driver.finish())) }),
            }
        }
        Algorithm::Random => {
            check_setup(objective, config).map_err(setup)?;
            let domain = objective.domain();
            let mut rng = stream_rng(config.seed, Stream::RandomSearch);
            let mut ledger = Ledger::new(objective, evaluator, config.seed, options);
            let tree = ZoomTree::new(domain.clone(), EvalDataset::new(), config);
            for iteration in 1..=config.n_iterations {
                let start = Instant::now();
                let batch: Vec<Vec<f64>> = (0..config.n_par).map(|_| domain.sample_uniform(&mut rng)).collect();
                let (values, eval) = match ledger.evaluate(&batch) {
                    Ok(v) => v,
                    Err(error) => return Err(Aborted { error, partial: Some(Box::new(ledger.finish(config, 0, 0))) }),
                };
                let mut e = entry(iteration, IterationEvent::Normal, &tree, config.s_init);
                e.proposed = batch;
                e.values = values;
                ledger.log(e, start.elapsed(), eval);
            }
            Ok(ledger.finish(config, 0, 0))
        }
    }
}

/// Runs the surrogate optimizer with timing recorded.
pub fn run_prosrs(objective: &dyn Objective, config: &RunConfig, evaluator: &dyn Evaluator) -> Result<RunResult> {
    run_prosrs_with(objective, config, evaluator, EngineOptions::default())
}

/// Runs the surrogate optimizer.
///
/// Initial-design batches are logged with iteration 0. Each of the
/// `n_iterations` slots afterwards either evaluates a batch of a post-restart
/// design or performs one fit / propose / evaluate / update cycle.
pub fn run_prosrs_with(
    objective: &dyn Objective,
    config: &RunConfig,
    evaluator: &dyn Evaluator,
    options: EngineOptions,
) -> Result<RunResult> {
    Ok(run_algorithm(Algorithm::Prosrs, objective, config, evaluator, options)?)
}

/// Mutable state of one optimizer run.
struct Driver<'a> {
    config: &'a RunConfig,
    domain: BoxDomain,
    ledger: Ledger<'a>,
    archive: EvalDataset,
    tree: ZoomTree,
    pending: VecDeque<Vec<Vec<f64>>>,
    doe_rng: StreamRng,
    cand_rng: StreamRng,
    zoom_rng: StreamRng,
    n_fits: u64,
    proposal_round: usize,
    n_restarts: usize,
    max_zoom_level: usize,
}

impl<'a> Driver<'a> {
    fn new(
        objective: &'a dyn Objective,
        config: &'a RunConfig,
        evaluator: &'a dyn Evaluator,
        options: EngineOptions,
    ) -> Result<Self> {
        check_setup(objective, config)?;
        let domain = objective.domain().clone();
        let seed = config.seed;
        let mut doe_rng = stream_rng(seed, Stream::Doe);
        let pending = design_batches(config, &domain, &mut doe_rng);
        Ok(Self {
            config,
            tree: ZoomTree::new(domain.clone(), EvalDataset::new(), config),
            domain,
            ledger: Ledger::new(objective, evaluator, seed, options),
            archive: EvalDataset::new(),
            pending,
            doe_rng,
            cand_rng: stream_rng(seed, Stream::Candidates),
            zoom_rng: stream_rng(seed, Stream::ZoomOut),
            n_fits: 0,
            proposal_round: 0,
            n_restarts: 0,
            max_zoom_level: 0,
        })
    }

    fn initial_design(&mut self) -> Result<()> {
        while let Some(batch) = self.pending.pop_front() {
            self.design_batch(0, batch, Instant::now())?;
        }
        Ok(())
    }

    fn design_batch(&mut self, iteration: usize, batch: Vec<Vec<f64>>, start: Instant) -> Result<()> {
        let (values, eval) = self.ledger.evaluate(&batch)?;
        self.record(&batch, &values)?;
        let mut e = entry(iteration, IterationEvent::Doe, &self.tree, self.tree.current().state);
        e.proposed = batch;
        e.values = values;
        self.ledger.log(e, start.elapsed(), eval);
        Ok(())
    }

    fn record(&mut self, batch: &[Vec<f64>], values: &[f64]) -> Result<()> {
        for (x, y) in batch.iter().zip(values) {
            self.archive.push(x.clone(), *y)?;
            self.tree.current_mut().data.push(x.clone(), *y)?;
        }
        Ok(())
    }

    fn fit_current(&mut self) -> Result<RbfSurrogate> {
        self.n_fits += 1;
        let cv = CvConfig {
            folds: self.config.cv_folds,
            lambda_grid: self.config.lambda_grid.clone(),
            seed: derive_seed(self.config.seed, Stream::CrossValidation, self.n_fits),
        };
        let node = self.tree.current();
        node_surrogate(&node.data, &node.omega, node.state.gamma, &cv)
    }

    fn step(&mut self, iteration: usize) -> Result<()> {
        let start = Instant::now();
        if let Some(batch) = self.pending.pop_front() {
            return self.design_batch(iteration, batch, start);
        }
        let config = self.config;

        let model = self.fit_current()?;
        let node = self.tree.current();
        let candidates = generate_candidates(
            &node.data,
            &node.omega,
            &node.state,
            &model,
            config.candidates_for(self.domain.dim()),
            &mut self.cand_rng,
        )?;
        let pattern = weight_pattern(config.n_par, self.proposal_round);
        self.proposal_round += 1;
        let batch = select_batch(&candidates, &model, node.data.points(), &pattern)?;
        let prior_best = node.data.min_value().unwrap_or(f64::INFINITY);

        let (values, eval) = self.ledger.evaluate(&batch)?;
        self.record(&batch, &values)?;
        let failed = is_failure(&values, prior_best);
        let node = self.tree.current_mut();
        let n_eff = effective_n(&node.data, &node.omega);
        update_state(node, n_eff, failed, config);
        let state_after = node.state;

        let mut event = IterationEvent::Normal;
        let mut restarted = false;
        if state_after.sigma < config.sigma_crit {
            let refit = self.fit_current()?;
            let node = self.tree.current();
            let x_star = node.data.points()[surrogate_argmin(&node.data, &refit)?].clone();
            let plan = self.tree.plan_zoom_in(&x_star, &self.archive, config)?;
            if plan.triggers_restart(&self.domain, config) {
                restarted = true;
                self.n_restarts += 1;
                event = IterationEvent::Restart;
                self.archive = EvalDataset::new();
                self.tree = ZoomTree::new(self.domain.clone(), EvalDataset::new(), config);
                self.pending = design_batches(config, &self.domain, &mut self.doe_rng);
            } else {
                self.tree.commit_zoom_in(plan, config);
                self.max_zoom_level = self.max_zoom_level.max(self.tree.current().zoom_level);
                event = IterationEvent::ZoomIn;
            }
        }
        if !restarted && self.tree.maybe_zoom_out(&self.archive, &mut self.zoom_rng) {
            event = IterationEvent::ZoomOut;
        }

        let mut e = entry(iteration, event, &self.tree, state_after);
        e.proposed = batch;
        e.values = values;
        self.ledger.log(e, start.elapsed(), eval);
        Ok(())
    }

    fn finish(self) -> RunResult {
        self.ledger.finish(self.config, self.n_restarts, self.max_zoom_level)
    }
}

/// Surrogate for a node. A node holding a single record gets a flat model
/// over that record, so proposals are driven by distance alone.
fn node_surrogate(data: &EvalDataset, omega: &BoxDomain, gamma: f64, cv: &CvConfig) -> Result<RbfSurrogate> {
    if data.len() == 1 {
        let center = omega.to_unit(&data.points()[0]);
        return RbfSurrogate::from_parts(vec![center], vec![0.0], gamma, 0.0, omega.clone());
    }
    fit_rbf(data, omega, gamma, cv)
}

/// Uniform random search: `n_par` uniform points per iteration, no design.
pub fn run_random_search(
    objective: &dyn Objective,
    config: &RunConfig,
    evaluator: &dyn Evaluator,
) -> Result<RunResult> {
    run_random_search_with(objective, config, evaluator, EngineOptions::default())
}

pub fn run_random_search_with(
    objective: &dyn Objective,
    config: &RunConfig,
    evaluator: &dyn Evaluator,
    options: EngineOptions,
) -> Result<RunResult> {
    Ok(run_algorithm(Algorithm::Random, objective, config, evaluator, options)?)
}
