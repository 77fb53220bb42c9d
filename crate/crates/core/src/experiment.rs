//! Experiment drivers behind the command-line tool: repeated optimization
//! runs with CSV/JSON output, the surrogate regression study and per-iteration
//! cost profiles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks::{make_benchmark, BenchmarkProblem};
use crate::doe::latin_hypercube_maximin;
use crate::engine::{run_algorithm, Aborted, Algorithm, EngineOptions, IterationLog, RunResult, SerialEvaluator};
use crate::error::{Error, Result};
use crate::problem::{default_config, EvalDataset, Objective, RunConfig, DEFAULT_LHS_RESTARTS};
use crate::rng::{derive_seed, item_rng, stream_rng, Stream};
use crate::surrogate::{fit_rbf, relative_l2_error, CvConfig};
use crate::zoomtree::ExploitState;

/// Partial [`RunConfig`]; unset fields keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub n_par: Option<usize>,
    pub n_iterations: Option<usize>,
    pub m_doe: Option<usize>,
    pub s_init: Option<StatePatch>,
    pub sigma_crit: Option<f64>,
    pub beta_init: Option<f64>,
    pub beta_min: Option<f64>,
    pub rho: Option<f64>,
    pub r_resolution: Option<f64>,
    pub c_fail: Option<usize>,
    pub delta_gamma: Option<f64>,
    pub n_candidates_per_dim: Option<usize>,
    pub seed: Option<u64>,
    pub lhs_restarts: Option<usize>,
    pub cv_folds: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatePatch {
    pub gamma: Option<f64>,
    pub p: Option<f64>,
    pub sigma: Option<f64>,
}

impl ConfigPatch {
    /// Fields set in `other` win.
    pub fn merged(mut self, other: &ConfigPatch) -> ConfigPatch {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            n_par,
            n_iterations,
            m_doe,
            sigma_crit,
            beta_init,
            beta_min,
            rho,
            r_resolution,
            c_fail,
            delta_gamma,
            n_candidates_per_dim,
            seed,
            lhs_restarts,
            cv_folds,
            lambda_grid
        );
        if let Some(o) = &other.s_init {
            let mut s = self.s_init.unwrap_or_default();
            s.gamma = o.gamma.or(s.gamma);
            s.p = o.p.or(s.p);
            s.sigma = o.sigma.or(s.sigma);
            self.s_init = Some(s);
        }
        self
    }

    /// Defaults for dimension `d` with this patch applied, validated.
    pub fn resolve(&self, d: usize) -> Result<RunConfig> {
        let mut c = default_config(d, self.n_par.unwrap_or(1));
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(
            n_iterations,
            m_doe,
            sigma_crit,
            beta_init,
            beta_min,
            rho,
            r_resolution,
            c_fail,
            delta_gamma,
            n_candidates_per_dim,
            seed,
            lhs_restarts,
            cv_folds,
            lambda_grid
        );
        if let Some(s) = &self.s_init {
            c.s_init = ExploitState {
                gamma: s.gamma.unwrap_or(c.s_init.gamma),
                p: s.p.unwrap_or(c.s_init.p),
                sigma: s.sigma.unwrap_or(c.s_init.sigma),
            };
        }
        c.validate()?;
        Ok(c)
    }
}

/// A batch of repeated runs over one or more benchmark problems.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeSpec {
    pub problems: Vec<String>,
    pub algorithm: Algorithm,
    pub patch: ConfigPatch,
    pub n_repeats: usize,
    pub out_dir: PathBuf,
    /// Zero all timing fields so output files are reproducible.
    pub deterministic: bool,
}

impl OptimizeSpec {
    fn validate(&self) -> Result<Vec<BenchmarkProblem>> {
        if self.n_repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.problems.is_empty() {
            return Err(Error::InvalidConfig("no problem selected".into()));
        }
        let problems = self.problems.iter().map(|n| make_benchmark(n)).collect::<Result<Vec<_>>>()?;
        for p in &problems {
            self.patch.resolve(p.dimension())?;
        }
        Ok(problems)
    }

    fn base_seed(&self) -> u64 {
        self.patch.seed.unwrap_or(0)
    }
}

/// Outcome of one repeat as written to the summary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub algorithm: Algorithm,
    pub repeat: usize,
    pub seed: u64,
    pub x_best: Vec<f64>,
    pub y_best: f64,
    pub true_f_at_x_best: Option<f64>,
    pub n_evaluations: usize,
    pub n_restarts: usize,
    pub max_zoom_level: usize,
    pub config: RunConfig,
}

/// The value tracked per log row: true mean at the incumbent when known,
/// otherwise the best noisy value.
fn tracked_value(objective: &dyn Objective, log: &IterationLog) -> f64 {
    objective.true_mean(&log.best_x).unwrap_or(log.best_y)
}

fn tracked_column(objective: &dyn Objective) -> &'static str {
    let probe = objective.domain().center();
    if objective.true_mean(&probe).is_some() {
        "true_f_best"
    } else {
        "best_noisy_y"
    }
}

pub const RUN_LOG_COLUMNS: [&str; 7] =
    ["iteration", "event", "zoom_level", "best_y", "true_f_best", "algo_time_s", "eval_time_s"];

/// Writes one row per log entry.
pub fn write_run_log(path: &Path, objective: &dyn Objective, logs: &[IterationLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = RUN_LOG_COLUMNS;
    header[4] = tracked_column(objective);
    w.write_record(header)?;
    for log in logs {
        w.write_record([
            log.iteration.to_string(),
            log.event.as_str().to_string(),
            log.zoom_level.to_string(),
            log.best_y.to_string(),
            tracked_value(objective, log).to_string(),
            log.algo_time_s.to_string(),
            log.eval_time_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Last tracked value of every iteration index, in order.
pub fn curve(objective: &dyn Objective, logs: &[IterationLog]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for log in logs {
        let v = tracked_value(objective, log);
        match out.last_mut() {
            Some(last) if last.0 == log.iteration => last.1 = v,
            _ => out.push((log.iteration, v)),
        }
    }
    out
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Writes `iteration,mean,std,n_runs` over the runs' curves.
pub fn write_aggregate_curve(path: &Path, curves: &[Vec<(usize, f64)>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "mean", "std", "n_runs"])?;
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    for k in 0..len {
        let values: Vec<f64> = curves.iter().map(|c| c[k].1).collect();
        let (mean, std) = mean_std(&values);
        w.write_record([curves[0][k].0.to_string(), mean.to_string(), std.to_string(), values.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn run_file_stem(algorithm: Algorithm, repeat: usize) -> String {
    format!("{}_run{repeat:03}", algorithm.as_str())
}

/// Paths written by [`optimize`] for one problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemOutput {
    pub problem: String,
    pub run_logs: Vec<PathBuf>,
    pub summaries: Vec<RunSummary>,
    pub curve: PathBuf,
}

/// Runs every repeat of every problem. Repeat `i` uses seed `base + i`.
///
/// Files per problem go to `out_dir/<problem>/`: `<algo>_runNNN.csv`,
/// `<algo>_runNNN_summary.json` and `<algo>_curve.csv`. When a run fails its
/// partial log is still written before the error is returned.
pub fn optimize(spec: &OptimizeSpec) -> Result<Vec<ProblemOutput>> {
    let problems = spec.validate()?;
    let options = EngineOptions { record_timing: !spec.deterministic };
    let mut outputs = Vec::new();
    for problem in &problems {
        let dir = spec.out_dir.join(&problem.name);
        fs::create_dir_all(&dir)?;
        let mut run_logs = Vec::new();
        let mut summaries = Vec::new();
        let mut curves = Vec::new();
        for repeat in 0..spec.n_repeats {
            let seed = spec.base_seed() + repeat as u64;
            let config = spec.patch.resolve(problem.dimension()).map(|mut c| {
                c.seed = seed;
                c
            })?;
            let stem = run_file_stem(spec.algorithm, repeat);
            let log_path = dir.join(format!("{stem}.csv"));
            let result = match run_algorithm(spec.algorithm, problem, &config, &SerialEvaluator, options) {
                Ok(r) => r,
                Err(Aborted { error, partial }) => {
                    if let Some(partial) = partial {
                        write_run_log(&log_path, problem, &partial.logs)?;
                    }
                    return Err(error);
                }
            };
            write_run_log(&log_path, problem, &result.logs)?;
            let summary = summarize(problem, spec.algorithm, repeat, &result);
            write_json(&dir.join(format!("{stem}_summary.json")), &summary)?;
            curves.push(curve(problem, &result.logs));
            run_logs.push(log_path);
            summaries.push(summary);
        }
        let curve_path = dir.join(format!("{}_curve.csv", spec.algorithm.as_str()));
        write_aggregate_curve(&curve_path, &curves)?;
        outputs.push(ProblemOutput { problem: problem.name.clone(), run_logs, summaries, curve: curve_path });
    }
    Ok(outputs)
}

fn summarize(problem: &BenchmarkProblem, algorithm: Algorithm, repeat: usize, r: &RunResult) -> RunSummary {
    RunSummary {
        problem: problem.name.clone(),
        algorithm,
        repeat,
        seed: r.config.seed,
        x_best: r.x_best.clone(),
        y_best: r.y_best,
        true_f_at_x_best: (!r.x_best.is_empty()).then(|| problem.true_value(&r.x_best)),
        n_evaluations: r.n_evaluations,
        n_restarts: r.n_restarts,
        max_zoom_level: r.max_zoom_level,
        config: r.config.clone(),
    }
}

/// [`optimize`] over the selected problems, plus `suite_summary.csv` with one
/// row per problem and repeat.
pub fn bench_suite(spec: &OptimizeSpec) -> Result<Vec<ProblemOutput>> {
    let outputs = optimize(spec)?;
    let mut w = csv::Writer::from_path(spec.out_dir.join("suite_summary.csv"))?;
    w.write_record([
        "problem",
        "algorithm",
        "repeat",
        "seed",
        "y_best",
        "true_f_best",
        "n_evaluations",
        "n_restarts",
        "max_zoom_level",
    ])?;
    for s in outputs.iter().flat_map(|o| &o.summaries) {
        w.write_record([
            s.problem.clone(),
            s.algorithm.as_str().to_string(),
            s.repeat.to_string(),
            s.seed.to_string(),
            s.y_best.to_string(),
            s.true_f_at_x_best.map_or_else(String::new, |v| v.to_string()),
            s.n_evaluations.to_string(),
            s.n_restarts.to_string(),
            s.max_zoom_level.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(outputs)
}

/// Relative L2 error of one fitted surrogate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelErrorSample {
    pub problem: String,
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub rel_error: f64,
}

/// Fits an unweighted surrogate on `n` noisy Latin hypercube samples and
/// measures its relative L2 error against the true mean by Monte Carlo.
pub fn model_error_sample(objective: &dyn Objective, n: usize, n_mc: usize, seed: u64) -> Result<f64> {
    let domain = objective.domain();
    let probe = domain.center();
    if objective.true_mean(&probe).is_none() {
        return Err(Error::InvalidConfig(format!("{} has no true mean to compare against", objective.name())));
    }
    if n_mc == 0 {
        return Err(Error::InvalidConfig("n_mc must be positive".into()));
    }
    let design = latin_hypercube_maximin(n, domain, DEFAULT_LHS_RESTARTS, &mut stream_rng(seed, Stream::Doe));
    let mut data = EvalDataset::new();
    for (i, x) in design.points.into_iter().enumerate() {
        let y = objective.evaluate(&x, &mut item_rng(seed, Stream::Noise, i as u64))?;
        data.push(x, y)?;
    }
    let cv = CvConfig { seed: derive_seed(seed, Stream::CrossValidation, 0), ..CvConfig::default() };
    let model = fit_rbf(&data, domain, 0.0, &cv)?;
    let truth = |x: &[f64]| objective.true_mean(x).expect("checked above");
    let fitted = |x: &[f64]| model.predict_unit(&domain.to_unit(x));
    relative_l2_error(fitted, truth, domain, n_mc, &mut stream_rng(seed, Stream::MonteCarlo))
}

/// Every (problem, n, repeat) sample; repeat `i` uses seed `base_seed + i`.
pub fn model_error_study(
    problems: &[BenchmarkProblem],
    n_values: &[usize],
    n_repeats: usize,
    base_seed: u64,
    n_mc: usize,
) -> Result<Vec<ModelErrorSample>> {
    if n_repeats == 0 || n_values.is_empty() {
        return Err(Error::InvalidConfig("model-error needs repeats >= 1 and at least one n".into()));
    }
    let mut out = Vec::new();
    for p in problems {
        for &n in n_values {
            for repeat in 0..n_repeats {
                let seed = base_seed + repeat as u64;
                let rel_error = model_error_sample(p, n, n_mc, seed)?;
                out.push(ModelErrorSample { problem: p.name.clone(), n, repeat, seed, rel_error });
            }
        }
    }
    Ok(out)
}

/// Writes `model_error.csv` (mean and std per problem and n) and
/// `model_error_repeats.csv` (every sample).
pub fn write_model_error(out_dir: &Path, samples: &[ModelErrorSample]) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("model_error_repeats.csv"))?;
    w.write_record(["problem", "n", "repeat", "seed", "rel_error"])?;
    for s in samples {
        w.write_record([
            s.problem.clone(),
            s.n.to_string(),
            s.repeat.to_string(),
            s.seed.to_string(),
            s.rel_error.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join("model_error.csv"))?;
    w.write_record(["problem", "n", "mean", "std", "n_repeats"])?;
    let mut i = 0;
    while i < samples.len() {
        let (problem, n) = (&samples[i].problem, samples[i].n);
        let cell: Vec<f64> =
            samples[i..].iter().take_while(|s| &s.problem == problem && s.n == n).map(|s| s.rel_error).collect();
        let (mean, std) = mean_std(&cell);
        w.write_record([problem.clone(), n.to_string(), mean.to_string(), std.to_string(), cell.len().to_string()])?;
        i += cell.len();
    }
    w.flush()?;
    Ok(())
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) })
}

/// Median algorithm time over the final 50 iterations divided by the median
/// over iterations 20 to 70. Initial-design rows are ignored.
pub fn cost_ratio(logs: &[IterationLog]) -> Option<f64> {
    let rows: Vec<&IterationLog> = logs.iter().filter(|l| l.iteration > 0).collect();
    let mut early: Vec<f64> = rows.iter().filter(|l| (20..=70).contains(&l.iteration)).map(|l| l.algo_time_s).collect();
    let mut late: Vec<f64> = rows[rows.len().saturating_sub(50)..].iter().map(|l| l.algo_time_s).collect();
    let (e, l) = (median(&mut early)?, median(&mut late)?);
    (e > 0.0).then(|| l / e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostProfile {
    pub problem: String,
    pub seed: u64,
    pub n_iterations: usize,
    pub late_to_early_median_ratio: Option<f64>,
}

/// Runs the optimizer on each problem with timing on and writes
/// `<problem>_cost.csv` (one row per iteration) and `cost_summary.json`.
pub fn cost_profile(spec: &OptimizeSpec) -> Result<Vec<CostProfile>> {
    let problems = spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let options = EngineOptions { record_timing: !spec.deterministic };
    let mut profiles = Vec::new();
    for problem in &problems {
        let config = spec.patch.resolve(problem.dimension())?;
        let path = spec.out_dir.join(format!("{}_cost.csv", problem.name));
        let (logs, failure) = match run_algorithm(spec.algorithm, problem, &config, &SerialEvaluator, options) {
            Ok(r) => (r.logs, None),
            Err(Aborted { error, partial }) => (partial.map(|p| p.logs).unwrap_or_default(), Some(error)),
        };
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["iteration", "event", "algo_time_s", "eval_time_s"])?;
        for l in logs.iter().filter(|l| l.iteration > 0) {
            w.write_record([
                l.iteration.to_string(),
                l.event.as_str().to_string(),
                l.algo_time_s.to_string(),
                l.eval_time_s.to_string(),
            ])?;
        }
        w.flush()?;
        if let Some(error) = failure {
            return Err(error);
        }
        profiles.push(CostProfile {
            problem: problem.name.clone(),
            seed: config.seed,
            n_iterations: config.n_iterations,
            late_to_early_median_ratio: cost_ratio(&logs),
        });
    }
    write_json(&spec.out_dir.join("cost_summary.json"), &profiles)?;
    Ok(profiles)
}
