use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prosrs::benchmarks::{make_benchmark, BENCHMARK_NAMES};
use prosrs::engine::Algorithm;
use prosrs::experiment::{
    bench_suite, cost_profile, model_error_study, optimize, write_model_error, ConfigPatch, OptimizeSpec,
};
use prosrs::Error;

#[derive(Parser, Debug)]
#[command(name = "prosrs", version, about = "Parallel surrogate optimization on noisy benchmark problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Repeated optimization runs on the selected problems.
    Optimize(RunArgs),
    /// Optimization runs over the benchmark suite with a suite summary.
    BenchSuite(RunArgs),
    /// Relative L2 error of unweighted surrogates against the true function.
    ModelError(ModelErrorArgs),
    /// Per-iteration algorithm time of a single run.
    CostProfile(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Comma-separated benchmark names.
    #[arg(long, value_delimiter = ',')]
    problem: Vec<String>,
    #[arg(long)]
    n_par: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Base seed; repeat i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "prosrs")]
    algo: Algorithm,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// TOML file with run configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write zero timing so outputs are byte-reproducible.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args, Debug)]
struct ModelErrorArgs {
    #[arg(long, value_delimiter = ',')]
    problem: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80,90,100")]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    n_mc: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn read_patch(path: &Path) -> Result<ConfigPatch, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

fn all_or(problems: Vec<String>) -> Vec<String> {
    if problems.is_empty() {
        BENCHMARK_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        problems
    }
}

impl RunArgs {
    fn into_spec(self, default_problems: bool, default_iterations: Option<usize>) -> Result<OptimizeSpec, Error> {
        let file = match &self.config {
            Some(path) => read_patch(path)?,
            None => ConfigPatch::default(),
        };
        let flags = ConfigPatch {
            n_par: self.n_par,
            n_iterations: self.iterations.or(default_iterations.filter(|_| file.n_iterations.is_none())),
            seed: self.seed,
            ..ConfigPatch::default()
        };
        let problems = if default_problems { all_or(self.problem) } else { self.problem };
        if problems.is_empty() {
            return Err(Error::InvalidConfig("--problem is required".into()));
        }
        Ok(OptimizeSpec {
            problems,
            algorithm: self.algo,
            patch: file.merged(&flags),
            n_repeats: self.repeats,
            out_dir: self.out,
            deterministic: self.deterministic,
        })
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Optimize(args) => {
            let spec = args.into_spec(false, None)?;
            for out in optimize(&spec)? {
                let best = out.summaries.iter().filter_map(|s| s.true_f_at_x_best).fold(f64::INFINITY, f64::min);
                println!(
                    "{}: {} runs, best true F {best}, curve {}",
                    out.problem,
                    out.summaries.len(),
                    out.curve.display()
                );
            }
        }
        Command::BenchSuite(args) => {
            let spec = args.into_spec(true, None)?;
            let outputs = bench_suite(&spec)?;
            println!("{} problems written to {}", outputs.len(), spec.out_dir.display());
        }
        Command::CostProfile(args) => {
            if args.repeats != 1 {
                return Err(Error::InvalidConfig("cost-profile runs a single repeat".into()));
            }
            let spec = args.into_spec(false, Some(200))?;
            for p in cost_profile(&spec)? {
                match p.late_to_early_median_ratio {
                    Some(r) => println!("{}: late/early median algorithm time ratio {r}", p.problem),
                    None => println!("{}: too few iterations for the ratio", p.problem),
                }
            }
        }
        Command::ModelError(args) => {
            let problems = all_or(args.problem).iter().map(|n| make_benchmark(n)).collect::<Result<Vec<_>, _>>()?;
            let samples = model_error_study(&problems, &args.n_values, args.repeats, args.seed, args.n_mc)?;
            write_model_error(&args.out, &samples)?;
            println!("{} samples written to {}", samples.len(), args.out.display());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_evaluator_failure() {
        3
    } else if matches!(e, Error::Io(_) | Error::Csv(_) | Error::Json(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
