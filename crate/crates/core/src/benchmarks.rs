//! The noisy benchmark suite: twelve standard test functions, each with a
//! fixed box domain and additive Gaussian noise.

use std::f64::consts::{E, PI};

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::{BoxDomain, Objective};

/// Names accepted by [`make_benchmark`], in suite order.
pub const BENCHMARK_NAMES: [&str; 12] = [
    "Ackley10",
    "Alpine10",
    "Griewank10",
    "Levy10",
    "SumPower10",
    "SixHumpCamel2",
    "Schaffer2",
    "Dropwave2",
    "GoldsteinPrice2",
    "Rastrigin2",
    "Hartmann6",
    "PowerSum4",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TestFunction {
    Ackley,
    /// `sum |x_i sin x_i + 0.1 x_i|`.
    Alpine1,
    Griewank,
    Levy,
    /// `sum |x_i|^(i+1)` with 1-based `i`.
    SumPower,
    SixHumpCamel,
    SchafferN2,
    Dropwave,
    GoldsteinPrice,
    Rastrigin,
    Hartmann6,
    /// Powell's power sum with `b = (8, 18, 44, 114)`.
    PowerSum,
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const POWER_SUM_B: [f64; 4] = [8.0, 18.0, 44.0, 114.0];

impl TestFunction {
    pub fn value(self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self {
            TestFunction::Ackley => {
                let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
                let cs = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / d;
                -20.0 * (-0.2 * sq.sqrt()).exp() - cs.exp() + 20.0 + E
            }
            TestFunction::Alpine1 => x.iter().map(|v| (v * v.sin() + 0.1 * v).abs()).sum(),
            TestFunction::Griewank => {
                let s = x.iter().map(|v| v * v).sum::<f64>() / 4000.0;
                let p: f64 = x.iter().enumerate().map(|(i, v)| (v / ((i + 1) as f64).sqrt()).cos()).product();
                s - p + 1.0
            }
            TestFunction::Levy => {
                let w: Vec<f64> = x.iter().map(|v| 1.0 + (v - 1.0) / 4.0).collect();
                let n = w.len();
                let head = (PI * w[0]).sin().powi(2);
                let mid: f64 =
                    w[..n - 1].iter().map(|wi| (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))).sum();
                let wd = w[n - 1];
                let tail = (wd - 1.0).powi(2) * (1.0 + (2.0 * PI * wd).sin().powi(2));
                head + mid + tail
            }
            TestFunction::SumPower => x.iter().enumerate().map(|(i, v)| v.abs().powi(i as i32 + 2)).sum(),
            TestFunction::SixHumpCamel => {
                let (a, b) = (x[0], x[1]);
                (4.0 - 2.1 * a * a + a.powi(4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b
            }
            TestFunction::SchafferN2 => {
                let (a, b) = (x[0] * x[0], x[1] * x[1]);
                0.5 + ((a - b).sin().powi(2) - 0.5) / (1.0 + 0.001 * (a + b)).powi(2)
            }
            TestFunction::Dropwave => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                -(1.0 + (12.0 * r2.sqrt()).cos()) / (0.5 * r2 + 2.0)
            }
            TestFunction::GoldsteinPrice => {
                let (a, b) = (x[0], x[1]);
                let t1 = 1.0
                    + (a + b + 1.0).powi(2) * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
                let t2 = 30.0
                    + (2.0 * a - 3.0 * b).powi(2)
                        * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b);
                t1 * t2
            }
            TestFunction::Rastrigin => 10.0 * d + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>(),
            TestFunction::Hartmann6 => -(0..4)
                .map(|k| {
                    let inner: f64 = (0..6).map(|j| HARTMANN_A[k][j] * (x[j] - HARTMANN_P[k][j]).powi(2)).sum();
                    HARTMANN_ALPHA[k] * (-inner).exp()
                })
                .sum::<f64>(),
            TestFunction::PowerSum => POWER_SUM_B
                .iter()
                .enumerate()
                .map(|(k, b)| (x.iter().map(|v| v.powi(k as i32 + 1)).sum::<f64>() - b).powi(2))
                .sum(),
        }
    }
}

/// A test function on its domain with additive Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchmarkProblem {
    pub name: String,
    pub function: TestFunction,
    pub domain: BoxDomain,
    pub noise_std: f64,
    pub known_min_value: Option<f64>,
    pub known_minimizer: Option<Vec<f64>>,
}

impl BenchmarkProblem {
    pub fn dimension(&self) -> usize {
        self.domain.dim()
    }

    /// The noiseless function value.
    pub fn true_value(&self, x: &[f64]) -> f64 {
        self.function.value(x)
    }

    /// `true_value(x) + noise_std * z` with `z` drawn from `rng`.
    pub fn noisy_eval(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        self.domain.check_dim(x)?;
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain { x: x.to_vec() });
        }
        let z: f64 = StandardNormal.sample(rng);
        Ok(self.true_value(x) + self.noise_std * z)
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }
}

impl Objective for BenchmarkProblem {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        self.noisy_eval(x, rng)
    }

    fn true_mean(&self, x: &[f64]) -> Option<f64> {
        Some(self.true_value(x))
    }
}

fn cube(d: usize, lo: f64, hi: f64) -> BoxDomain {
    BoxDomain::cube(d, lo, hi).expect("valid benchmark domain")
}

/// Looks up a suite problem by name. `Goldstein-Price2` is accepted as an
/// alias of `GoldsteinPrice2`.
pub fn make_benchmark(name: &str) -> Result<BenchmarkProblem> {
    use TestFunction as F;
    let (function, domain, noise_std, min, minimizer): (_, _, _, f64, Option<Vec<f64>>) = match name {
        "Ackley10" => (F::Ackley, cube(10, -32.768, 32.768), 1.0, 0.0, Some(vec![0.0; 10])),
        "Alpine10" => (F::Alpine1, cube(10, -10.0, 10.0), 1.0, 0.0, None),
        "Griewank10" => (F::Griewank, cube(10, -600.0, 600.0), 2.0, 0.0, Some(vec![0.0; 10])),
        "Levy10" => (F::Levy, cube(10, -10.0, 10.0), 1.0, 0.0, Some(vec![1.0; 10])),
        "SumPower10" => (F::SumPower, cube(10, -1.0, 1.0), 0.05, 0.0, Some(vec![0.0; 10])),
        "SixHumpCamel2" => (
            F::SixHumpCamel,
            BoxDomain::new(vec![-3.0, -2.0], vec![3.0, 2.0]).expect("valid benchmark domain"),
            0.1,
            -1.031_628_453_489_877_4,
            None,
        ),
        "Schaffer2" => (F::SchafferN2, cube(2, -100.0, 100.0), 0.02, 0.0, Some(vec![0.0; 2])),
        "Dropwave2" => (F::Dropwave, cube(2, -5.12, 5.12), 0.02, -1.0, Some(vec![0.0; 2])),
        "GoldsteinPrice2" | "Goldstein-Price2" => {
            (F::GoldsteinPrice, cube(2, -2.0, 2.0), 2.0, 3.0, Some(vec![0.0, -1.0]))
        }
        "Rastrigin2" => (F::Rastrigin, cube(2, -5.12, 5.12), 0.5, 0.0, Some(vec![0.0; 2])),
        "Hartmann6" => (
            F::Hartmann6,
            cube(6, 0.0, 1.0),
            0.05,
            -3.322_368_011_415_515,
            Some(vec![0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573]),
        ),
        "PowerSum4" => (F::PowerSum, cube(4, 0.0, 4.0), 1.0, 0.0, None),
        other => return Err(Error::UnknownBenchmark { name: other.to_string(), valid: BENCHMARK_NAMES.join(", ") }),
    };
    let canonical = if name == "Goldstein-Price2" { "GoldsteinPrice2" } else { name };
    Ok(BenchmarkProblem {
        name: canonical.to_string(),
        function,
        domain,
        noise_std,
        known_min_value: Some(min),
        known_minimizer: minimizer,
    })
}

/// Every suite problem in [`BENCHMARK_NAMES`] order.
pub fn all_benchmarks() -> Vec<BenchmarkProblem> {
    BENCHMARK_NAMES.iter().map(|n| make_benchmark(n).expect("suite name")).collect()
}
