//! Problem definitions: box domains, evaluation data, run configuration and
//! the objective abstraction.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zoomtree::ExploitState;

/// Axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("domain must have at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::InvalidDomain(format!(
                "bound lengths differ: {} lower vs {} upper",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!(
                    "dimension {i}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` in each of `d` dimensions.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side_length(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() })
        }
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    /// True when `other` lies inside `self` in every dimension.
    pub fn contains_domain(&self, other: &BoxDomain) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Maps a point to the unit cube. No dimension check.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(i, v)| (v - self.lower[i]) / self.side_length(i)).collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, v)| self.lower[i] + v * self.side_length(i)).collect()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| rng.random_range(*lo..*hi)).collect()
    }

    /// Clamps `x` into the box without a dimension check.
    pub(crate) fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Componentwise clamp of `x` to the domain, i.e. the nearest domain point.
pub fn clip_to_domain(x: &[f64], domain: &BoxDomain) -> Result<Vec<f64>> {
    domain.check_dim(x)?;
    let mut out = x.to_vec();
    domain.clamp(&mut out);
    Ok(out)
}

/// Ordered evaluation records `(x, y)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalDataset {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl EvalDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InvalidConfig(format!("{} points but {} values", xs.len(), ys.len())));
        }
        let mut data = Self::new();
        for (x, y) in xs.into_iter().zip(ys) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some(d) = self.dim() {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
        }
        if !y.is_finite() {
            return Err(Error::NonFiniteValue { x, value: y });
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.xs.first().map(Vec::len)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.xs.iter().map(Vec::as_slice).zip(self.ys.iter().copied())
    }

    /// Index of the smallest y, lowest index on ties.
    pub fn argmin(&self) -> Option<usize> {
        argmin(&self.ys)
    }

    pub fn min_value(&self) -> Option<f64> {
        self.argmin().map(|i| self.ys[i])
    }

    /// Records lying inside `domain`, in original order.
    pub fn restricted_to(&self, domain: &BoxDomain) -> EvalDataset {
        let (xs, ys) = self.iter().filter(|(x, _)| domain.contains(x)).map(|(x, y)| (x.to_vec(), y)).unzip();
        EvalDataset { xs, ys }
    }
}

/// Index of the smallest finite-compared value; lowest index on ties.
pub(crate) fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] <= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Parameters of a single optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_par: usize,
    pub n_iterations: usize,
    pub m_doe: usize,
    pub s_init: ExploitState,
    pub sigma_crit: f64,
    pub beta_init: f64,
    pub beta_min: f64,
    pub rho: f64,
    pub r_resolution: f64,
    pub c_fail: usize,
    pub delta_gamma: f64,
    pub n_candidates_per_dim: usize,
    pub seed: u64,
    /// Random Latin hypercubes drawn when building a maximin design.
    pub lhs_restarts: usize,
    pub cv_folds: usize,
    pub lambda_grid: Vec<f64>,
}

pub const DEFAULT_ITERATIONS: usize = 50;
pub const DEFAULT_LHS_RESTARTS: usize = 100;
pub const DEFAULT_CV_FOLDS: usize = 5;

/// `{1e-8, 1e-7, ..., 1e2}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-8..=2).map(|e| 10f64.powi(e)).collect()
}

/// Defaults for a `d`-dimensional problem evaluated `n_par` points at a time.
pub fn default_config(d: usize, n_par: usize) -> RunConfig {
    let d = d.max(1);
    let n_par = n_par.max(1);
    RunConfig {
        n_par,
        n_iterations: DEFAULT_ITERATIONS,
        m_doe: 3usize.div_ceil(n_par) * n_par,
        s_init: ExploitState { gamma: 0.0, p: 1.0, sigma: 0.1 },
        sigma_crit: 0.025,
        beta_init: 0.02,
        beta_min: 0.01,
        rho: 0.4,
        r_resolution: 0.01,
        c_fail: d.div_ceil(n_par).max(2),
        delta_gamma: 2.0,
        n_candidates_per_dim: 1000,
        seed: 0,
        lhs_restarts: DEFAULT_LHS_RESTARTS,
        cv_folds: DEFAULT_CV_FOLDS,
        lambda_grid: default_lambda_grid(),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let unit_open = |v: f64| v > 0.0 && v < 1.0;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_par == 0 {
            return bad("n_par must be positive".into());
        }
        if self.m_doe < 2 {
            return bad(format!("m_doe must be at least 2, got {}", self.m_doe));
        }
        if self.c_fail == 0 {
            return bad("c_fail must be positive".into());
        }
        if self.n_candidates_per_dim == 0 || self.lhs_restarts == 0 {
            return bad("n_candidates_per_dim and lhs_restarts must be positive".into());
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds must be at least 2, got {}", self.cv_folds));
        }
        for (name, v) in [
            ("sigma_crit", self.sigma_crit),
            ("beta_init", self.beta_init),
            ("beta_min", self.beta_min),
            ("rho", self.rho),
            ("r_resolution", self.r_resolution),
        ] {
            if !unit_open(v) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if self.beta_min > self.beta_init {
            return bad(format!("beta_min ({}) exceeds beta_init ({})", self.beta_min, self.beta_init));
        }
        if !(self.delta_gamma > 0.0 && self.delta_gamma.is_finite()) {
            return bad(format!("delta_gamma must be positive, got {}", self.delta_gamma));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("lambda_grid entries must be finite and non-negative".into());
        }
        self.s_init.validate()
    }

    pub(crate) fn candidates_for(&self, d: usize) -> usize {
        self.n_candidates_per_dim * d
    }
}

/// A noisy black-box objective `f(x, omega)` over a box domain.
///
/// `evaluate` may be called concurrently for distinct points; all noise must
/// come from the supplied generator so that runs are reproducible.
pub trait Objective: Send + Sync {
    fn domain(&self) -> &BoxDomain;

    fn dimension(&self) -> usize {
        self.domain().dim()
    }

    fn name(&self) -> &str {
        "objective"
    }

    fn evaluate(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64>;

    /// The noise-free mean `E[f(x, .)]`, when known.
    fn true_mean(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

type NoisyFn = dyn Fn(&[f64], &mut dyn RngCore) -> f64 + Send + Sync;
type MeanFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Objective backed by closures.
pub struct FnObjective {
    name: String,
    domain: BoxDomain,
    eval: Box<NoisyFn>,
    mean: Option<Box<MeanFn>>,
}

impl FnObjective {
    pub fn new<F>(name: impl Into<String>, domain: BoxDomain, eval: F) -> Self
    where
        F: Fn(&[f64], &mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), domain, eval: Box::new(eval), mean: None }
    }

    /// Noise-free objective; `f` doubles as the true mean.
    pub fn deterministic<F>(name: impl Into<String>, domain: BoxDomain, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static,
    {
        let g = f.clone();
        Self { name: name.into(), domain, eval: Box::new(move |x, _| g(x)), mean: Some(Box::new(f)) }
    }

    pub fn with_true_mean<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.mean = Some(Box::new(f));
        self
    }
}

impl Objective for FnObjective {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        self.domain.check_dim(x)?;
        Ok((self.eval)(x, rng))
    }

    fn true_mean(&self, x: &[f64]) -> Option<f64> {
        self.mean.as_ref().map(|f| f(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> BoxDomain {
        BoxDomain::cube(2, 0.0, 1.0).unwrap()
    }

    #[test]
    fn default_config_examples() {
        let c = default_config(10, 12);
        assert_eq!((c.m_doe, c.c_fail), (12, 2));
        let c = default_config(2, 1);
        assert_eq!((c.m_doe, c.c_fail), (3, 2));
        assert_eq!(default_config(7, 2).c_fail, 4);
        assert_eq!(c.s_init, ExploitState { gamma: 0.0, p: 1.0, sigma: 0.1 });
        assert_eq!(
            (c.sigma_crit, c.beta_init, c.beta_min, c.rho, c.r_resolution, c.delta_gamma),
            (0.025, 0.02, 0.01, 0.4, 0.01, 2.0)
        );
        assert_eq!(c.lambda_grid.len(), 11);
        c.validate().unwrap();
    }

    #[test]
    fn clip_examples() {
        let d = unit_square();
        assert_eq!(clip_to_domain(&[1.5, 0.5], &d).unwrap(), vec![1.0, 0.5]);
        assert_eq!(clip_to_domain(&[0.2, 0.7], &d).unwrap(), vec![0.2, 0.7]);
        assert_eq!(clip_to_domain(&[-2.0, -2.0], &d).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(clip_to_domain(&[0.0], &d), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(BoxDomain::new(vec![], vec![]).is_err());
        assert!(BoxDomain::new(vec![0.0], vec![0.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn dataset_rejects_nonfinite_and_mixed_dims() {
        let mut data = EvalDataset::new();
        data.push(vec![0.0, 1.0], 1.0).unwrap();
        assert!(data.push(vec![0.0], 1.0).is_err());
        assert!(matches!(data.push(vec![0.0, 0.0], f64::NAN), Err(Error::NonFiniteValue { .. })));
        data.push(vec![0.5, 0.5], 1.0).unwrap();
        assert_eq!(data.argmin(), Some(0));
    }

    #[test]
    fn validation_catches_beta_order() {
        let mut c = default_config(2, 2);
        c.beta_min = 0.05;
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn m_doe_is_multiple_of_n_par(d in 1usize..40, n_par in 1usize..64) {
            let c = default_config(d, n_par);
            prop_assert_eq!(c.m_doe % n_par, 0);
            prop_assert!(c.m_doe >= 3);
        }

        #[test]
        fn clip_is_idempotent_and_nearest(
            x in prop::collection::vec(-3.0f64..3.0, 3),
            seed in any::<u64>(),
        ) {
            let dom = BoxDomain::new(vec![-1.0, 0.0, 0.5], vec![1.0, 2.0, 0.75]).unwrap();
            let c = clip_to_domain(&x, &dom).unwrap();
            prop_assert_eq!(clip_to_domain(&c, &dom).unwrap(), c.clone());
            let dist = |a: &[f64]| a.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
            let best = dist(&c);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let z = dom.sample_uniform(&mut rng);
                prop_assert!(best <= dist(&z) + 1e-12);
            }
        }
    }
}
