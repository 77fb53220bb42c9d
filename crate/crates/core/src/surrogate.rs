//! Weighted multiquadric radial basis regression.
//!
//! The surrogate is `g(x) = sum_i c_i * phi(|x - x_i|)` with
//! `phi(r) = sqrt(1 + r^2)`, evaluated in unit-cube coordinates of the domain
//! it was fitted on. Coefficients minimize
//!
//! ```text
//! sum_j w_j (y_j - g(x_j))^2 + lambda * sum_j c_j^2,   w_j = exp(gamma * yhat_j)
//! ```
//!
//! where `yhat` is the min-max normalized response. `lambda` is chosen by
//! k-fold cross validation over a fixed grid.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{default_lambda_grid, BoxDomain, EvalDataset, DEFAULT_CV_FOLDS};

/// Multiquadric kernel with unit shape parameter.
#[inline]
pub fn multiquadric(r: f64) -> f64 {
    (1.0 + r * r).sqrt()
}

#[inline]
fn multiquadric_sq(r2: f64) -> f64 {
    (1.0 + r2).sqrt()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Cross-validation settings for [`fit_rbf`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    /// Seed of the fold permutation.
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: DEFAULT_CV_FOLDS, lambda_grid: default_lambda_grid(), seed: 0 }
    }
}

/// A fitted radial basis surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfSurrogate {
    centers: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    gamma: f64,
    lambda: f64,
    norm_record: BoxDomain,
}

impl RbfSurrogate {
    /// Assembles a model from unit-cube `centers` and their coefficients.
    pub fn from_parts(
        centers: Vec<Vec<f64>>,
        coefficients: Vec<f64>,
        gamma: f64,
        lambda: f64,
        norm_record: BoxDomain,
    ) -> Result<Self> {
        if centers.len() != coefficients.len() {
            return Err(Error::InvalidConfig(format!(
                "{} centers but {} coefficients",
                centers.len(),
                coefficients.len()
            )));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != norm_record.dim()) {
            return Err(Error::DimensionMismatch { expected: norm_record.dim(), got: c.len() });
        }
        check_gamma(gamma)?;
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidConfig(format!("lambda must be non-negative, got {lambda}")));
        }
        Ok(Self { centers, coefficients, gamma, lambda, norm_record })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn norm_record(&self) -> &BoxDomain {
        &self.norm_record
    }

    /// Same centers, different coefficients.
    pub fn with_coefficients(&self, coefficients: Vec<f64>) -> Result<Self> {
        Self::from_parts(self.centers.clone(), coefficients, self.gamma, self.lambda, self.norm_record.clone())
    }

    /// Value of the surrogate at `x` given in original coordinates.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.norm_record.check_dim(x)?;
        Ok(self.predict_unit(&self.norm_record.to_unit(x)))
    }

    /// Value at a point already mapped to the unit cube.
    pub fn predict_unit(&self, u: &[f64]) -> f64 {
        self.centers.iter().zip(&self.coefficients).map(|(c, coef)| coef * multiquadric_sq(sq_dist(u, c))).sum()
    }

    /// Predictions for many points, original coordinates. Callers guarantee
    /// the dimension.
    pub(crate) fn predict_all(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.par_iter().map(|x| self.predict_unit(&self.norm_record.to_unit(x))).collect()
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma <= 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("gamma must be finite and non-positive, got {gamma}")))
    }
}

/// Per-record weights `exp(gamma * yhat_j)`; all ones when the responses
/// are constant.
pub fn response_weights(ys: &[f64], gamma: f64) -> Vec<f64> {
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    ys.iter()
        .map(|y| {
            let yhat = if range > 0.0 { (y - lo) / range } else { 0.0 };
            (gamma * yhat).exp()
        })
        .collect()
}

/// Fits a weighted multiquadric surrogate on `data`, choosing the ridge
/// penalty by cross validation.
pub fn fit_rbf(data: &EvalDataset, domain: &BoxDomain, gamma: f64, cv: &CvConfig) -> Result<RbfSurrogate> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    check_gamma(gamma)?;
    let units: Vec<Vec<f64>> =
        data.points().iter().map(|x| domain.check_dim(x).map(|_| domain.to_unit(x))).collect::<Result<_>>()?;
    let ys = data.values();
    let weights = response_weights(ys, gamma);

    let lambda = select_lambda(&units, ys, &weights, cv)?;
    let all: Vec<usize> = (0..n).collect();
    let ridge = WeightedRidge::new(&units, ys, &weights, &all);
    let coefficients = ridge.solve(lambda).unwrap_or_else(|| ridge.pseudo_inverse());
    Ok(RbfSurrogate { centers: units, coefficients, gamma, lambda, norm_record: domain.clone() })
}

fn select_lambda(units: &[Vec<f64>], ys: &[f64], weights: &[f64], cv: &CvConfig) -> Result<f64> {
    let grid = &cv.lambda_grid;
    if grid.is_empty() {
        return Ok(0.0);
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let n = ys.len();
    let k = cv.folds.clamp(2, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cv.seed));

    // Folds are independent; the sum below runs in fold order regardless of
    // how they were computed.
    let per_fold: Vec<Vec<Option<f64>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let mut test = Vec::new();
            let mut train = Vec::new();
            for (pos, &i) in order.iter().enumerate() {
                if pos % k == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            let ridge = WeightedRidge::new(units, ys, weights, &train);
            grid.iter()
                .map(|&lambda| {
                    let c = ridge.solve(lambda)?;
                    let err = test
                        .iter()
                        .map(|&j| {
                            let g: f64 = train
                                .iter()
                                .zip(&c)
                                .map(|(&i, ci)| ci * multiquadric_sq(sq_dist(&units[j], &units[i])))
                                .sum();
                            weights[j] * (ys[j] - g).powi(2)
                        })
                        .sum::<f64>();
                    Some(err)
                })
                .collect()
        })
        .collect();

    let mut best: Option<(f64, f64)> = None;
    for (li, &lambda) in grid.iter().enumerate() {
        let total: Option<f64> = per_fold.iter().map(|f| f[li]).sum();
        if let Some(err) = total.filter(|e| e.is_finite()) {
            if best.is_none_or(|(_, b)| err < b) {
                best = Some((lambda, err));
            }
        }
    }
    Ok(best.map_or(0.0, |(l, _)| l))
}

/// Weighted ridge problem on a subset of records, factored once by SVD so
/// that every penalty on the grid is a cheap back-substitution.
struct WeightedRidge {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl WeightedRidge {
    fn new(units: &[Vec<f64>], ys: &[f64], weights: &[f64], rows: &[usize]) -> Self {
        let m = rows.len();
        let a = DMatrix::from_fn(m, m, |r, c| {
            weights[rows[r]].sqrt() * multiquadric_sq(sq_dist(&units[rows[r]], &units[rows[c]]))
        });
        let rhs = DVector::from_iterator(m, rows.iter().map(|&j| weights[j].sqrt() * ys[j]));
        let svd = a.svd(true, true);
        Self { u: svd.u.expect("u requested"), s: svd.singular_values, v_t: svd.v_t.expect("v_t requested"), rhs }
    }

    /// Minimizer of `|A c - b|^2 + lambda |c|^2`; `None` when `lambda == 0`
    /// and the system is numerically singular.
    fn solve(&self, lambda: f64) -> Option<Vec<f64>> {
        let s_max = self.s.max();
        let tol = s_max * f64::EPSILON * self.s.len() as f64;
        if lambda == 0.0 && self.s.iter().any(|s| *s <= tol) {
            return None;
        }
        let ut_b = self.u.tr_mul(&self.rhs);
        let scaled =
            DVector::from_iterator(self.s.len(), self.s.iter().zip(ut_b.iter()).map(|(s, b)| s * b / (s * s + lambda)));
        let c = self.v_t.tr_mul(&scaled);
        c.iter().all(|v| v.is_finite()).then(|| c.iter().copied().collect())
    }

    /// Minimum-norm least-squares solution, dropping negligible singular values.
    fn pseudo_inverse(&self) -> Vec<f64> {
        let tol = self.s.max() * f64::EPSILON * self.s.len() as f64;
        let ut_b = self.u.tr_mul(&self.rhs);
        let scaled = DVector::from_iterator(
            self.s.len(),
            self.s.iter().zip(ut_b.iter()).map(|(s, b)| if *s > tol { b / s } else { 0.0 }),
        );
        self.v_t.tr_mul(&scaled).iter().copied().collect()
    }
}

/// Monte-Carlo estimate of `|model - truth|_2 / |truth|_2` over `domain`.
pub fn relative_l2_error<M, T, R>(model: M, truth: T, domain: &BoxDomain, n_mc: usize, rng: &mut R) -> Result<f64>
where
    M: Fn(&[f64]) -> f64,
    T: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    if n_mc == 0 {
        return Err(Error::InvalidConfig("n_mc must be positive".into()));
    }
    let mut diff = 0.0;
    let mut norm = 0.0;
    for _ in 0..n_mc {
        let x = domain.sample_uniform(rng);
        let t = truth(&x);
        diff += (model(&x) - t).powi(2);
        norm += t * t;
    }
    if norm == 0.0 {
        return Err(Error::DegenerateNorm);
    }
    Ok((diff / norm).sqrt())
}
