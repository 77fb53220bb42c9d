//! Stochastic response surface proposals.
//!
//! Candidates are a mix of uniform points over the node domain (type I) and
//! Gaussian perturbations of the surrogate-best data point (type II). A batch
//! is then picked one point per weight, each time minimizing a convex blend
//! of the normalized surrogate value and the normalized closeness to points
//! already evaluated or selected.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::problem::{argmin, BoxDomain, EvalDataset};
use crate::surrogate::RbfSurrogate;
use crate::zoomtree::ExploitState;

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidateType {
    /// Uniform over the domain.
    TypeI,
    /// Gaussian perturbation of the surrogate-best point.
    TypeII,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub points: Vec<Vec<f64>>,
    pub type_tags: Vec<CandidateType>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, kind: CandidateType) -> usize {
        self.type_tags.iter().filter(|t| **t == kind).count()
    }
}

/// Trade-off weights for one batch; weight `w` puts `w` on the surrogate
/// score and `1 - w` on the distance score.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPattern {
    weights: Vec<f64>,
}

impl WeightPattern {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidConfig(format!("weights must be non-empty and in [0, 1]: {weights:?}")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

const WEIGHT_LOW: f64 = 0.3;
const WEIGHT_HIGH: f64 = 1.0;

/// Equally spaced weights on `[0.3, 1]`; a single proposal alternates
/// between 0.3 (even iterations) and 1.0 (odd iterations).
pub fn weight_pattern(n_par: usize, iteration_index: usize) -> WeightPattern {
    let weights = match n_par {
        0 | 1 => vec![if iteration_index.is_multiple_of(2) { WEIGHT_LOW } else { WEIGHT_HIGH }],
        n => (0..n)
            .map(|k| {
                if k == n - 1 {
                    WEIGHT_HIGH
                } else {
                    WEIGHT_LOW + (WEIGHT_HIGH - WEIGHT_LOW) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    };
    WeightPattern { weights }
}

/// Number of type I candidates out of `t` for mixing parameter `p`.
pub fn type_one_count(p: f64, t: usize) -> usize {
    let fraction = (10.0 * p.clamp(0.0, 1.0)).floor() / 10.0;
    ((fraction * t as f64).round() as usize).min(t)
}

/// Index of the data point with the lowest surrogate value (lowest index on
/// ties).
pub fn surrogate_argmin(data: &EvalDataset, model: &RbfSurrogate) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for x in data.points() {
        model.norm_record().check_dim(x)?;
    }
    let values = model.predict_all(data.points());
    Ok(argmin(&values).expect("non-empty"))
}

/// Draws `t` candidates in `omega`: type I points first, then type II.
pub fn generate_candidates<R: Rng + ?Sized>(
    data: &EvalDataset,
    omega: &BoxDomain,
    state: &ExploitState,
    model: &RbfSurrogate,
    t: usize,
    rng: &mut R,
) -> Result<CandidateSet> {
    let best = data.points()[surrogate_argmin(data, model)?].clone();
    omega.check_dim(&best)?;
    let n_uniform = type_one_count(state.p, t);
    let mut points = Vec::with_capacity(t);
    let mut type_tags = Vec::with_capacity(t);
    for _ in 0..n_uniform {
        points.push(omega.sample_uniform(rng));
        type_tags.push(CandidateType::TypeI);
    }
    for _ in n_uniform..t {
        let mut x: Vec<f64> = best
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let z: f64 = rng.sample(StandardNormal);
                c + state.sigma * omega.side_length(i) * z
            })
            .collect();
        omega.clamp(&mut x);
        points.push(x);
        type_tags.push(CandidateType::TypeII);
    }
    Ok(CandidateSet { points, type_tags })
}

/// Picks one candidate per weight of `pattern`; see [`select_indices`].
pub fn select_batch(
    candidates: &CandidateSet,
    model: &RbfSurrogate,
    evaluated: &[Vec<f64>],
    pattern: &WeightPattern,
) -> Result<Vec<Vec<f64>>> {
    for x in &candidates.points {
        model.norm_record().check_dim(x)?;
    }
    let response = model.predict_all(&candidates.points);
    let picks = select_indices(&candidates.points, &response, evaluated, pattern.weights())?;
    Ok(picks.into_iter().map(|i| candidates.points[i].clone()).collect())
}

/// Sequential weighted selection.
///
/// For each weight `w`, over the candidates not yet taken:
/// `V_R = (g - g_min) / (g_max - g_min)`,
/// `V_D = (D_max - D) / (D_max - D_min)` with `D` the distance to the nearest
/// evaluated or already selected point, and the candidate minimizing
/// `w V_R + (1 - w) V_D` is taken (lowest index on ties). A degenerate range
/// scores 0 for that criterion.
pub fn select_indices(
    points: &[Vec<f64>],
    response: &[f64],
    evaluated: &[Vec<f64>],
    weights: &[f64],
) -> Result<Vec<usize>> {
    if points.len() != response.len() {
        return Err(Error::InvalidConfig(format!("{} candidates but {} responses", points.len(), response.len())));
    }
    if evaluated.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if points.len() < weights.len() {
        return Err(Error::TooFewCandidates { available: points.len(), requested: weights.len() });
    }

    let mut nearest: Vec<f64> =
        points.par_iter().map(|p| evaluated.iter().map(|e| euclidean(p, e)).fold(f64::INFINITY, f64::min)).collect();
    let mut taken = vec![false; points.len()];
    let mut picks = Vec::with_capacity(weights.len());

    for &w in weights {
        let (mut g_min, mut g_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut d_min, mut d_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in (0..points.len()).filter(|i| !taken[*i]) {
            g_min = g_min.min(response[i]);
            g_max = g_max.max(response[i]);
            d_min = d_min.min(nearest[i]);
            d_max = d_max.max(nearest[i]);
        }
        let mut best: Option<(usize, f64)> = None;
        for i in (0..points.len()).filter(|i| !taken[*i]) {
            let v_r = if g_max > g_min { (response[i] - g_min) / (g_max - g_min) } else { 0.0 };
            let v_d = if d_max > d_min { (d_max - nearest[i]) / (d_max - d_min) } else { 0.0 };
            let score = w * v_r + (1.0 - w) * v_d;
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((i, score));
            }
        }
        let (pick, _) = best.expect("pool is non-empty");
        taken[pick] = true;
        picks.push(pick);
        let chosen = &points[pick];
        nearest.par_iter_mut().zip(points.par_iter()).for_each(|(d, p)| *d = d.min(euclidean(p, chosen)));
    }
    Ok(picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{fit_rbf, CvConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_setup() -> (EvalDataset, BoxDomain, RbfSurrogate) {
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let xs: Vec<Vec<f64>> =
            vec![vec![0.1, 0.1], vec![0.9, 0.2], vec![0.5, 0.5], vec![0.2, 0.8], vec![0.7, 0.9], vec![0.35, 0.6]];
        let ys = xs.iter().map(|x| (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)).collect();
        let data = EvalDataset::from_records(xs, ys).unwrap();
        let model = fit_rbf(&data, &dom, 0.0, &CvConfig::default()).unwrap();
        (data, dom, model)
    }

    #[test]
    fn weight_pattern_examples() {
        let w = weight_pattern(3, 0);
        assert_eq!(w.weights()[0], 0.3);
        assert!((w.weights()[1] - 0.65).abs() < 1e-15);
        assert_eq!(w.weights()[2], 1.0);
        assert_eq!(weight_pattern(1, 0).weights(), &[0.3]);
        assert_eq!(weight_pattern(1, 1).weights(), &[1.0]);
        assert_eq!(weight_pattern(1, 6).weights(), &[0.3]);
        assert_eq!(weight_pattern(2, 5).weights(), &[0.3, 1.0]);
        let w = weight_pattern(12, 0);
        assert!(w.weights().windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn type_one_fractions() {
        assert_eq!(type_one_count(1.0, 2000), 2000);
        assert_eq!(type_one_count(0.09, 2000), 0);
        assert_eq!(type_one_count(0.55, 2000), 1000);
        assert_eq!(type_one_count(0.1, 1000), 100);
    }

    #[test]
    fn candidate_mix_follows_p() {
        let (data, dom, model) = toy_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (p, expected) in [(1.0, 2000), (0.09, 0), (0.55, 1000)] {
            let state = ExploitState { gamma: 0.0, p, sigma: 0.1 };
            let c = generate_candidates(&data, &dom, &state, &model, 2000, &mut rng).unwrap();
            assert_eq!(c.len(), 2000);
            assert_eq!(c.count(CandidateType::TypeI), expected);
            assert!(c.points.iter().all(|x| dom.contains(x)));
        }
    }

    #[test]
    fn type_two_collapses_onto_best_point() {
        let (data, dom, model) = toy_setup();
        let best = data.points()[surrogate_argmin(&data, &model).unwrap()].clone();
        let state = ExploitState { gamma: 0.0, p: 0.0, sigma: 1e-12 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = generate_candidates(&data, &dom, &state, &model, 500, &mut rng).unwrap();
        for x in &c.points {
            assert!(euclidean(x, &best) < 1e-9);
        }
    }

    #[test]
    fn type_two_is_clipped_into_omega() {
        let (data, _, model) = toy_setup();
        let omega = BoxDomain::new(vec![0.3, 0.55], vec![0.4, 0.65]).unwrap();
        let inside = data.restricted_to(&omega);
        assert_eq!(inside.len(), 1);
        let state = ExploitState { gamma: 0.0, p: 0.0, sigma: 5.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = generate_candidates(&inside, &omega, &state, &model, 300, &mut rng).unwrap();
        assert!(c.points.iter().all(|x| omega.contains(x)));
        assert!(c.points.iter().any(|x| x[0] == 0.3 || x[0] == 0.4));
    }

    #[test]
    fn pure_response_weight_picks_surrogate_minimum() {
        let points = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let g = [3.0, -1.0, 2.0, -1.0];
        let picks = select_indices(&points, &g, &[vec![1.0]], &[1.0, 1.0]).unwrap();
        assert_eq!(picks, vec![1, 3]);
    }

    #[test]
    fn pure_distance_weight_picks_farthest() {
        let points = vec![vec![0.0], vec![1.0], vec![5.0], vec![3.0]];
        let g = [0.0, 1.0, 2.0, 3.0];
        let picks = select_indices(&points, &g, &[vec![0.5]], &[0.0, 0.0]).unwrap();
        assert_eq!(picks[0], 2);
        // After taking 5.0, the nearest-distance of 3.0 drops to 2.0 and 0.0
        // (distance 0.5) remains smaller, so 3.0 wins again.
        assert_eq!(picks[1], 3);
    }

    #[test]
    fn three_point_line_by_hand() {
        // Candidates at 0, 1, 2; evaluated point at 0.5; g = [0, 2, 4].
        // Weight 0.3, first pick:
        //   D = [0.5, 0.5, 1.5] -> V_D = [1, 1, 0]; V_R = [0, 0.5, 1]
        //   scores = [0.7, 0.85, 0.3] -> index 2.
        // Weight 1.0, second pick: pool {0, 1}, V_R = [0, 1] -> index 0.
        let points = vec![vec![0.0], vec![1.0], vec![2.0]];
        let picks = select_indices(&points, &[0.0, 2.0, 4.0], &[vec![0.5]], &[0.3, 1.0]).unwrap();
        assert_eq!(picks, vec![2, 0]);
    }

    #[test]
    fn degenerate_scores_fall_back_to_lowest_index() {
        let points = vec![vec![1.0], vec![-1.0]];
        let picks = select_indices(&points, &[5.0, 5.0], &[vec![0.0]], &[0.5]).unwrap();
        assert_eq!(picks, vec![0]);
    }

    #[test]
    fn selection_errors() {
        let points = vec![vec![0.0]];
        assert!(matches!(
            select_indices(&points, &[0.0], &[vec![1.0]], &[0.3, 1.0]),
            Err(Error::TooFewCandidates { available: 1, requested: 2 })
        ));
        assert!(select_indices(&points, &[0.0], &[], &[0.3]).is_err());
    }

    #[test]
    fn batch_is_distinct_and_deterministic() {
        let (data, dom, model) = toy_setup();
        let state = ExploitState { gamma: 0.0, p: 0.5, sigma: 0.1 };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = generate_candidates(&data, &dom, &state, &model, 2000, &mut rng).unwrap();
            select_batch(&c, &model, data.points(), &weight_pattern(6, 0)).unwrap()
        };
        let a = run(4);
        assert_eq!(a, run(4));
        for i in 0..a.len() {
            assert!(dom.contains(&a[i]));
            for j in i + 1..a.len() {
                assert_ne!(a[i], a[j]);
            }
        }
    }

    #[test]
    fn larger_weight_never_picks_worse_surrogate_value_first() {
        let (data, dom, model) = toy_setup();
        let state = ExploitState { gamma: 0.0, p: 1.0, sigma: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let c = generate_candidates(&data, &dom, &state, &model, 400, &mut rng).unwrap();
            let g = model.predict_all(&c.points);
            let first = |w: f64| select_indices(&c.points, &g, data.points(), &[w]).unwrap()[0];
            for (w1, w2) in [(0.0, 0.3), (0.3, 0.65), (0.65, 1.0), (0.1, 0.9)] {
                assert!(g[first(w2)] <= g[first(w1)]);
            }
        }
    }
}
