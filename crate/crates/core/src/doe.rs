//! Space-filling initial designs: cell-centered Latin hypercubes selected by
//! the maximin criterion.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::problem::BoxDomain;

/// A Latin hypercube design in original coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DoeDesign {
    pub points: Vec<Vec<f64>>,
    /// Minimum pairwise Euclidean distance; `+inf` for a single point.
    pub criterion_value: f64,
}

/// Best of `n_restarts` random cell-centered Latin hypercubes of `m` points,
/// maximizing the minimum pairwise distance in domain coordinates.
pub fn latin_hypercube_maximin<R: Rng + ?Sized>(
    m: usize,
    domain: &BoxDomain,
    n_restarts: usize,
    rng: &mut R,
) -> DoeDesign {
    latin_hypercube_maximin_traced(m, domain, n_restarts, rng).0
}

/// As [`latin_hypercube_maximin`], also returning the criterion value of every
/// design drawn, in draw order.
pub fn latin_hypercube_maximin_traced<R: Rng + ?Sized>(
    m: usize,
    domain: &BoxDomain,
    n_restarts: usize,
    rng: &mut R,
) -> (DoeDesign, Vec<f64>) {
    let mut best: Option<DoeDesign> = None;
    let mut trace = Vec::with_capacity(n_restarts.max(1));
    for _ in 0..n_restarts.max(1) {
        let points = latin_hypercube(m, domain, rng);
        let criterion_value = min_pairwise_distance(&points);
        trace.push(criterion_value);
        if best.as_ref().is_none_or(|b| criterion_value > b.criterion_value) {
            best = Some(DoeDesign { points, criterion_value });
        }
    }
    (best.expect("at least one design drawn"), trace)
}

/// One random cell-centered Latin hypercube of `m` points.
pub fn latin_hypercube<R: Rng + ?Sized>(m: usize, domain: &BoxDomain, rng: &mut R) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let mut points = vec![vec![0.0; d]; m];
    let mut perm: Vec<usize> = (0..m).collect();
    for i in 0..d {
        perm.shuffle(rng);
        let width = domain.side_length(i) / m as f64;
        for (point, cell) in points.iter_mut().zip(&perm) {
            point[i] = domain.lower()[i] + (*cell as f64 + 0.5) * width;
        }
    }
    points
}

pub(crate) fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.min(crate::srs::euclidean(a, b));
        }
    }
    best
}
