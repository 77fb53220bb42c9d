//! Zoom strategy: the tree of nested domains, the exploitation schedule of
//! each node and the restart test.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BoxDomain, EvalDataset, RunConfig};
use crate::srs::euclidean;

/// Exploitation strength `(gamma, p, sigma)`: regression weight parameter,
/// type I candidate fraction and type II spread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploitState {
    pub gamma: f64,
    pub p: f64,
    pub sigma: f64,
}

impl ExploitState {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma <= 0.0 && (0.0..=1.0).contains(&self.p) && self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "exploitation state needs gamma <= 0, p in [0, 1], sigma > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Threshold on `p` separating the mixing phase from the failure-driven phase.
pub const P_PHASE_THRESHOLD: f64 = 0.1;

pub type NodeId = usize;

#[derive(Clone, Debug)]
pub struct ZoomNode {
    pub id: NodeId,
    pub data: EvalDataset,
    pub omega: BoxDomain,
    pub state: ExploitState,
    /// Zoom-out probability.
    pub beta: f64,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    pub zoom_level: usize,
    pub fail_counter: usize,
}

impl ZoomNode {
    fn reset_state(&mut self, config: &RunConfig) {
        self.state = config.s_init;
        self.fail_counter = 0;
    }
}

/// Advances the node's exploitation state after one iteration.
///
/// While `p >= 0.1` only `p` shrinks, by `n_eff^(-1/d)`. Afterwards
/// consecutive failures are counted and every `c_fail` of them halve `sigma`
/// and lower `gamma` by `delta_gamma`.
pub fn update_state(node: &mut ZoomNode, n_eff: usize, iteration_failed: bool, config: &RunConfig) {
    let d = node.omega.dim() as f64;
    if node.state.p >= P_PHASE_THRESHOLD {
        node.state.p *= (n_eff.max(1) as f64).powf(-1.0 / d);
        return;
    }
    if iteration_failed {
        node.fail_counter += 1;
    } else {
        node.fail_counter = 0;
    }
    if node.fail_counter >= config.c_fail {
        node.fail_counter = 0;
        node.state.sigma /= 2.0;
        node.state.gamma -= config.delta_gamma;
    }
}

/// Smallest `k` with `k^d >= n`, i.e. `ceil(n^(1/d))` without rounding error.
fn cells_per_dim(n: usize, d: usize) -> usize {
    let reaches = |k: usize| {
        let mut acc: u128 = 1;
        for _ in 0..d {
            acc = acc.saturating_mul(k as u128);
            if acc >= n as u128 {
                return true;
            }
        }
        acc >= n as u128
    };
    let guess = (n as f64).powf(1.0 / d as f64).ceil().max(1.0) as usize;
    let mut k = guess.saturating_sub(1).max(1);
    while !reaches(k) {
        k += 1;
    }
    k
}

/// Number of occupied cells when `omega` is split into `ceil(n^(1/d))`
/// equal slabs per dimension. Upper-boundary points go to the last cell.
pub fn effective_n(data: &EvalDataset, omega: &BoxDomain) -> usize {
    let n = data.len();
    if n == 0 {
        return 0;
    }
    let d = omega.dim();
    let k = cells_per_dim(n, d);
    let occupied: HashSet<Vec<usize>> = data
        .points()
        .iter()
        .map(|x| {
            (0..d)
                .map(|i| {
                    let t = (x[i] - omega.lower()[i]) / omega.side_length(i);
                    ((t * k as f64).floor().max(0.0) as usize).min(k - 1)
                })
                .collect()
        })
        .collect();
    occupied.len()
}

/// True when `n^(-1/d) * side_i(omega) < r * side_i(root)` in every
/// dimension. A node without data never triggers a restart.
pub fn restart_condition(omega: &BoxDomain, n_points: usize, root: &BoxDomain, r_resolution: f64) -> bool {
    if n_points == 0 {
        return false;
    }
    let scale = (n_points as f64).powf(-1.0 / omega.dim() as f64);
    (0..omega.dim()).all(|i| scale * omega.side_length(i) < r_resolution * root.side_length(i))
}

/// Deepest zoom level reachable before the restart test fires:
/// `ceil(log_rho(r))`.
pub fn zoom_level_bound(rho: f64, r_resolution: f64) -> usize {
    let v = r_resolution.ln() / rho.ln();
    (v - 1e-9).ceil().max(0.0) as usize
}

/// Box of side `rho * side_i(omega)` centered at `center`, clipped to `omega`.
pub fn shrink_domain(omega: &BoxDomain, center: &[f64], rho: f64) -> Result<BoxDomain> {
    omega.check_dim(center)?;
    if !omega.contains(center) {
        return Err(Error::OutsideDomain { x: center.to_vec() });
    }
    let (lower, upper) = (0..omega.dim())
        .map(|i| {
            let half = 0.5 * rho * omega.side_length(i);
            ((center[i] - half).max(omega.lower()[i]), (center[i] + half).min(omega.upper()[i]))
        })
        .unzip();
    BoxDomain::new(lower, upper)
}

/// A zoom-in decision computed without touching the tree, so the restart
/// test can inspect the would-be child first.
#[derive(Clone, Debug)]
pub enum ZoomPlan {
    Create { omega: BoxDomain, data: EvalDataset },
    Revisit { child: NodeId, omega: BoxDomain, data: EvalDataset },
}

impl ZoomPlan {
    pub fn omega(&self) -> &BoxDomain {
        match self {
            ZoomPlan::Create { omega, .. } | ZoomPlan::Revisit { omega, .. } => omega,
        }
    }

    pub fn data(&self) -> &EvalDataset {
        match self {
            ZoomPlan::Create { data, .. } | ZoomPlan::Revisit { data, .. } => data,
        }
    }

    pub fn triggers_restart(&self, root: &BoxDomain, config: &RunConfig) -> bool {
        restart_condition(self.omega(), self.data().len(), root, config.r_resolution)
    }
}

/// Arena of zoom nodes with a cursor on the current node.
#[derive(Clone, Debug)]
pub struct ZoomTree {
    nodes: Vec<ZoomNode>,
    current: NodeId,
}

impl ZoomTree {
    pub fn new(domain: BoxDomain, data: EvalDataset, config: &RunConfig) -> Self {
        let root = ZoomNode {
            id: 0,
            data,
            omega: domain,
            state: config.s_init,
            beta: config.beta_init,
            children: Vec::new(),
            parent: None,
            zoom_level: 0,
            fail_counter: 0,
        };
        Self { nodes: vec![root], current: 0 }
    }

    pub fn root(&self) -> &ZoomNode {
        &self.nodes[0]
    }

    pub fn current(&self) -> &ZoomNode {
        &self.nodes[self.current]
    }

    pub fn current_mut(&mut self) -> &mut ZoomNode {
        &mut self.nodes[self.current]
    }

    pub fn current_id(&self) -> NodeId {
        self.current
    }

    pub fn node(&self, id: NodeId) -> &ZoomNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[ZoomNode] {
        &self.nodes
    }

    pub fn max_zoom_level(&self) -> usize {
        self.nodes.iter().map(|n| n.zoom_level).max().unwrap_or(0)
    }

    /// Works out which child the current node would zoom into around `x_star`.
    ///
    /// If `x_star` lies in existing children, the one whose center is nearest
    /// is revisited (earliest created on ties); otherwise a new child domain
    /// is cut around `x_star`. Either way the child's data is every archived
    /// evaluation inside its domain.
    pub fn plan_zoom_in(&self, x_star: &[f64], archive: &EvalDataset, config: &RunConfig) -> Result<ZoomPlan> {
        let node = self.current();
        node.omega.check_dim(x_star)?;
        if !node.omega.contains(x_star) {
            return Err(Error::OutsideDomain { x: x_star.to_vec() });
        }
        let mut nearest: Option<(NodeId, f64)> = None;
        for &c in &node.children {
            let child = &self.nodes[c];
            if child.omega.contains(x_star) {
                let dist = euclidean(&child.omega.center(), x_star);
                if nearest.is_none_or(|(_, best)| dist < best) {
                    nearest = Some((c, dist));
                }
            }
        }
        Ok(match nearest {
            Some((child, _)) => {
                let omega = self.nodes[child].omega.clone();
                let data = archive.restricted_to(&omega);
                ZoomPlan::Revisit { child, omega, data }
            }
            None => {
                let omega = shrink_domain(&node.omega, x_star, config.rho)?;
                let data = archive.restricted_to(&omega);
                ZoomPlan::Create { omega, data }
            }
        })
    }

    /// Applies a zoom-in plan: the current node's state is reset and the
    /// child becomes current.
    pub fn commit_zoom_in(&mut self, plan: ZoomPlan, config: &RunConfig) -> NodeId {
        let parent = self.current;
        let child = match plan {
            ZoomPlan::Create { omega, data } => {
                let id = self.nodes.len();
                let zoom_level = self.nodes[parent].zoom_level + 1;
                self.nodes.push(ZoomNode {
                    id,
                    data,
                    omega,
                    state: config.s_init,
                    beta: config.beta_init,
                    children: Vec::new(),
                    parent: Some(parent),
                    zoom_level,
                    fail_counter: 0,
                });
                self.nodes[parent].children.push(id);
                id
            }
            ZoomPlan::Revisit { child, data, .. } => {
                let node = &mut self.nodes[child];
                node.data = data;
                node.beta = (node.beta / 2.0).max(config.beta_min);
                child
            }
        };
        self.nodes[parent].reset_state(config);
        self.current = child;
        child
    }

    pub fn zoom_in(&mut self, x_star: &[f64], archive: &EvalDataset, config: &RunConfig) -> Result<NodeId> {
        let plan = self.plan_zoom_in(x_star, archive, config)?;
        Ok(self.commit_zoom_in(plan, config))
    }

    /// With probability `beta` of the current node, moves to its parent and
    /// refreshes the parent's data from `archive`. Returns whether it moved.
    pub fn maybe_zoom_out<R: Rng + ?Sized>(&mut self, archive: &EvalDataset, rng: &mut R) -> bool {
        let Some(parent) = self.current().parent else {
            return false;
        };
        let u: f64 = rng.random();
        if u >= self.current().beta {
            return false;
        }
        let data = archive.restricted_to(&self.nodes[parent].omega);
        self.nodes[parent].data = data;
        self.current = parent;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::default_config;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn node(d: usize, state: ExploitState) -> ZoomNode {
        ZoomNode {
            id: 0,
            data: EvalDataset::new(),
            omega: BoxDomain::cube(d, 0.0, 1.0).unwrap(),
            state,
            beta: 0.02,
            children: vec![],
            parent: None,
            zoom_level: 0,
            fail_counter: 0,
        }
    }

    fn dataset(points: &[&[f64]]) -> EvalDataset {
        EvalDataset::from_records(points.iter().map(|p| p.to_vec()).collect(), vec![0.0; points.len()]).unwrap()
    }

    #[test]
    fn p_decays_with_effective_count() {
        let config = default_config(2, 4);
        let mut n = node(2, ExploitState { gamma: 0.0, p: 1.0, sigma: 0.1 });
        update_state(&mut n, 16, true, &config);
        assert_eq!(n.state, ExploitState { gamma: 0.0, p: 0.25, sigma: 0.1 });
        assert_eq!(n.fail_counter, 0);
    }

    #[test]
    fn failure_streak_halves_sigma() {
        let config = default_config(2, 4);
        let mut n = node(2, ExploitState { gamma: 0.0, p: 0.05, sigma: 0.1 });
        n.fail_counter = config.c_fail - 1;
        update_state(&mut n, 3, true, &config);
        assert_eq!(n.state, ExploitState { gamma: -2.0, p: 0.05, sigma: 0.05 });
        assert_eq!(n.fail_counter, 0);
    }

    #[test]
    fn success_breaks_streak() {
        let config = default_config(2, 4);
        let mut n = node(2, ExploitState { gamma: 0.0, p: 0.05, sigma: 0.1 });
        n.fail_counter = 1;
        update_state(&mut n, 3, false, &config);
        assert_eq!(n.state, ExploitState { gamma: 0.0, p: 0.05, sigma: 0.1 });
        assert_eq!(n.fail_counter, 0);
    }

    #[test]
    fn effective_n_examples() {
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let same = dataset(&[&[0.1, 0.1], &[0.2, 0.3], &[0.4, 0.05], &[0.3, 0.45]]);
        assert_eq!(effective_n(&same, &dom), 1);
        let spread = dataset(&[&[0.1, 0.1], &[0.9, 0.1], &[0.1, 0.9], &[0.9, 0.9]]);
        assert_eq!(effective_n(&spread, &dom), 4);
        let line = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        let five = dataset(&[&[0.05], &[0.15], &[0.45], &[0.55], &[0.95]]);
        assert_eq!(effective_n(&five, &line), 3);
        let edge = dataset(&[&[1.0], &[0.0]]);
        assert_eq!(effective_n(&edge, &line), 2);
    }

    #[test]
    fn cells_per_dim_is_exact() {
        assert_eq!(cells_per_dim(8, 3), 2);
        assert_eq!(cells_per_dim(9, 3), 3);
        assert_eq!(cells_per_dim(1, 10), 1);
        assert_eq!(cells_per_dim(1025, 10), 3);
        assert_eq!(cells_per_dim(1024, 10), 2);
        assert_eq!(cells_per_dim(5, 1), 5);
        assert_eq!(cells_per_dim(125, 3), 5);
    }

    #[test]
    fn zoom_bound_for_defaults() {
        // ln(0.01) / ln(0.4) = 5.0259
        assert_eq!(zoom_level_bound(0.4, 0.01), 6);
        assert_eq!(zoom_level_bound(0.5, 0.25), 2);
    }

    #[test]
    fn new_child_is_clipped() {
        let config = default_config(2, 4);
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let archive = dataset(&[&[0.9, 0.5], &[0.1, 0.1], &[0.75, 0.6]]);
        let mut tree = ZoomTree::new(dom, archive.clone(), &config);
        tree.current_mut().state.sigma = 0.0125;
        let id = tree.zoom_in(&[0.9, 0.5], &archive, &config).unwrap();
        let child = tree.node(id);
        assert!((child.omega.lower()[0] - 0.7).abs() < 1e-12);
        assert_eq!(child.omega.upper()[0], 1.0);
        assert!((child.omega.lower()[1] - 0.3).abs() < 1e-12);
        assert!((child.omega.upper()[1] - 0.7).abs() < 1e-12);
        assert_eq!(child.data.len(), 2);
        assert_eq!(child.zoom_level, 1);
        assert_eq!(child.beta, config.beta_init);
        assert_eq!(tree.current_id(), id);
        assert_eq!(tree.root().state, config.s_init);
    }

    #[test]
    fn revisit_halves_beta_and_keeps_state() {
        let config = default_config(2, 4);
        let dom = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let mut archive = dataset(&[&[0.5, 0.5]]);
        let mut tree = ZoomTree::new(dom, archive.clone(), &config);
        let child = tree.zoom_in(&[0.5, 0.5], &archive, &config).unwrap();
        tree.current_mut().state.p = 0.3;
        tree.current = 0;
        archive.push(vec![0.45, 0.55], -1.0).unwrap();
        let again = tree.zoom_in(&[0.45, 0.55], &archive, &config).unwrap();
        assert_eq!(again, child);
        let c = tree.node(child);
        assert_eq!(c.beta, 0.01);
        assert_eq!(c.state.p, 0.3);
        assert_eq!(c.data.len(), 2);
        assert_eq!(tree.nodes().len(), 2);
    }

    #[test]
    fn revisit_prefers_nearest_center() {
        let config = default_config(2, 4);
        let dom = BoxDomain::cube(2, 0.0, 10.0).unwrap();
        let archive = dataset(&[&[4.0, 5.0], &[6.5, 5.0], &[5.25, 5.0]]);
        let mut tree = ZoomTree::new(dom, archive.clone(), &config);
        // Two overlapping children of side 4: [2, 6] and [4.5, 8.5] along x.
        let a = tree.zoom_in(&[4.0, 5.0], &archive, &config).unwrap();
        tree.current = 0;
        let b = tree.zoom_in(&[6.5, 5.0], &archive, &config).unwrap();
        assert_ne!(a, b);
        tree.current = 0;
        // x* = 5.9: distances to centers are 1.9 and 0.6.
        let plan = tree.plan_zoom_in(&[5.9, 5.0], &archive, &config).unwrap();
        assert!(matches!(plan, ZoomPlan::Revisit { child, .. } if child == b));
        // Equidistant: earliest created wins.
        let plan = tree.plan_zoom_in(&[5.25, 5.0], &archive, &config).unwrap();
        assert!(matches!(plan, ZoomPlan::Revisit { child, .. } if child == a));
    }

    #[test]
    fn zoom_in_outside_node_is_an_error() {
        let config = default_config(1, 1);
        let tree = ZoomTree::new(BoxDomain::cube(1, 0.0, 1.0).unwrap(), EvalDataset::new(), &config);
        assert!(matches!(tree.plan_zoom_in(&[2.0], &EvalDataset::new(), &config), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn restart_examples() {
        let root = BoxDomain::cube(1, 0.0, 100.0).unwrap();
        let short = BoxDomain::new(vec![10.0], vec![10.5]).unwrap();
        let long = BoxDomain::new(vec![10.0], vec![12.0]).unwrap();
        assert!(restart_condition(&short, 1, &root, 0.01));
        assert!(!restart_condition(&long, 1, &root, 0.01));
        assert!(!restart_condition(&short, 0, &root, 0.01));
        let root2 = BoxDomain::cube(2, 0.0, 100.0).unwrap();
        let one_dim_small = BoxDomain::new(vec![0.0, 0.0], vec![0.5, 50.0]).unwrap();
        assert!(!restart_condition(&one_dim_small, 1, &root2, 0.01));
    }

    #[test]
    fn zoom_out_probability_extremes() {
        let config = default_config(1, 1);
        let archive = dataset(&[&[0.5]]);
        let mut tree = ZoomTree::new(BoxDomain::cube(1, 0.0, 1.0).unwrap(), archive.clone(), &config);
        let child = tree.zoom_in(&[0.5], &archive, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        tree.nodes[child].beta = 0.0;
        for _ in 0..1000 {
            assert!(!tree.maybe_zoom_out(&archive, &mut rng));
        }
        tree.nodes[child].beta = 1.0;
        assert!(tree.maybe_zoom_out(&archive, &mut rng));
        assert_eq!(tree.current_id(), 0);
        assert!(!tree.maybe_zoom_out(&archive, &mut rng));
    }

    #[test]
    fn zoom_out_frequency_matches_beta() {
        let config = default_config(1, 1);
        let archive = dataset(&[&[0.5]]);
        let mut tree = ZoomTree::new(BoxDomain::cube(1, 0.0, 1.0).unwrap(), archive.clone(), &config);
        let child = tree.zoom_in(&[0.5], &archive, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut outs = 0;
        for _ in 0..10_000 {
            tree.current = child;
            if tree.maybe_zoom_out(&archive, &mut rng) {
                outs += 1;
            }
        }
        let freq = outs as f64 / 10_000.0;
        assert!((0.015..=0.025).contains(&freq), "{freq}");
    }

    proptest! {
        #[test]
        fn effective_n_is_bounded(
            pts in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 1..60)
        ) {
            let dom = BoxDomain::cube(3, 0.0, 1.0).unwrap();
            let n = pts.len();
            let data = EvalDataset::from_records(pts, vec![0.0; n]).unwrap();
            let e = effective_n(&data, &dom);
            prop_assert!(e >= 1 && e <= n);
        }

        #[test]
        fn children_stay_inside_parents(
            centers in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 2), 1..8)
        ) {
            let config = default_config(2, 2);
            let dom = BoxDomain::new(vec![-2.0, 1.0], vec![3.0, 2.0]).unwrap();
            let mut tree = ZoomTree::new(dom.clone(), EvalDataset::new(), &config);
            for u in centers {
                let x = tree.current().omega.from_unit(&u);
                tree.zoom_in(&x, &EvalDataset::new(), &config).unwrap();
            }
            for n in tree.nodes() {
                if let Some(p) = n.parent {
                    prop_assert!(tree.node(p).omega.contains_domain(&n.omega));
                    prop_assert_eq!(n.zoom_level, tree.node(p).zoom_level + 1);
                }
                prop_assert!(n.beta >= config.beta_min && n.beta <= config.beta_init);
            }
        }
    }
}
