use std::f64::consts::LN_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{KernelKind, KernelSpec, Observable, ObservableKind};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_volume, decompose_points, CellGrid, ColoredConfiguration, DisjointSet, GreyConfiguration, Point, Spin};
use crate::model::{ModelParams, Time};
use crate::numeric::lse2;
use crate::sampler::poisson_count;

const NINF: f64 = f64::NEG_INFINITY;

/// Time-zero constraint on a cluster coming from a coloured boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    ForcedPlus,
    ForcedMinus,
    Unconstrained,
    Conflict,
}

/// Per-cluster inputs of the product formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterWeightTerm {
    /// `|C ∩ B|`.
    pub in_target: usize,
    pub constraint: Constraint,
    /// `log ρ` of the evolved conditioning points of the cluster.
    pub log_rho: f64,
    pub infinite: bool,
}

/// Log start weights of one cluster; the factor is `lse(plus, minus)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupWeights {
    pub plus: f64,
    pub minus: f64,
}

impl GroupWeights {
    pub fn log_factor(&self) -> f64 {
        lse2(self.plus, self.minus)
    }

    /// Probability that the cluster started plus.
    pub fn plus_probability(&self) -> f64 {
        if self.minus == NINF {
            1.0
        } else if self.plus == NINF {
            0.0
        } else {
            1.0 / (1.0 + (self.minus - self.plus).exp())
        }
    }

    /// Complement of [`Self::plus_probability`], without cancellation.
    pub fn minus_probability(&self) -> f64 {
        GroupWeights { plus: self.minus, minus: self.plus }.plus_probability()
    }

    /// `2 P(plus start) - 1`.
    fn bias(&self) -> f64 {
        if self.minus == NINF {
            1.0
        } else if self.plus == NINF {
            -1.0
        } else {
            (0.5 * (self.plus - self.minus)).tanh()
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct NearCluster {
    k: usize,
    s: i64,
    plus: bool,
    minus: bool,
    infinite: bool,
    pub(crate) standalone: GroupWeights,
}

/// One cluster of `ω_B ∪ conditioning` that contains points of `ω_B`.
#[derive(Clone, Debug)]
pub(crate) struct Group {
    pub(crate) key: usize,
    pub(crate) n: usize,
    pub(crate) n_obs: usize,
    pub(crate) weights: GroupWeights,
    pub(crate) norm: f64,
    pub(crate) clusters: std::ops::Range<usize>,
    k: usize,
    s: i64,
    plus: bool,
    minus: bool,
    infinite: bool,
}

/// Reusable per-thread buffers.
#[derive(Clone, Debug, Default)]
pub(crate) struct Scratch {
    pub(crate) pts: Vec<Point>,
    ds: DisjointSet,
    node_of: Vec<u32>,
    touched: Vec<u32>,
    edges: Vec<(u32, u32)>,
    slot: Vec<u32>,
    pub(crate) groups: Vec<Group>,
    pub(crate) group_clusters: Vec<u32>,
}

/// Log weight and Rao-Blackwellised observable value of one `ω_B` draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleEval {
    pub log_weight: f64,
    pub value: f64,
}

/// A kernel evaluation with the conditioning preprocessed.
#[derive(Clone, Debug)]
pub struct KernelProblem {
    spec: KernelSpec,
    log_alpha: f64,
    stay: f64,
    flip: f64,
    decay: f64,
    pub(crate) near_points: Vec<Point>,
    pub(crate) near_cluster_of: Vec<u32>,
    pub(crate) near: Vec<NearCluster>,
    grid: CellGrid,
    k_bound: usize,
    intensity_volume: f64,
}

impl KernelProblem {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        let params = &spec.params;
        let d = params.dim();
        let a = params.a();
        if spec.target.dim() != d || spec.evolved.dim() != d || spec.fixed.dim() != d || spec.observable.window.dim() != d {
            return invalid("dimension mismatch between windows, conditioning and model");
        }
        if !spec.target.contains_window(&spec.observable.window) {
            return invalid("observable window must lie inside the target window");
        }
        if spec.evolved.points().iter().chain(spec.fixed.points()).any(|p| spec.target.depth(p) > 0.0) {
            return invalid("conditioning points must lie outside the target window");
        }
        if let KernelKind::PlusMinus(_) = spec.kind {
            if !params.is_symmetric() {
                return Err(Error::PlusMinusNeedsSymmetric);
            }
        }
        if let Time::Finite(t) = params.t() {
            if !(t > 0.0) {
                return invalid("kernels need t > 0");
            }
        }
        let ne = spec.evolved.len();
        let mut pts = spec.evolved.points().to_vec();
        pts.extend_from_slice(spec.fixed.points());
        let dec = decompose_points(&pts, d, a, None);
        let mut near_points = Vec::new();
        let mut near_cluster_of = Vec::new();
        let mut near = Vec::new();
        let mut problem = Self {
            spec: spec.clone(),
            log_alpha: params.log_alpha(),
            stay: params.t().stay_probability(),
            flip: params.t().flip_probability(),
            decay: params.t().decay(),
            near_points: Vec::new(),
            near_cluster_of: Vec::new(),
            near: Vec::new(),
            grid: CellGrid::new(2.0 * a, d),
            k_bound: (spec.target.dilated_volume(2.0 * a) / ball_volume(d, a)).floor() as usize,
            intensity_volume: params.lambda_minus() * spec.target.volume(),
        };
        for c in &dec.clusters {
            let (mut k, mut s, mut plus, mut minus, mut infinite) = (0usize, 0i64, false, false, false);
            for &i in &c.indices {
                if i < ne {
                    k += 1;
                    s += spec.evolved.spins()[i].value();
                    if let Some(h) = &spec.horizon {
                        infinite |= h.touches(&pts[i]);
                    }
                } else {
                    match spec.fixed.spins()[i - ne] {
                        Spin::Plus => plus = true,
                        Spin::Minus => minus = true,
                    }
                }
            }
            let standalone = problem.start_weights(0, k, s, plus, minus, infinite);
            if standalone.log_factor() == NINF {
                return Err(Error::ConditioningInconsistent);
            }
            let near_idx: Vec<usize> = c.indices.iter().copied().filter(|&i| spec.target.distance_to(&pts[i]) <= 2.0 * a).collect();
            if near_idx.is_empty() {
                continue;
            }
            let id = near.len() as u32;
            for i in near_idx {
                near_points.push(pts[i]);
                near_cluster_of.push(id);
            }
            near.push(NearCluster { k, s, plus, minus, infinite, standalone });
        }
        problem.grid = CellGrid::build(2.0 * a, d, &near_points);
        problem.near_points = near_points;
        problem.near_cluster_of = near_cluster_of;
        problem.near = near;
        Ok(problem)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.spec.params
    }

    pub fn observable(&self) -> &Observable {
        &self.spec.observable
    }

    /// Upper bound on the number of clusters meeting the target window.
    pub fn cluster_bound(&self) -> usize {
        self.k_bound
    }

    fn start_weights(&self, n: usize, k: usize, s: i64, plus: bool, minus: bool, infinite: bool) -> GroupWeights {
        let lp = n as f64 * self.log_alpha;
        let lr = self.spec.params.log_rho(k, s);
        let (p, m) = match self.spec.kind {
            KernelKind::FiniteVolume => (if minus { NINF } else { lp }, if plus { NINF } else { lr }),
            KernelKind::Infinity => (lp, if infinite { NINF } else { lr }),
            KernelKind::Free => {
                if infinite {
                    (-LN_2, -LN_2)
                } else {
                    (lp, lr)
                }
            }
            KernelKind::PlusMinus(sign) => match (infinite, sign) {
                (true, Spin::Plus) => (0.0, NINF),
                (true, Spin::Minus) => (NINF, 0.0),
                (false, _) => (0.0, lr),
            },
        };
        GroupWeights { plus: p, minus: m }
    }

    fn constraint(&self, plus: bool, minus: bool) -> Constraint {
        match (self.spec.kind, plus, minus) {
            (KernelKind::FiniteVolume, true, true) => Constraint::Conflict,
            (KernelKind::FiniteVolume, true, false) => Constraint::ForcedPlus,
            (KernelKind::FiniteVolume, false, true) => Constraint::ForcedMinus,
            _ => Constraint::Unconstrained,
        }
    }

    /// Draws `ω_B ~ PPP(λ-)` into `scratch.pts`.
    pub(crate) fn draw_points<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut Scratch) {
        scratch.pts.clear();
        let n = poisson_count(self.intensity_volume, rng);
        for _ in 0..n {
            scratch.pts.push(self.spec.target.sample_uniform(rng));
        }
    }

    /// Cluster groups of the points in `scratch.pts`, sorted by smallest point index.
    pub(crate) fn build_groups(&self, scratch: &mut Scratch) -> Result<()> {
        let a = self.spec.params.a();
        let r2 = 4.0 * a * a;
        let n = scratch.pts.len();
        if scratch.node_of.len() < self.near.len() {
            scratch.node_of.resize(self.near.len(), u32::MAX);
        }
        scratch.touched.clear();
        scratch.edges.clear();
        for i in 0..n {
            let p = scratch.pts[i];
            let (node_of, touched, edges) = (&mut scratch.node_of, &mut scratch.touched, &mut scratch.edges);
            self.grid.for_each_near(&p, |j| {
                let j = j as usize;
                if p.dist2(&self.near_points[j]) < r2 {
                    let c = self.near_cluster_of[j] as usize;
                    if node_of[c] == u32::MAX {
                        node_of[c] = touched.len() as u32;
                        touched.push(c as u32);
                    }
                    edges.push((i as u32, n as u32 + node_of[c]));
                }
            });
        }
        let total = n + scratch.touched.len();
        scratch.ds.reset(total);
        for i in 0..n {
            for j in (i + 1)..n {
                if scratch.pts[i].dist2(&scratch.pts[j]) < r2 {
                    scratch.ds.union(i, j);
                }
            }
        }
        for &(i, c) in &scratch.edges {
            scratch.ds.union(i as usize, c as usize);
        }
        scratch.slot.clear();
        scratch.slot.resize(total, u32::MAX);
        scratch.groups.clear();
        let obs = &self.spec.observable.window;
        for i in 0..n {
            let r = scratch.ds.find(i);
            if scratch.slot[r] == u32::MAX {
                scratch.slot[r] = scratch.groups.len() as u32;
                scratch.groups.push(Group {
                    key: i,
                    n: 0,
                    n_obs: 0,
                    weights: GroupWeights { plus: 0.0, minus: 0.0 },
                    norm: 0.0,
                    clusters: 0..0,
                    k: 0,
                    s: 0,
                    plus: false,
                    minus: false,
                    infinite: false,
                });
            }
            let g = &mut scratch.groups[scratch.slot[r] as usize];
            g.n += 1;
            if obs.contains(&scratch.pts[i]) {
                g.n_obs += 1;
            }
        }
        if scratch.groups.len() > self.k_bound {
            for &c in &scratch.touched {
                scratch.node_of[c as usize] = u32::MAX;
            }
            return Err(Error::ClusterBound { found: scratch.groups.len(), bound: self.k_bound });
        }
        // Collect the conditioning clusters of every group contiguously.
        let mut per_group: Vec<Vec<u32>> = vec![Vec::new(); scratch.groups.len()];
        for (t, &c) in scratch.touched.iter().enumerate() {
            let r = scratch.ds.find(n + t);
            let gi = scratch.slot[r] as usize;
            per_group[gi].push(c);
        }
        scratch.group_clusters.clear();
        for (gi, list) in per_group.into_iter().enumerate() {
            let start = scratch.group_clusters.len();
            let g = &mut scratch.groups[gi];
            for c in list {
                let nc = &self.near[c as usize];
                g.k += nc.k;
                g.s += nc.s;
                g.plus |= nc.plus;
                g.minus |= nc.minus;
                g.infinite |= nc.infinite;
                g.norm += nc.standalone.log_factor();
                scratch.group_clusters.push(c);
            }
            g.clusters = start..scratch.group_clusters.len();
        }
        for &c in &scratch.touched {
            scratch.node_of[c as usize] = u32::MAX;
        }
        for gi in 0..scratch.groups.len() {
            let g = &scratch.groups[gi];
            let w = self.start_weights(g.n, g.k, g.s, g.plus, g.minus, g.infinite);
            scratch.groups[gi].weights = w;
        }
        Ok(())
    }

    pub(crate) fn log_weight(&self, scratch: &Scratch) -> f64 {
        let mut l = 0.0;
        for g in &scratch.groups {
            let f = g.weights.log_factor();
            if f == NINF {
                return NINF;
            }
            l += f - g.norm;
        }
        l
    }

    /// `f^Λ(ω_B)`: the observable integrated against the colour kernel.
    pub(crate) fn rb_value(&self, scratch: &Scratch) -> f64 {
        let obs = &self.spec.observable;
        match obs.kind {
            ObservableKind::IndicatorAllPlus => {
                let mut v = 1.0;
                for g in scratch.groups.iter().filter(|g| g.n_obs > 0) {
                    let (pi, qi) = (g.weights.plus_probability(), g.weights.minus_probability());
                    let m = g.n_obs as i32;
                    v *= pi * self.stay.powi(m) + qi * self.flip.powi(m);
                }
                v
            }
            ObservableKind::WindowMagnetization => {
                let total: usize = scratch.groups.iter().map(|g| g.n_obs).sum();
                if total == 0 {
                    return 0.0;
                }
                let s: f64 = scratch.groups.iter().filter(|g| g.n_obs > 0).map(|g| g.n_obs as f64 * g.weights.bias()).sum();
                self.decay * s / total as f64
            }
            _ => {
                let count = scratch.groups.iter().map(|g| g.n_obs).sum();
                obs.grey_value(count).expect("colour-blind observable")
            }
        }
    }

    /// Evaluates a given `ω_B`.
    pub fn evaluate_points(&self, points: &[Point]) -> Result<SampleEval> {
        let mut scratch = Scratch::default();
        self.evaluate_into(points, &mut scratch)
    }

    pub(crate) fn evaluate_into(&self, points: &[Point], scratch: &mut Scratch) -> Result<SampleEval> {
        if points.iter().any(|p| !self.spec.target.contains(p)) {
            return invalid("ω_B must lie in the target window");
        }
        scratch.pts.clear();
        scratch.pts.extend_from_slice(points);
        self.build_groups(scratch)?;
        let log_weight = self.log_weight(scratch);
        let value = if log_weight == NINF { 0.0 } else { self.rb_value(scratch) };
        Ok(SampleEval { log_weight, value })
    }

    /// Per-cluster terms for the clusters meeting a given `ω_B`.
    pub fn cluster_terms(&self, points: &[Point]) -> Result<Vec<ClusterWeightTerm>> {
        let mut scratch = Scratch::default();
        self.evaluate_into(points, &mut scratch)?;
        Ok(scratch
            .groups
            .iter()
            .map(|g| ClusterWeightTerm {
                in_target: g.n,
                constraint: self.constraint(g.plus, g.minus),
                log_rho: self.spec.params.log_rho(g.k, g.s),
                infinite: g.infinite,
            })
            .collect())
    }

    /// The colour kernel `ν` on a grey `ω_B`.
    pub fn nu_kernel(&self, grey_b: &GreyConfiguration) -> Result<NuKernel> {
        let mut scratch = Scratch::default();
        self.evaluate_into(grey_b.points(), &mut scratch)?;
        let n = grey_b.len();
        let mut groups: Vec<(GroupWeights, Vec<usize>)> = scratch.groups.iter().map(|g| (g.weights, Vec::new())).collect();
        for i in 0..n {
            let r = scratch.ds.find(i);
            groups[scratch.slot[r] as usize].1.push(i);
        }
        for (w, _) in &groups {
            if w.log_factor() == NINF {
                return Err(Error::ConditioningInconsistent);
            }
        }
        Ok(NuKernel { stay: self.stay, flip: self.flip, n, groups })
    }

    /// Weighted draw of a time-`t` coloured `ω_B`: points from `PPP(λ-)`, colours from `ν`.
    pub fn weighted_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, ColoredConfiguration)> {
        let mut scratch = Scratch::default();
        self.draw_points(rng, &mut scratch);
        let pts = scratch.pts.clone();
        let grey = GreyConfiguration::from_sampled(self.spec.target.dim(), pts);
        let eval = self.evaluate_into(grey.points(), &mut scratch)?;
        if eval.log_weight == NINF {
            return Ok((NINF, ColoredConfiguration::from_grey(grey.clone(), vec![Spin::Plus; grey.len()])?));
        }
        let nu = self.nu_kernel(&grey)?;
        let spins = nu.sample(rng);
        Ok((eval.log_weight, ColoredConfiguration::from_grey(grey, spins)?))
    }
}

/// Exact colour law of `ω_B` given its clusters: per cluster a start colour
/// with probability from the start weights, then i.i.d. spin flips.
#[derive(Clone, Debug)]
pub struct NuKernel {
    stay: f64,
    flip: f64,
    n: usize,
    groups: Vec<(GroupWeights, Vec<usize>)>,
}

impl NuKernel {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Point indices of each cluster with its start-plus probability.
    pub fn clusters(&self) -> Vec<(f64, Vec<usize>)> {
        self.groups.iter().map(|(w, v)| (w.plus_probability(), v.clone())).collect()
    }

    pub fn probability(&self, spins: &[Spin]) -> f64 {
        assert_eq!(spins.len(), self.n, "one spin per point");
        let mut p = 1.0;
        for (w, idx) in &self.groups {
            let (pi, qi) = (w.plus_probability(), w.minus_probability());
            let (mut from_plus, mut from_minus) = (1.0, 1.0);
            for &i in idx {
                match spins[i] {
                    Spin::Plus => {
                        from_plus *= self.stay;
                        from_minus *= self.flip;
                    }
                    Spin::Minus => {
                        from_plus *= self.flip;
                        from_minus *= self.stay;
                    }
                }
            }
            p *= pi * from_plus + qi * from_minus;
        }
        p
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Spin> {
        let mut out = vec![Spin::Plus; self.n];
        for (w, idx) in &self.groups {
            let start = if rng.random::<f64>() < w.plus_probability() { Spin::Plus } else { Spin::Minus };
            for &i in idx {
                out[i] = if rng.random::<f64>() < self.flip { start.flipped() } else { start };
            }
        }
        out
    }
}
