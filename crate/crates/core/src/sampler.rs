//! Poisson point processes, exact (rejection) and MCMC sampling of the WRM
//! with boundary conditions, and the independent spin-flip evolution.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    color_constraint_ok, decompose_points, CellGrid, ColoredConfiguration, GreyConfiguration, Point, Spin, Window,
    MAX_DIM,
};
use crate::model::{ModelParams, Time};
use crate::numeric::lse2;

/// Boundary condition outside a sampling window.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCondition {
    AllPlus,
    AllMinus,
    Empty,
    Explicit(ColoredConfiguration),
}

impl BoundaryCondition {
    /// Colored points representing the condition. `±` become a dense grid of
    /// spacing `a/2` filling the shell of points at distance `(0, 2a]` from the window.
    pub fn materialize(&self, window: &Window, a: f64) -> Result<ColoredConfiguration> {
        match self {
            BoundaryCondition::AllPlus => Ok(shell_grid(window, a, Spin::Plus)),
            BoundaryCondition::AllMinus => Ok(shell_grid(window, a, Spin::Minus)),
            BoundaryCondition::Empty => Ok(ColoredConfiguration::empty(window.dim())),
            BoundaryCondition::Explicit(c) => {
                if c.dim() != window.dim() {
                    return invalid("boundary configuration dimension differs from the window");
                }
                if !color_constraint_ok(c, None, a) {
                    return invalid("explicit boundary violates the colour constraint");
                }
                Ok(c.clone())
            }
        }
    }
}

/// Grid points of spacing `a/2` at distance `(0, width]` outside `window`.
pub fn shell_points(window: &Window, a: f64, width: f64) -> Vec<Point> {
    let d = window.dim();
    let h = 0.5 * a;
    let (lo, hi) = window.bounds();
    let lo: Vec<f64> = lo.coords().iter().map(|x| x - width).collect();
    let hi: Vec<f64> = hi.coords().iter().map(|x| x + width).collect();
    let counts: Vec<i64> = (0..d).map(|k| ((hi[k] - lo[k]) / h).floor() as i64).collect();
    let mut out = Vec::new();
    let mut idx = [0i64; MAX_DIM];
    loop {
        let c: Vec<f64> = (0..d).map(|k| lo[k] + idx[k] as f64 * h).collect();
        let p = Point::new(&c).expect("finite grid point");
        let dist = window.distance_to(&p);
        if dist > 0.0 && dist <= width {
            out.push(p);
        }
        let mut k = 0;
        loop {
            if k == d {
                return out;
            }
            idx[k] += 1;
            if idx[k] <= counts[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn shell_grid(window: &Window, a: f64, spin: Spin) -> ColoredConfiguration {
    let pts = shell_points(window, a, 2.0 * a);
    ColoredConfiguration::uniform(GreyConfiguration::from_sampled(window.dim(), pts), spin)
}

/// Poisson point process of the given intensity in `window`.
pub fn sample_ppp<R: Rng + ?Sized>(window: &Window, intensity: f64, rng: &mut R) -> GreyConfiguration {
    let pts = sample_ppp_points(window, intensity, rng);
    GreyConfiguration::from_sampled(window.dim(), pts)
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    n as usize
}

pub(crate) fn sample_ppp_points<R: Rng + ?Sized>(window: &Window, intensity: f64, rng: &mut R) -> Vec<Point> {
    let n = poisson_count(intensity * window.volume(), rng);
    (0..n).map(|_| window.sample_uniform(rng)).collect()
}

/// Log of the grey-configuration colour weight `Π_C (u+^{|C|} + u-^{|C|})`
/// over clusters of `grey ∪ boundary` that contain grey points. Clusters
/// touching coloured boundary points keep only the compatible term.
pub fn color_weight_grey(grey: &GreyConfiguration, boundary: Option<&ColoredConfiguration>, params: &ModelParams) -> f64 {
    let n = grey.len();
    let mut pts = grey.points().to_vec();
    let mut bspins: Vec<Spin> = Vec::new();
    if let Some(b) = boundary {
        pts.extend_from_slice(b.points());
        bspins.extend_from_slice(b.spins());
    }
    let dec = decompose_points(&pts, grey.dim(), params.a(), None);
    let (lu_p, lu_m) = (params.u_plus().ln(), params.u_minus().ln());
    let mut total = 0.0;
    for c in &dec.clusters {
        let free = c.indices.iter().filter(|&&i| i < n).count();
        if free == 0 {
            continue;
        }
        let plus = c.indices.iter().any(|&i| i >= n && bspins[i - n] == Spin::Plus);
        let minus = c.indices.iter().any(|&i| i >= n && bspins[i - n] == Spin::Minus);
        let k = free as f64;
        total += match (plus, minus) {
            (true, true) => f64::NEG_INFINITY,
            (true, false) => k * lu_p,
            (false, true) => k * lu_m,
            (false, false) => lse2(k * lu_p, k * lu_m),
        };
    }
    total
}

/// Accepted draw of the rejection sampler.
#[derive(Clone, Debug)]
pub struct ExactDraw {
    pub config: ColoredConfiguration,
    pub attempts: u64,
}

/// Exact draw from the WRM in `window` given `bc`: grey PPP(λ+ + λ-), i.i.d.
/// colours with `P(+) = u+`, accepted iff the colour constraint holds.
pub fn sample_wrm_exact<R: Rng + ?Sized>(
    window: &Window,
    params: &ModelParams,
    bc: &BoundaryCondition,
    rng: &mut R,
    max_attempts: u64,
) -> Result<ExactDraw> {
    let boundary = bc.materialize(window, params.a())?;
    sample_wrm_exact_with(window, params, &boundary, rng, max_attempts)
}

pub(crate) fn sample_wrm_exact_with<R: Rng + ?Sized>(
    window: &Window,
    params: &ModelParams,
    boundary: &ColoredConfiguration,
    rng: &mut R,
    max_attempts: u64,
) -> Result<ExactDraw> {
    let up = params.u_plus();
    for attempt in 1..=max_attempts {
        let pts = sample_ppp_points(window, params.total_intensity(), rng);
        let spins: Vec<Spin> = pts.iter().map(|_| if rng.random::<f64>() < up { Spin::Plus } else { Spin::Minus }).collect();
        let cfg = ColoredConfiguration::from_grey(GreyConfiguration::from_sampled(window.dim(), pts), spins)?;
        if color_constraint_ok(&cfg, Some(boundary), params.a()) {
            return Ok(ExactDraw { config: cfg, attempts: attempt });
        }
    }
    Err(Error::RejectionExhausted { attempts: max_attempts, acceptance_rate: 0.0 })
}

/// Chain schedule, in sweeps of `max(1, ⌈(λ+ + λ-)|Λ|⌉)` moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcSchedule {
    pub burn_in: u64,
    pub thinning: u64,
    pub n_samples: usize,
}

impl Default for McmcSchedule {
    fn default() -> Self {
        Self { burn_in: 100_000, thinning: 1, n_samples: 1000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MoveStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    pub birth: MoveStats,
    pub death: MoveStats,
    pub flip: MoveStats,
    pub sweeps: u64,
    pub moves_per_sweep: u64,
}

/// Birth acceptance ratio `λ_c |Λ| / (n_c + 1)` for a χ-compatible proposal,
/// where `n_c` counts current points of colour `c`.
pub fn birth_ratio(params: &ModelParams, volume: f64, color: Spin, n_same: usize) -> f64 {
    params.intensity(color) * volume / (n_same as f64 + 1.0)
}

/// Metropolis-Hastings chain on coloured configurations in a window with
/// birth, death and whole-cluster colour-flip moves.
#[derive(Clone, Debug)]
pub struct McmcChain {
    window: Window,
    volume: f64,
    params: ModelParams,
    boundary: ColoredConfiguration,
    bgrid: CellGrid,
    points: Vec<Point>,
    spins: Vec<Spin>,
    grid: CellGrid,
    by_color: [Vec<usize>; 2],
    pos_in_color: Vec<usize>,
    diag: McmcDiagnostics,
    stack: Vec<usize>,
    mark: Vec<u32>,
    epoch: u32,
}

/// Largest cluster the flip move will try to recolour.
pub const FLIP_CLUSTER_CAP: usize = 64;

fn ci(s: Spin) -> usize {
    match s {
        Spin::Minus => 0,
        Spin::Plus => 1,
    }
}

impl McmcChain {
    pub fn new(window: &Window, params: &ModelParams, bc: &BoundaryCondition) -> Result<Self> {
        if window.dim() != params.dim() {
            return invalid("window dimension differs from the model dimension");
        }
        let boundary = bc.materialize(window, params.a())?;
        Self::with_boundary(window, params, boundary)
    }

    pub fn with_boundary(window: &Window, params: &ModelParams, boundary: ColoredConfiguration) -> Result<Self> {
        let side = 2.0 * params.a();
        let bgrid = CellGrid::build(side, window.dim(), boundary.points());
        let moves = (params.total_intensity() * window.volume()).ceil().max(1.0) as u64;
        Ok(Self {
            window: window.clone(),
            volume: window.volume(),
            params: params.clone(),
            boundary,
            bgrid,
            points: Vec::new(),
            spins: Vec::new(),
            grid: CellGrid::new(side, window.dim()),
            by_color: [Vec::new(), Vec::new()],
            pos_in_color: Vec::new(),
            diag: McmcDiagnostics { moves_per_sweep: moves, ..Default::default() },
            stack: Vec::new(),
            mark: Vec::new(),
            epoch: 0,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn boundary(&self) -> &ColoredConfiguration {
        &self.boundary
    }

    pub fn diagnostics(&self) -> McmcDiagnostics {
        self.diag
    }

    pub fn state(&self) -> ColoredConfiguration {
        ColoredConfiguration::from_grey(GreyConfiguration::from_sampled(self.window.dim(), self.points.clone()), self.spins.clone())
            .expect("lengths match")
    }

    fn pick_color<R: Rng + ?Sized>(&self, rng: &mut R) -> Spin {
        if rng.random::<f64>() < self.params.u_plus() {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }

    fn conflicts(&self, p: &Point, s: Spin) -> bool {
        let r2 = 4.0 * self.params.a() * self.params.a();
        let mut bad = false;
        self.grid.for_each_near(p, |j| {
            let j = j as usize;
            if self.spins[j] != s && p.dist2(&self.points[j]) < r2 {
                bad = true;
            }
        });
        if bad {
            return true;
        }
        self.bgrid.for_each_near(p, |j| {
            let j = j as usize;
            if self.boundary.spins()[j] != s && p.dist2(&self.boundary.points()[j]) < r2 {
                bad = true;
            }
        });
        bad
    }

    fn insert(&mut self, p: Point, s: Spin) {
        let i = self.points.len();
        self.points.push(p);
        self.spins.push(s);
        self.grid.insert(&p, i as u32);
        self.pos_in_color.push(self.by_color[ci(s)].len());
        self.by_color[ci(s)].push(i);
    }

    fn unlink_color(&mut self, i: usize) {
        let c = ci(self.spins[i]);
        let p = self.pos_in_color[i];
        self.by_color[c].swap_remove(p);
        if p < self.by_color[c].len() {
            let moved = self.by_color[c][p];
            self.pos_in_color[moved] = p;
        }
    }

    fn remove(&mut self, i: usize) {
        self.unlink_color(i);
        self.grid.remove(&self.points[i], i as u32);
        let last = self.points.len() - 1;
        if i != last {
            self.grid.relabel(&self.points[last], last as u32, i as u32);
            let c = ci(self.spins[last]);
            self.by_color[c][self.pos_in_color[last]] = i;
        }
        self.points.swap_remove(i);
        self.spins.swap_remove(i);
        self.pos_in_color.swap_remove(i);
    }

    fn recolor(&mut self, i: usize, s: Spin) {
        self.unlink_color(i);
        self.spins[i] = s;
        self.pos_in_color[i] = self.by_color[ci(s)].len();
        self.by_color[ci(s)].push(i);
    }

    /// One Metropolis-Hastings move (birth, death or cluster flip with equal probability).
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let u: f64 = rng.random();
        if u < 1.0 / 3.0 {
            self.birth(rng);
        } else if u < 2.0 / 3.0 {
            self.death(rng);
        } else {
            self.flip(rng);
        }
    }

    fn birth<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.diag.birth.proposed += 1;
        let s = self.pick_color(rng);
        let p = self.window.sample_uniform(rng);
        if self.conflicts(&p, s) {
            return;
        }
        let ratio = birth_ratio(&self.params, self.volume, s, self.by_color[ci(s)].len());
        if ratio >= 1.0 || rng.random::<f64>() < ratio {
            self.insert(p, s);
            self.diag.birth.accepted += 1;
        }
    }

    fn death<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.diag.death.proposed += 1;
        let s = self.pick_color(rng);
        let n = self.by_color[ci(s)].len();
        if n == 0 {
            return;
        }
        let k = rng.random_range(0..n);
        let ratio = n as f64 / (self.params.intensity(s) * self.volume);
        if ratio >= 1.0 || rng.random::<f64>() < ratio {
            let i = self.by_color[ci(s)][k];
            self.remove(i);
            self.diag.death.accepted += 1;
        }
    }

    /// Cluster of point `start` among the chain's points, or `None` once it exceeds `cap` points.
    fn collect_cluster(&mut self, start: usize, cap: usize) -> Option<Vec<usize>> {
        let r2 = 4.0 * self.params.a() * self.params.a();
        if self.mark.len() < self.points.len() {
            self.mark.resize(self.points.len(), 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        let mut out = vec![start];
        self.mark[start] = epoch;
        self.stack.clear();
        self.stack.push(start);
        while let Some(i) = self.stack.pop() {
            let p = self.points[i];
            let (points, mark, stack) = (&self.points, &mut self.mark, &mut self.stack);
            self.grid.for_each_near(&p, |j| {
                let j = j as usize;
                if mark[j] != epoch && p.dist2(&points[j]) < r2 {
                    mark[j] = epoch;
                    out.push(j);
                    stack.push(j);
                }
            });
            if out.len() > cap {
                return None;
            }
        }
        Some(out)
    }

    fn flip<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.diag.flip.proposed += 1;
        if self.points.is_empty() {
            return;
        }
        let start = rng.random_range(0..self.points.len());
        // Clusters above the cap are never flipped. The cap only looks at the
        // cluster, which a flip leaves unchanged, so the move stays reversible.
        let Some(cluster) = self.collect_cluster(start, FLIP_CLUSTER_CAP) else {
            return;
        };
        let r2 = 4.0 * self.params.a() * self.params.a();
        let touches_boundary = cluster.iter().any(|&i| {
            let p = self.points[i];
            let mut hit = false;
            self.bgrid.for_each_near(&p, |j| {
                if p.dist2(&self.boundary.points()[j as usize]) < r2 {
                    hit = true;
                }
            });
            hit
        });
        if touches_boundary {
            return;
        }
        let s = self.spins[start];
        let t = s.flipped();
        let log_ratio = cluster.len() as f64 * (self.params.intensity(t) / self.params.intensity(s)).ln();
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            for &i in &cluster {
                self.recolor(i, t);
            }
            self.diag.flip.accepted += 1;
        }
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for _ in 0..self.diag.moves_per_sweep {
            self.step(rng);
        }
        self.diag.sweeps += 1;
    }

    /// Hard check of the colour constraint on the current state.
    pub fn assert_valid(&self) {
        assert!(
            color_constraint_ok(&self.state(), Some(&self.boundary), self.params.a()),
            "WRM chain state violates the colour constraint"
        );
    }
}

/// Output of [`sample_wrm_mcmc`].
#[derive(Clone, Debug)]
pub struct McmcRun {
    pub samples: Vec<ColoredConfiguration>,
    pub diagnostics: McmcDiagnostics,
}

/// Runs a chain from the empty configuration and returns thinned samples.
pub fn sample_wrm_mcmc<R: Rng + ?Sized>(
    window: &Window,
    params: &ModelParams,
    bc: &BoundaryCondition,
    schedule: &McmcSchedule,
    rng: &mut R,
) -> Result<McmcRun> {
    if schedule.thinning == 0 || schedule.n_samples == 0 {
        return invalid("schedule must have positive thinning and sample count");
    }
    let mut chain = McmcChain::new(window, params, bc)?;
    for _ in 0..schedule.burn_in {
        chain.sweep(rng);
    }
    let mut samples = Vec::with_capacity(schedule.n_samples);
    for _ in 0..schedule.n_samples {
        for _ in 0..schedule.thinning {
            chain.sweep(rng);
        }
        chain.assert_valid();
        samples.push(chain.state());
    }
    Ok(McmcRun { samples, diagnostics: chain.diagnostics() })
}

/// Independent spin flips: each spin flips with probability `½(1 - e^{-2t})`; positions are untouched.
pub fn evolve_spinflip<R: Rng + ?Sized>(cfg: &ColoredConfiguration, t: Time, rng: &mut R) -> Result<ColoredConfiguration> {
    t.validate_nonnegative()?;
    let p = t.flip_probability();
    let spins = cfg
        .spins()
        .iter()
        .map(|&s| if p > 0.0 && rng.random::<f64>() < p { s.flipped() } else { s })
        .collect();
    ColoredConfiguration::from_grey(cfg.grey().clone(), spins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn colorings_brute(grey: &GreyConfiguration, boundary: Option<&ColoredConfiguration>, params: &ModelParams) -> f64 {
        let n = grey.len();
        let mut total = 0.0;
        for mask in 0u32..(1 << n) {
            let spins: Vec<Spin> = (0..n).map(|i| if mask >> i & 1 == 1 { Spin::Plus } else { Spin::Minus }).collect();
            let cfg = ColoredConfiguration::from_grey(grey.clone(), spins.clone()).unwrap();
            if color_constraint_ok(&cfg, boundary, params.a()) {
                total += spins.iter().map(|&s| params.u(s)).product::<f64>();
            }
        }
        total
    }

    fn line(xs: &[f64]) -> GreyConfiguration {
        GreyConfiguration::from_sampled(1, xs.iter().map(|&x| Point::new(&[x]).unwrap()).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn color_weight_matches_enumeration(
            d in 1usize..=2,
            raw in prop::collection::vec((0.0f64..6.0, 0.0f64..6.0), 0..=12),
            lp in 0.1f64..3.0,
            lm in 0.1f64..3.0,
            with_boundary in any::<bool>(),
        ) {
            let params = ModelParams::new(d, 0.5, lp, lm, Time::Infinite).unwrap();
            let pts: Vec<Point> = raw.iter().map(|&(x, y)| Point::new(&[x, y][..d]).unwrap()).collect();
            let grey = GreyConfiguration::from_sampled(d, pts);
            let boundary = with_boundary.then(|| {
                let b = vec![Point::new(&[-0.5, 3.0][..d]).unwrap(), Point::new(&[6.5, 3.0][..d]).unwrap()];
                ColoredConfiguration::new(d, b, vec![Spin::Plus, Spin::Minus]).unwrap()
            });
            let got = color_weight_grey(&grey, boundary.as_ref(), &params).exp();
            let want = colorings_brute(&grey, boundary.as_ref(), &params);
            if want == 0.0 {
                prop_assert_eq!(got, 0.0);
            } else {
                prop_assert!((got - want).abs() <= 1e-12 * want, "{} vs {}", got, want);
            }
        }

        #[test]
        fn evolution_keeps_positions(xs in prop::collection::vec(-50.0f64..50.0, 0..40), t in 0.0f64..3.0, seed in any::<u64>()) {
            let grey = line(&xs);
            let cfg = ColoredConfiguration::uniform(grey, Spin::Plus);
            let out = evolve_spinflip(&cfg, Time::Finite(t), &mut RngStream::new(seed, 0).generator()).unwrap();
            let same = out.points().iter().zip(cfg.points()).all(|(a, b)| a.coords().iter().zip(b.coords()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert!(same);
        }
    }

    #[test]
    fn evolution_magnetization_decays() {
        let n = 10_000;
        let grey = line(&(0..n).map(|k| k as f64 * 0.1).collect::<Vec<_>>());
        let cfg = ColoredConfiguration::uniform(grey, Spin::Plus);
        for t in [0.2, 0.5, 1.0, 2.0] {
            let out = evolve_spinflip(&cfg, Time::Finite(t), &mut RngStream::new(11, 0).generator()).unwrap();
            let m = crate::model::magnetization(&out).unwrap();
            let e = (-2.0 * t).exp();
            let sigma = ((1.0 - e * e) / n as f64).sqrt();
            assert!((m - e).abs() < 4.0 * sigma, "t={t}: {m} vs {e}");
        }
        let out = evolve_spinflip(&cfg, Time::Finite(0.0), &mut RngStream::new(1, 0).generator()).unwrap();
        assert_eq!(out, cfg);
        assert!(evolve_spinflip(&cfg, Time::Finite(-1.0), &mut RngStream::new(1, 0).generator()).is_err());
    }

    #[test]
    fn shell_surrounds_window() {
        let w = Window::centered_cube(2, 2.0).unwrap();
        let pts = shell_points(&w, 1.0, 2.0);
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| !w.contains(p) && w.distance_to(p) <= 2.0));
        let bc = BoundaryCondition::AllPlus.materialize(&w, 1.0).unwrap();
        assert!(bc.spins().iter().all(|&s| s == Spin::Plus));
    }

    #[test]
    fn conflicting_explicit_boundary_rejected() {
        let b = ColoredConfiguration::new(1, vec![Point::new(&[5.0]).unwrap(), Point::new(&[5.5]).unwrap()], vec![Spin::Plus, Spin::Minus]).unwrap();
        let w = Window::interval(0.0, 4.0).unwrap();
        assert!(BoundaryCondition::Explicit(b).materialize(&w, 0.5).is_err());
    }

    #[test]
    fn ppp_count_mean() {
        let w = Window::centered_cube(2, 5.0).unwrap();
        let mut g = RngStream::new(5, 0).generator();
        let m = 400;
        let total: usize = (0..m).map(|_| sample_ppp(&w, 0.5, &mut g).len()).sum();
        let mean = total as f64 / m as f64;
        assert!((mean - 50.0).abs() < 4.0 * (50.0 / m as f64).sqrt());
    }

    /// (empty-B indicator, point count, magnetization with 0 for the empty window).
    fn stats(c: &ColoredConfiguration, b: &Window) -> [f64; 3] {
        let empty = c.points().iter().all(|p| !b.contains(p));
        let m = if c.is_empty() { 0.0 } else { c.spin_sum() as f64 / c.len() as f64 };
        [empty as u8 as f64, c.len() as f64, m]
    }

    fn mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let size = n / batches;
        let bm: Vec<f64> = (0..batches).map(|k| xs[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
        let var = bm.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (mean, (var / batches as f64).sqrt())
    }

    #[test]
    fn exact_and_mcmc_agree() {
        let params = ModelParams::new(1, 0.5, 1.0, 0.5, Time::Infinite).unwrap();
        let w = Window::interval(-2.0, 2.0).unwrap();
        let b = Window::interval(-0.5, 0.5).unwrap();
        for (k, bc) in [BoundaryCondition::Empty, BoundaryCondition::AllMinus].into_iter().enumerate() {
            let n = 20_000;
            let mut g = RngStream::new(3, k as u64).generator();
            let exact: Vec<[f64; 3]> = (0..n).map(|_| {
                let d = sample_wrm_exact(&w, &params, &bc, &mut g, 100_000).unwrap();
                let boundary = bc.materialize(&w, params.a()).unwrap();
                assert!(color_constraint_ok(&d.config, Some(&boundary), params.a()));
                stats(&d.config, &b)
            }).collect();
            let sched = McmcSchedule { burn_in: 500, thinning: 10, n_samples: n };
            let run = sample_wrm_mcmc(&w, &params, &bc, &sched, &mut RngStream::new(3, 100 + k as u64).generator()).unwrap();
            let chain: Vec<[f64; 3]> = run.samples.iter().map(|c| stats(c, &b)).collect();
            for q in 0..3 {
                let (me, se) = mean_se(&exact.iter().map(|s| s[q]).collect::<Vec<_>>(), 50);
                let (mc, sc) = mean_se(&chain.iter().map(|s| s[q]).collect::<Vec<_>>(), 50);
                assert!((me - mc).abs() < 4.0 * se.hypot(sc), "bc {k} stat {q}: exact {me}±{se} chain {mc}±{sc}");
            }
        }
    }

    #[test]
    fn mcmc_is_deterministic_and_valid() {
        let params = ModelParams::symmetric(2, 0.5, 1.0, Time::Infinite).unwrap();
        let w = Window::centered_cube(2, 3.0).unwrap();
        let sched = McmcSchedule { burn_in: 20, thinning: 2, n_samples: 30 };
        let run = |s| sample_wrm_mcmc(&w, &params, &BoundaryCondition::AllPlus, &sched, &mut RngStream::new(s, 0).generator()).unwrap();
        let (r1, r2) = (run(9), run(9));
        assert_eq!(r1.samples, r2.samples);
        assert_eq!(r1.diagnostics, r2.diagnostics);
        let boundary = BoundaryCondition::AllPlus.materialize(&w, 0.5).unwrap();
        assert!(r1.samples.iter().all(|c| color_constraint_ok(c, Some(&boundary), 0.5)));
        assert_ne!(r1.samples, run(10).samples);
    }

    #[test]
    fn birth_ratio_formula() {
        let p = ModelParams::new(2, 1.0, 3.0, 1.0, Time::Infinite).unwrap();
        assert_eq!(birth_ratio(&p, 10.0, Spin::Plus, 4), 6.0);
        assert_eq!(birth_ratio(&p, 10.0, Spin::Minus, 0), 10.0);
    }
}
