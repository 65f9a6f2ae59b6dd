//! Points, windows, configurations, set distances and the disc-graph cluster
//! decomposition (two points are adjacent iff `|x - y| < 2a`).

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 3;

/// A point in `R^d`, `1 <= d <= 3`. Unused trailing coordinates are zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    c: [f64; MAX_DIM],
    d: u8,
}

impl Point {
    pub fn new(coords: &[f64]) -> Result<Self> {
        let d = coords.len();
        if d == 0 || d > MAX_DIM {
            return invalid(format!("point dimension {d} outside 1..=3"));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return invalid("point coordinates must be finite");
        }
        let mut c = [0.0; MAX_DIM];
        c[..d].copy_from_slice(coords);
        Ok(Self { c, d: d as u8 })
    }

    pub fn origin(d: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&d));
        Self { c: [0.0; MAX_DIM], d: d as u8 }
    }

    /// The point `value * e_axis`.
    pub fn on_axis(d: usize, axis: usize, value: f64) -> Self {
        let mut p = Self::origin(d);
        p.c[axis] = value;
        p
    }

    pub(crate) fn from_array(c: [f64; MAX_DIM], d: usize) -> Self {
        Self { c, d: d as u8 }
    }

    pub fn dim(&self) -> usize {
        self.d as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.c[..self.d as usize]
    }

    pub(crate) fn raw(&self) -> &[f64; MAX_DIM] {
        &self.c
    }

    #[inline]
    pub fn dist2(&self, o: &Point) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d as usize {
            let e = self.c[k] - o.c[k];
            s += e * e;
        }
        s
    }

    #[inline]
    pub fn dist(&self, o: &Point) -> f64 {
        self.dist2(o).sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.dist(&Point::origin(self.dim()))
    }

    pub fn translated(&self, v: &[f64]) -> Point {
        let mut p = *self;
        for (k, x) in v.iter().enumerate().take(self.dim()) {
            p.c[k] += x;
        }
        p
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::new(&v).map_err(D::Error::custom)
    }
}

/// Spin value of a coloured point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

impl Spin {
    pub fn value(self) -> i64 {
        match self {
            Spin::Plus => 1,
            Spin::Minus => -1,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Plus => Spin::Minus,
            Spin::Minus => Spin::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Spin::Plus => '+',
            Spin::Minus => '-',
        }
    }

    pub fn from_symbol(s: &str) -> Option<Spin> {
        match s {
            "+" => Some(Spin::Plus),
            "-" => Some(Spin::Minus),
            _ => None,
        }
    }
}

/// Volume of the Euclidean ball of radius `r` in dimension `d`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => PI * r * r,
        3 => 4.0 / 3.0 * PI * r * r * r,
        _ => panic!("dimension {d} unsupported"),
    }
}

/// A bounded observation window: a closed ball or a closed axis-parallel box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    Ball { center: Point, radius: f64 },
    Box { lower: Point, upper: Point },
}

impl Window {
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        let w = Window::Ball { center, radius };
        w.validate()?;
        Ok(w)
    }

    pub fn cuboid(lower: Point, upper: Point) -> Result<Self> {
        let w = Window::Box { lower, upper };
        w.validate()?;
        Ok(w)
    }

    /// The cube `[-h, h]^d`.
    pub fn centered_cube(d: usize, h: f64) -> Result<Self> {
        let lo = Point::new(&vec![-h; d])?;
        let hi = Point::new(&vec![h; d])?;
        Self::cuboid(lo, hi)
    }

    /// The interval `[lo, hi]` in `d = 1`.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::cuboid(Point::new(&[lo])?, Point::new(&[hi])?)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Window::Ball { radius, .. } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return invalid("ball radius must be positive and finite");
                }
            }
            Window::Box { lower, upper } => {
                if lower.dim() != upper.dim() {
                    return invalid("box corners differ in dimension");
                }
                if lower.coords().iter().zip(upper.coords()).any(|(l, u)| !(u > l)) {
                    return invalid("box upper corner must strictly dominate the lower corner");
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Window::Ball { center, .. } => center.dim(),
            Window::Box { lower, .. } => lower.dim(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Window::Ball { center, radius } => ball_volume(center.dim(), *radius),
            Window::Box { lower, upper } => {
                lower.coords().iter().zip(upper.coords()).map(|(l, u)| u - l).product()
            }
        }
    }

    /// Volume of the closed `r`-dilation (Steiner formula).
    pub fn dilated_volume(&self, r: f64) -> f64 {
        match self {
            Window::Ball { center, radius } => ball_volume(center.dim(), radius + r),
            Window::Box { lower, upper } => {
                let s: Vec<f64> = lower.coords().iter().zip(upper.coords()).map(|(l, u)| u - l).collect();
                match s.len() {
                    1 => s[0] + 2.0 * r,
                    2 => s[0] * s[1] + 2.0 * (s[0] + s[1]) * r + PI * r * r,
                    _ => {
                        let area = 2.0 * (s[0] * s[1] + s[1] * s[2] + s[0] * s[2]);
                        s[0] * s[1] * s[2] + area * r + PI * (s[0] + s[1] + s[2]) * r * r + 4.0 / 3.0 * PI * r * r * r
                    }
                }
            }
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Window::Ball { center, radius } => center.dist2(p) <= radius * radius,
            Window::Box { lower, upper } => {
                (0..p.dim()).all(|k| p.raw()[k] >= lower.raw()[k] && p.raw()[k] <= upper.raw()[k])
            }
        }
    }

    /// Euclidean distance from `p` to the window (zero inside).
    pub fn distance_to(&self, p: &Point) -> f64 {
        match self {
            Window::Ball { center, radius } => (center.dist(p) - radius).max(0.0),
            Window::Box { lower, upper } => {
                let mut s = 0.0;
                for k in 0..p.dim() {
                    let x = p.raw()[k];
                    let e = (lower.raw()[k] - x).max(x - upper.raw()[k]).max(0.0);
                    s += e * e;
                }
                s.sqrt()
            }
        }
    }

    /// Distance from `p` to the complement of the window (zero outside).
    pub fn depth(&self, p: &Point) -> f64 {
        match self {
            Window::Ball { center, radius } => (radius - center.dist(p)).max(0.0),
            Window::Box { lower, upper } => {
                let mut m = f64::INFINITY;
                for k in 0..p.dim() {
                    let x = p.raw()[k];
                    m = m.min(x - lower.raw()[k]).min(upper.raw()[k] - x);
                }
                m.max(0.0)
            }
        }
    }

    /// Axis-parallel bounding box.
    pub fn bounds(&self) -> (Point, Point) {
        match self {
            Window::Ball { center, radius } => {
                let d = center.dim();
                let lo = center.translated(&vec![-radius; d]);
                let hi = center.translated(&vec![*radius; d]);
                (lo, hi)
            }
            Window::Box { lower, upper } => (*lower, *upper),
        }
    }

    fn corners(&self) -> Vec<Point> {
        let (lo, hi) = self.bounds();
        let d = lo.dim();
        (0..1usize << d)
            .map(|mask| {
                let mut c = [0.0; MAX_DIM];
                for (k, ck) in c.iter_mut().enumerate().take(d) {
                    *ck = if mask >> k & 1 == 1 { hi.raw()[k] } else { lo.raw()[k] };
                }
                Point::from_array(c, d)
            })
            .collect()
    }

    /// True iff `other` is a subset of `self`.
    pub fn contains_window(&self, other: &Window) -> bool {
        match (self, other) {
            (Window::Ball { center, radius }, Window::Ball { center: c2, radius: r2 }) => {
                center.dist(c2) + r2 <= *radius
            }
            (Window::Ball { .. }, Window::Box { .. }) => other.corners().iter().all(|p| self.contains(p)),
            (Window::Box { .. }, _) => {
                let (lo, hi) = other.bounds();
                self.contains(&lo) && self.contains(&hi)
            }
        }
    }

    /// Uniform point in the window.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let d = self.dim();
        let (lo, hi) = self.bounds();
        loop {
            let mut c = [0.0; MAX_DIM];
            for (k, ck) in c.iter_mut().enumerate().take(d) {
                let u: f64 = rng.random();
                *ck = lo.raw()[k] + u * (hi.raw()[k] - lo.raw()[k]);
            }
            let p = Point::from_array(c, d);
            if matches!(self, Window::Box { .. }) || self.contains(&p) {
                return p;
            }
        }
    }
}

/// Finite proxy for infinite clusters: a cluster touches the horizon iff one of
/// its points lies within `shell` of the ambient box boundary (or outside it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub ambient: Window,
    pub shell: f64,
}

impl Horizon {
    pub fn new(ambient: Window, shell: f64) -> Result<Self> {
        if !(shell > 0.0) {
            return invalid("horizon shell width must be positive");
        }
        Ok(Self { ambient, shell })
    }

    pub fn touches(&self, p: &Point) -> bool {
        self.ambient.depth(p) <= self.shell
    }
}

/// Target region for [`connects`].
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Inside(Window),
    Outside(Window),
    Horizon(Horizon),
}

impl Region {
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Region::Inside(w) => w.contains(p),
            Region::Outside(w) => !w.contains(p),
            Region::Horizon(h) => h.touches(p),
        }
    }
}

fn check_distinct(points: &[Point]) -> Result<()> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let key = |i: &usize| points[*i].raw().map(f64::to_bits);
    idx.sort_unstable_by(|a, b| {
        let (pa, pb) = (points[*a].raw(), points[*b].raw());
        pa.iter().zip(pb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in idx.windows(2) {
        if key(&w[0]) == key(&w[1]) {
            return invalid(format!("points {} and {} coincide", w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    Ok(())
}

/// A finite set of pairwise distinct points in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GreyConfiguration {
    dim: usize,
    points: Vec<Point>,
}

impl GreyConfiguration {
    pub fn new(dim: usize, points: Vec<Point>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return invalid(format!("dimension {dim} outside 1..=3"));
        }
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return invalid(format!("point of dimension {} in a {dim}-dimensional configuration", p.dim()));
        }
        check_distinct(&points)?;
        Ok(Self { dim, points })
    }

    /// Skips the distinctness check; for continuous samples where ties have probability zero.
    pub(crate) fn from_sampled(dim: usize, points: Vec<Point>) -> Self {
        Self { dim, points }
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, points: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }
}

/// A grey configuration with one spin per point.
#[derive(Clone, Debug, PartialEq)]
pub struct ColoredConfiguration {
    grey: GreyConfiguration,
    spins: Vec<Spin>,
}

impl ColoredConfiguration {
    pub fn new(dim: usize, points: Vec<Point>, spins: Vec<Spin>) -> Result<Self> {
        if points.len() != spins.len() {
            return invalid(format!("{} points but {} spins", points.len(), spins.len()));
        }
        Ok(Self { grey: GreyConfiguration::new(dim, points)?, spins })
    }

    pub fn from_grey(grey: GreyConfiguration, spins: Vec<Spin>) -> Result<Self> {
        if grey.len() != spins.len() {
            return invalid(format!("{} points but {} spins", grey.len(), spins.len()));
        }
        Ok(Self { grey, spins })
    }

    pub fn uniform(grey: GreyConfiguration, spin: Spin) -> Self {
        let spins = vec![spin; grey.len()];
        Self { grey, spins }
    }

    pub fn empty(dim: usize) -> Self {
        Self { grey: GreyConfiguration::empty(dim), spins: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.grey.dim
    }

    pub fn grey(&self) -> &GreyConfiguration {
        &self.grey
    }

    pub fn points(&self) -> &[Point] {
        &self.grey.points
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spin_sum(&self) -> i64 {
        self.spins.iter().map(|s| s.value()).sum()
    }

    /// Sub-configuration of the points satisfying `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&Point, Spin) -> bool) -> ColoredConfiguration {
        let (mut pts, mut sp) = (Vec::new(), Vec::new());
        for (p, s) in self.points().iter().zip(&self.spins) {
            if keep(p, *s) {
                pts.push(*p);
                sp.push(*s);
            }
        }
        ColoredConfiguration { grey: GreyConfiguration { dim: self.dim(), points: pts }, spins: sp }
    }

    /// Disjoint union; fails if a point appears in both.
    pub fn union(&self, other: &ColoredConfiguration) -> Result<ColoredConfiguration> {
        if self.dim() != other.dim() {
            return invalid("union of configurations of different dimension");
        }
        let mut pts = self.points().to_vec();
        pts.extend_from_slice(other.points());
        let mut sp = self.spins.clone();
        sp.extend_from_slice(&other.spins);
        ColoredConfiguration::new(self.dim(), pts, sp)
    }

    pub fn with_spins(&self, spin: Spin) -> ColoredConfiguration {
        ColoredConfiguration::uniform(self.grey.clone(), spin)
    }
}

/// Union-find with path halving and union by size.
#[derive(Clone, Debug, Default)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn reset(&mut self, n: usize) {
        self.parent.clear();
        self.parent.extend(0..n);
        self.size.clear();
        self.size.resize(n, 1);
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Uniform hash grid over points with a fixed cell side.
#[derive(Clone, Debug)]
pub struct CellGrid {
    side: f64,
    dim: usize,
    cells: HashMap<[i64; MAX_DIM], Vec<u32>>,
}

impl CellGrid {
    pub fn new(side: f64, dim: usize) -> Self {
        Self { side, dim, cells: HashMap::new() }
    }

    pub fn build(side: f64, dim: usize, points: &[Point]) -> Self {
        let mut g = Self::new(side, dim);
        for (i, p) in points.iter().enumerate() {
            g.insert(p, i as u32);
        }
        g
    }

    #[inline]
    pub fn key(&self, p: &Point) -> [i64; MAX_DIM] {
        let mut k = [0i64; MAX_DIM];
        for (j, kj) in k.iter_mut().enumerate().take(self.dim) {
            *kj = (p.raw()[j] / self.side).floor() as i64;
        }
        k
    }

    pub fn insert(&mut self, p: &Point, id: u32) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    pub fn remove(&mut self, p: &Point, id: u32) {
        let k = self.key(p);
        if let Some(v) = self.cells.get_mut(&k) {
            if let Some(pos) = v.iter().position(|&x| x == id) {
                v.swap_remove(pos);
            }
            if v.is_empty() {
                self.cells.remove(&k);
            }
        }
    }

    pub fn relabel(&mut self, p: &Point, from: u32, to: u32) {
        let k = self.key(p);
        if let Some(v) = self.cells.get_mut(&k) {
            if let Some(x) = v.iter_mut().find(|x| **x == from) {
                *x = to;
            }
        }
    }

    /// Calls `f` for every id stored in the cells adjacent to `p`'s cell
    /// (candidates within one cell side of `p`).
    #[inline]
    pub fn for_each_near(&self, p: &Point, mut f: impl FnMut(u32)) {
        if self.cells.is_empty() {
            return;
        }
        let k = self.key(p);
        let r = |j: usize| if j < self.dim { -1..=1 } else { 0..=0 };
        for i in r(0) {
            for j in r(1) {
                for l in r(2) {
                    if let Some(v) = self.cells.get(&[k[0] + i, k[1] + j, k[2] + l]) {
                        for &id in v {
                            f(id);
                        }
                    }
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Incidence flags of one cluster.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterFlags {
    pub intersects_window: bool,
    pub outside_dilation: bool,
    pub touches_horizon: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRecord {
    /// Smallest point index in the cluster.
    pub id: usize,
    pub indices: Vec<usize>,
    pub spin_sum: Option<i64>,
    pub lower: Point,
    pub upper: Point,
    pub flags: ClusterFlags,
}

impl ClusterRecord {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

/// Partition of a configuration into `2a`-connectivity clusters.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterDecomposition {
    pub a: f64,
    pub points: Vec<Point>,
    /// Per-point cluster id (the smallest index in its cluster).
    pub labels: Vec<usize>,
    /// Clusters in increasing id order, indices ascending.
    pub clusters: Vec<ClusterRecord>,
}

/// Cluster decomposition of `config` with interaction range `2a`.
pub fn cluster_decompose(config: &GreyConfiguration, a: f64) -> ClusterDecomposition {
    decompose_points(config.points(), config.dim(), a, None)
}

/// As [`cluster_decompose`], additionally recording per-cluster spin sums.
pub fn cluster_decompose_colored(config: &ColoredConfiguration, a: f64) -> ClusterDecomposition {
    decompose_points(config.points(), config.dim(), a, Some(config.spins()))
}

pub(crate) fn decompose_points(points: &[Point], dim: usize, a: f64, spins: Option<&[Spin]>) -> ClusterDecomposition {
    assert!(a > 0.0, "hard-core radius must be positive");
    let n = points.len();
    let r2 = 4.0 * a * a;
    let grid = CellGrid::build(2.0 * a, dim, points);
    let mut ds = DisjointSet::new(n);
    for (i, p) in points.iter().enumerate() {
        grid.for_each_near(p, |j| {
            let j = j as usize;
            if j > i && p.dist2(&points[j]) < r2 {
                ds.union(i, j);
            }
        });
    }
    let mut min_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let r = ds.find(i);
        min_of_root[r] = min_of_root[r].min(i);
    }
    let labels: Vec<usize> = (0..n).map(|i| min_of_root[ds.find(i)]).collect();
    let mut slot = vec![usize::MAX; n];
    let mut clusters: Vec<ClusterRecord> = Vec::new();
    for i in 0..n {
        let l = labels[i];
        if slot[l] == usize::MAX {
            slot[l] = clusters.len();
            clusters.push(ClusterRecord {
                id: l,
                indices: Vec::new(),
                spin_sum: spins.map(|_| 0),
                lower: points[i],
                upper: points[i],
                flags: ClusterFlags::default(),
            });
        }
        let c = &mut clusters[slot[l]];
        c.indices.push(i);
        if let (Some(s), Some(sum)) = (spins, c.spin_sum.as_mut()) {
            *sum += s[i].value();
        }
        let mut lo = *c.lower.raw();
        let mut hi = *c.upper.raw();
        for k in 0..dim {
            lo[k] = lo[k].min(points[i].raw()[k]);
            hi[k] = hi[k].max(points[i].raw()[k]);
        }
        c.lower = Point::from_array(lo, dim);
        c.upper = Point::from_array(hi, dim);
    }
    ClusterDecomposition { a, points: points.to_vec(), labels, clusters }
}

impl ClusterDecomposition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Position of point `i`'s cluster in `clusters`.
    pub fn cluster_of(&self, i: usize) -> usize {
        let id = self.labels[i];
        self.clusters.binary_search_by_key(&id, |c| c.id).expect("label names a cluster")
    }

    /// Sets window and horizon incidence flags on every cluster.
    pub fn annotate(&mut self, window: &Window, horizon: Option<&Horizon>) {
        let two_a = 2.0 * self.a;
        for c in &mut self.clusters {
            let pts = c.indices.iter().map(|&i| &self.points[i]);
            let mut f = ClusterFlags { intersects_window: false, outside_dilation: true, touches_horizon: false };
            for p in pts {
                f.intersects_window |= window.contains(p);
                f.outside_dilation &= window.distance_to(p) > two_a;
                if let Some(h) = horizon {
                    f.touches_horizon |= h.touches(p);
                }
            }
            c.flags = f;
        }
    }

    /// Splits cluster ids into those meeting the closed `2a`-dilation of the
    /// window (inner) and those contained in its complement (outer).
    pub fn classify(&self, window: &Window) -> (Vec<usize>, Vec<usize>) {
        let two_a = 2.0 * self.a;
        let mut inner = Vec::new();
        let mut outer = Vec::new();
        for c in &self.clusters {
            if c.indices.iter().any(|&i| window.distance_to(&self.points[i]) <= two_a) {
                inner.push(c.id);
            } else {
                outer.push(c.id);
            }
        }
        (inner, outer)
    }
}

/// Inner/outer split of `decomp`'s clusters relative to `window` (see [`ClusterDecomposition::classify`]).
pub fn classify_clusters(decomp: &ClusterDecomposition, window: &Window, a: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if decomp.a != a {
        return invalid("decomposition built with a different hard-core radius");
    }
    Ok(decomp.classify(window))
}

/// Operand of [`set_distance`].
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Window(&'a Window),
    Points(&'a [Point]),
}

/// Infimum of pairwise Euclidean distances between two nonempty sets.
pub fn set_distance(a: Operand<'_>, b: Operand<'_>) -> Result<f64> {
    use Operand::*;
    for op in [a, b] {
        if matches!(op, Points(p) if p.is_empty()) {
            return Err(Error::EmptySetDistance);
        }
    }
    match (a, b) {
        (Points(p), Points(q)) => {
            let mut m = f64::INFINITY;
            for x in p {
                for y in q {
                    m = m.min(x.dist2(y));
                }
            }
            Ok(m.sqrt())
        }
        (Points(p), Window(w)) | (Window(w), Points(p)) => {
            Ok(p.iter().map(|x| w.distance_to(x)).fold(f64::INFINITY, f64::min))
        }
        (Window(w1), Window(w2)) => Ok(window_distance(w1, w2)),
    }
}

fn window_distance(w1: &Window, w2: &Window) -> f64 {
    match (w1, w2) {
        (Window::Ball { center: c1, radius: r1 }, Window::Ball { center: c2, radius: r2 }) => {
            (c1.dist(c2) - (r1 + r2)).max(0.0)
        }
        (Window::Ball { center, radius }, b @ Window::Box { .. })
        | (b @ Window::Box { .. }, Window::Ball { center, radius }) => (b.distance_to(center) - radius).max(0.0),
        (Window::Box { lower: l1, upper: u1 }, Window::Box { lower: l2, upper: u2 }) => {
            let mut s = 0.0;
            for k in 0..l1.dim() {
                let gap = (l2.raw()[k] - u1.raw()[k]).max(l1.raw()[k] - u2.raw()[k]).max(0.0);
                s += gap * gap;
            }
            s.sqrt()
        }
    }
}

/// True iff some cluster of `config` has a point in `from` and a point in `to`.
pub fn connects(config: &GreyConfiguration, a: f64, from: &Window, to: &Region) -> bool {
    let dec = cluster_decompose(config, a);
    dec.clusters.iter().any(|c| {
        c.indices.iter().any(|&i| from.contains(&dec.points[i])) && c.indices.iter().any(|&i| to.contains(&dec.points[i]))
    })
}

/// Hard-core colour constraint χ: no two opposite spins within distance `< 2a`,
/// checked within `cfg` and between `cfg` and `boundary`.
pub fn color_constraint_ok(cfg: &ColoredConfiguration, boundary: Option<&ColoredConfiguration>, a: f64) -> bool {
    let r2 = 4.0 * a * a;
    let mut pts = cfg.points().to_vec();
    let mut sp = cfg.spins().to_vec();
    if let Some(b) = boundary {
        pts.extend_from_slice(b.points());
        sp.extend_from_slice(b.spins());
    }
    let grid = CellGrid::build(2.0 * a, cfg.dim(), &pts);
    let n_own = cfg.len();
    for (i, p) in pts.iter().enumerate() {
        let mut ok = true;
        grid.for_each_near(p, |j| {
            let j = j as usize;
            // Pairs inside the boundary are its own business.
            if j > i && (i < n_own || j < n_own) && sp[i] != sp[j] && p.dist2(&pts[j]) < r2 {
                ok = false;
            }
        });
        if !ok {
            return false;
        }
    }
    true
}
