//! Cluster-representation conditional kernels.
//!
//! Every kernel has the same shape: `ω_B ~ PPP(λ-)` in the target window,
//! merged with the conditioning clusters; each resulting cluster `C` carries a
//! pair of log start weights `(l+, l-)` whose sum is its factor and whose
//! ratio is the probability that `C` started plus at time zero. The kinds
//! differ only in how `(l+, l-)` are assigned.

mod estimate;
mod oracle;
mod problem;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{ColoredConfiguration, Horizon, Spin, Window};
use crate::model::ModelParams;
use crate::rng::RngStream;

pub use estimate::{estimate, estimate_common, Accumulator, CommonEstimate, PairDifference};
pub use oracle::{oracle_eval, OracleResult};
pub use problem::{ClusterWeightTerm, Constraint, GroupWeights, KernelProblem, NuKernel, SampleEval};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    /// `1_{∅}`: no point in the window.
    IndicatorEmpty,
    /// `1_{+ω}`: every point in the window is plus (true on the empty window).
    IndicatorAllPlus,
    /// `min(#points, cap)`.
    PointCount { cap: usize },
    /// Mean spin of the points in the window, 0 when there are none.
    WindowMagnetization,
    /// The constant `value`.
    Constant { value: f64 },
}

/// A bounded observable measurable with respect to `window`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    #[serde(flatten)]
    pub kind: ObservableKind,
    pub window: Window,
}

impl Observable {
    pub fn new(kind: ObservableKind, window: Window) -> Self {
        Self { kind, window }
    }

    pub fn grey_only(&self) -> bool {
        !matches!(self.kind, ObservableKind::IndicatorAllPlus | ObservableKind::WindowMagnetization)
    }

    pub fn sup_norm(&self) -> f64 {
        match self.kind {
            ObservableKind::PointCount { cap } => cap as f64,
            ObservableKind::Constant { value } => value.abs(),
            _ => 1.0,
        }
    }

    /// Direct evaluation on a coloured configuration.
    pub fn evaluate(&self, cfg: &ColoredConfiguration) -> f64 {
        let inside = cfg.points().iter().zip(cfg.spins()).filter(|(p, _)| self.window.contains(p));
        match self.kind {
            ObservableKind::IndicatorEmpty => (inside.count() == 0) as u8 as f64,
            ObservableKind::IndicatorAllPlus => inside.into_iter().all(|(_, s)| *s == Spin::Plus) as u8 as f64,
            ObservableKind::PointCount { cap } => inside.count().min(cap) as f64,
            ObservableKind::WindowMagnetization => {
                let (mut n, mut s) = (0i64, 0i64);
                for (_, sp) in inside {
                    n += 1;
                    s += sp.value();
                }
                if n == 0 {
                    0.0
                } else {
                    s as f64 / n as f64
                }
            }
            ObservableKind::Constant { value } => value,
        }
    }

    /// Value from the number of points in the window, for colour-blind kinds.
    pub(crate) fn grey_value(&self, count: usize) -> Option<f64> {
        match self.kind {
            ObservableKind::IndicatorEmpty => Some((count == 0) as u8 as f64),
            ObservableKind::PointCount { cap } => Some(count.min(cap) as f64),
            ObservableKind::Constant { value } => Some(value),
            _ => None,
        }
    }
}

/// Monte Carlo budget: total samples split over `replicas` independent substreams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub n_samples: u64,
    pub replicas: u32,
    pub ess_floor: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { n_samples: 100_000, replicas: 1, ess_floor: 100.0 }
    }
}

impl Budget {
    pub fn new(n_samples: u64) -> Self {
        Self { n_samples, ..Self::default() }
    }

    pub fn with_replicas(mut self, replicas: u32) -> Self {
        self.replicas = replicas.max(1);
        self
    }

    pub(crate) fn split(&self) -> Vec<u64> {
        let r = self.replicas.max(1) as u64;
        (0..r).map(|i| self.n_samples / r + u64::from(i < self.n_samples % r)).collect()
    }
}

/// Self-normalised Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub ess: f64,
    pub max_log_weight: f64,
    pub min_log_weight: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl KernelEstimate {
    pub const CSV_HEADER: &'static str = "value,std_error,n_samples,ess";

    pub fn csv_row(&self) -> String {
        format!("{:.16e},{:.16e},{},{:.16e}", self.value, self.std_error, self.n_samples, self.ess)
    }
}

/// Which kernel of the cluster representation to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Finite volume `Λ` with a time-zero boundary condition outside it.
    FiniteVolume,
    /// Infinite clusters pinned to a plus start.
    Infinity,
    /// Infinite clusters dropped from every product.
    Free,
    /// Symmetric model; infinite clusters start from the given sign with weight one.
    PlusMinus(Spin),
}

/// Raw inputs of a kernel evaluation.
///
/// `evolved` holds the time-`t` conditioning outside the target window
/// (`Λ\B` for the finite-volume kernel, `Λ^c` otherwise). `fixed` is the
/// time-zero boundary configuration on `Λ^c`, used only by the finite-volume
/// kernel. `horizon` marks conditioning clusters that stand in for infinite ones.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub observable: Observable,
    pub target: Window,
    pub evolved: ColoredConfiguration,
    pub fixed: ColoredConfiguration,
    pub horizon: Option<Horizon>,
    pub params: ModelParams,
    /// Outer window `Λ` of the finite-volume kernel.
    pub outer: Option<Window>,
}

impl KernelSpec {
    pub fn finite_volume(
        observable: Observable,
        b: Window,
        lambda: Window,
        cond_inside: ColoredConfiguration,
        cond_outside: ColoredConfiguration,
        params: &ModelParams,
    ) -> Result<Self> {
        if !lambda.contains_window(&b) {
            return invalid("target window must lie inside Λ");
        }
        if cond_inside.points().iter().any(|p| !lambda.contains(p)) {
            return invalid("inner conditioning must lie in Λ");
        }
        if cond_outside.points().iter().any(|p| lambda.depth(p) > 0.0) {
            return invalid("outer boundary condition must lie in the complement of Λ");
        }
        Ok(Self {
            kind: KernelKind::FiniteVolume,
            observable,
            target: b,
            evolved: cond_inside,
            fixed: cond_outside,
            horizon: None,
            params: params.clone(),
            outer: Some(lambda),
        })
    }

    pub fn infinite_volume(
        kind: KernelKind,
        observable: Observable,
        target: Window,
        cond: ColoredConfiguration,
        horizon: Option<Horizon>,
        params: &ModelParams,
    ) -> Result<Self> {
        if kind == KernelKind::FiniteVolume {
            return invalid("use KernelSpec::finite_volume for the finite-volume kernel");
        }
        Ok(Self {
            kind,
            observable,
            target,
            fixed: ColoredConfiguration::empty(cond.dim()),
            evolved: cond,
            horizon,
            params: params.clone(),
            outer: None,
        })
    }

    /// Same inputs with a different conditioning.
    pub fn with_evolved(&self, evolved: ColoredConfiguration) -> Self {
        Self { evolved, ..self.clone() }
    }

    pub fn with_kind(&self, kind: KernelKind) -> Self {
        Self { kind, ..self.clone() }
    }
}

/// `γ_B^{ω_{Λ^c}}(f | ω̂_{Λ\B})`.
#[allow(clippy::too_many_arguments)]
pub fn eval_kernel_finite_volume(
    f: &Observable,
    b: &Window,
    lambda: &Window,
    cond_inside: &ColoredConfiguration,
    cond_outside: &ColoredConfiguration,
    params: &ModelParams,
    budget: &Budget,
    rng: RngStream,
) -> Result<KernelEstimate> {
    let spec = KernelSpec::finite_volume(f.clone(), b.clone(), lambda.clone(), cond_inside.clone(), cond_outside.clone(), params)?;
    estimate(&KernelProblem::new(&spec)?, budget, rng)
}

/// `γ_Λ^∞(f | ω̂_{Λ^c})`.
pub fn eval_gamma_infinity(
    f: &Observable,
    lambda: &Window,
    cond: &ColoredConfiguration,
    horizon: Option<&Horizon>,
    params: &ModelParams,
    budget: &Budget,
    rng: RngStream,
) -> Result<KernelEstimate> {
    let spec = KernelSpec::infinite_volume(KernelKind::Infinity, f.clone(), lambda.clone(), cond.clone(), horizon.cloned(), params)?;
    estimate(&KernelProblem::new(&spec)?, budget, rng)
}

/// `γ_Λ^f(f | ω̂_{Λ^c})`.
pub fn eval_gamma_f(
    f: &Observable,
    lambda: &Window,
    cond: &ColoredConfiguration,
    horizon: Option<&Horizon>,
    params: &ModelParams,
    budget: &Budget,
    rng: RngStream,
) -> Result<KernelEstimate> {
    let spec = KernelSpec::infinite_volume(KernelKind::Free, f.clone(), lambda.clone(), cond.clone(), horizon.cloned(), params)?;
    estimate(&KernelProblem::new(&spec)?, budget, rng)
}

/// `γ_Λ^±(f | ω̂_{Λ^c})`; symmetric model only.
#[allow(clippy::too_many_arguments)]
pub fn eval_gamma_pm(
    f: &Observable,
    lambda: &Window,
    cond: &ColoredConfiguration,
    horizon: Option<&Horizon>,
    sign: Spin,
    params: &ModelParams,
    budget: &Budget,
    rng: RngStream,
) -> Result<KernelEstimate> {
    let spec =
        KernelSpec::infinite_volume(KernelKind::PlusMinus(sign), f.clone(), lambda.clone(), cond.clone(), horizon.cloned(), params)?;
    estimate(&KernelProblem::new(&spec)?, budget, rng)
}
