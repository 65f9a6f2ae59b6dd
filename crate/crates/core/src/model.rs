//! Closed-form model quantities: the spin-flip kernel, magnetisation, `g(m)`,
//! the switch `ρ`, the critical time `t_G`, the decay length `R` and the
//! regime / phase classifiers.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ColoredConfiguration, Spin};

/// Evolution time; `Infinite` is a first-class value, not a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Time {
    Finite(f64),
    Infinite,
}

impl Time {
    pub fn from_f64(t: f64) -> Time {
        if t == f64::INFINITY {
            Time::Infinite
        } else {
            Time::Finite(t)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Time::Finite(t) => t,
            Time::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Time::Infinite)
    }

    /// `m_t = e^{-2t}`, zero at `t = ∞`.
    pub fn decay(self) -> f64 {
        match self {
            Time::Finite(t) => (-2.0 * t).exp(),
            Time::Infinite => 0.0,
        }
    }

    /// `½(1 - e^{-2t})`.
    pub fn flip_probability(self) -> f64 {
        match self {
            Time::Finite(t) => -0.5 * (-2.0 * t).exp_m1(),
            Time::Infinite => 0.5,
        }
    }

    /// `½(1 + e^{-2t})`, taken as the complement of the flip probability so rows sum to 1 exactly.
    pub fn stay_probability(self) -> f64 {
        1.0 - self.flip_probability()
    }

    /// `log coth t = log((1 + e^{-2t}) / (1 - e^{-2t}))`; zero at `t = ∞`,
    /// `+∞` at `t = 0`.
    pub fn log_coth(self) -> f64 {
        match self {
            Time::Finite(t) => {
                let q = (-2.0 * t).exp();
                q.ln_1p() - (-(-2.0 * t).exp_m1()).ln()
            }
            Time::Infinite => 0.0,
        }
    }

    pub(crate) fn validate_nonnegative(self) -> Result<()> {
        match self {
            Time::Finite(t) if !(t >= 0.0) || t.is_infinite() => invalid(format!("time {t} must be ≥ 0 or inf")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Time::Finite(t) => write!(f, "{t}"),
            Time::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for Time {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Time::Finite(t) => s.serialize_f64(*t),
            Time::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Time {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Time;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a nonnegative time or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Time, E> {
                Ok(Time::from_f64(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Time, E> {
                Ok(Time::Finite(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Time, E> {
                Ok(Time::Finite(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Time, E> {
                match v.trim() {
                    "inf" | "+inf" | "infinity" => Ok(Time::Infinite),
                    other => other.parse::<f64>().map(Time::from_f64).map_err(|_| E::custom(format!("bad time {other:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Spin-flip transition probability `p_t(s, ŝ)`.
pub fn flip_kernel(t: Time, s: Spin, s_hat: Spin) -> f64 {
    if s == s_hat {
        t.stay_probability()
    } else {
        t.flip_probability()
    }
}

/// Mean spin of a nonempty coloured configuration.
pub fn magnetization(cfg: &ColoredConfiguration) -> Result<f64> {
    if cfg.is_empty() {
        return Err(Error::EmptyMagnetization);
    }
    Ok(cfg.spin_sum() as f64 / cfg.len() as f64)
}

/// Regime of `g` on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeCase {
    /// `g > 0` on `[-1, 1]`.
    Case1QGibbs,
    /// `g ≡ 0`.
    Case2SymmetricInfinite,
    /// `g(-1) = 0`, `g > 0` elsewhere.
    Case3CriticalAsymmetric,
    /// `g` changes sign.
    Case4SwitchActive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GibbsClass {
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "asq_non_q")]
    AsqNonQ,
    #[serde(rename = "non_asq")]
    NonAsq,
}

impl GibbsClass {
    pub fn name(self) -> &'static str {
        match self {
            GibbsClass::Q => "q",
            GibbsClass::AsqNonQ => "asq_non_q",
            GibbsClass::NonAsq => "non_asq",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityClass {
    High,
    Low,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    d: usize,
    a: f64,
    lambda_plus: f64,
    lambda_minus: f64,
    t: Time,
}

/// Model parameters with the plus-favouring convention `λ+ ≥ λ-`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    d: usize,
    a: f64,
    lambda_plus: f64,
    lambda_minus: f64,
    t: Time,
    swapped: bool,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        ModelParams::new(r.d, r.a, r.lambda_plus, r.lambda_minus, r.t)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { d: p.d, a: p.a, lambda_plus: p.lambda_plus, lambda_minus: p.lambda_minus, t: p.t }
    }
}

impl ModelParams {
    /// Validates and normalises; `λ+ < λ-` inputs are relabelled (see [`ModelParams::swapped`]).
    pub fn new(d: usize, a: f64, lambda_plus: f64, lambda_minus: f64, t: Time) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return invalid(format!("dimension {d} outside 1..=3"));
        }
        if !(a > 0.0 && a.is_finite()) {
            return invalid("hard-core radius a must be positive");
        }
        for (name, l) in [("lambda_plus", lambda_plus), ("lambda_minus", lambda_minus)] {
            if !(l > 0.0 && l.is_finite()) {
                return invalid(format!("{name} must be positive and finite"));
            }
        }
        match t {
            Time::Finite(x) if !(x > 0.0 && x.is_finite()) => return invalid(format!("time {x} must be > 0 or inf")),
            _ => {}
        }
        let swapped = lambda_plus < lambda_minus;
        let (lp, lm) = if swapped { (lambda_minus, lambda_plus) } else { (lambda_plus, lambda_minus) };
        Ok(Self { d, a, lambda_plus: lp, lambda_minus: lm, t, swapped })
    }

    pub fn symmetric(d: usize, a: f64, lambda: f64, t: Time) -> Result<Self> {
        Self::new(d, a, lambda, lambda, t)
    }

    pub fn with_time(&self, t: Time) -> Result<Self> {
        let mut p = Self::new(self.d, self.a, self.lambda_plus, self.lambda_minus, t)?;
        p.swapped = self.swapped;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }
    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }
    pub fn t(&self) -> Time {
        self.t
    }
    /// True when the caller's `λ+ < λ-` was normalised by exchanging colour labels.
    pub fn swapped(&self) -> bool {
        self.swapped
    }

    pub fn is_symmetric(&self) -> bool {
        self.lambda_plus == self.lambda_minus
    }

    pub fn total_intensity(&self) -> f64 {
        self.lambda_plus + self.lambda_minus
    }

    pub fn intensity(&self, s: Spin) -> f64 {
        match s {
            Spin::Plus => self.lambda_plus,
            Spin::Minus => self.lambda_minus,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.lambda_plus / self.lambda_minus
    }

    pub fn log_alpha(&self) -> f64 {
        (self.lambda_plus / self.lambda_minus).ln()
    }

    pub fn u_plus(&self) -> f64 {
        self.lambda_plus / self.total_intensity()
    }

    pub fn u_minus(&self) -> f64 {
        self.lambda_minus / self.total_intensity()
    }

    pub fn u(&self, s: Spin) -> f64 {
        self.intensity(s) / self.total_intensity()
    }

    /// `log coth t`; at `t_G` this is `log α` exactly.
    pub fn log_coth_t(&self) -> f64 {
        if self.at_critical_time() {
            self.log_alpha()
        } else {
            self.t.log_coth()
        }
    }

    /// `g(m) = log α + m log coth t`.
    pub fn g(&self, m: f64) -> f64 {
        self.log_alpha() + m * self.log_coth_t()
    }

    /// `log ρ = -n log α - (Σσ) log coth t` for a cluster part with `n` points and spin sum `spin_sum`.
    pub fn log_rho(&self, n: usize, spin_sum: i64) -> f64 {
        let mut l = -(n as f64) * self.log_alpha();
        if spin_sum != 0 {
            l -= spin_sum as f64 * self.log_coth_t();
        }
        l
    }

    /// `t_G = ½ log((λ+ + λ-)/(λ+ - λ-))`; infinite for the symmetric model.
    pub fn critical_time(&self) -> Time {
        if self.is_symmetric() {
            Time::Infinite
        } else {
            let (lp, lm) = (self.lambda_plus, self.lambda_minus);
            Time::Finite(0.5 * ((lp + lm) / (lp - lm)).ln())
        }
    }

    /// True iff `t` equals `t_G` up to 4 ulp.
    pub fn at_critical_time(&self) -> bool {
        match (self.t, self.critical_time()) {
            (Time::Finite(t), Time::Finite(tg)) => (t - tg).abs() <= 4.0 * f64::EPSILON * tg,
            _ => false,
        }
    }

    /// `1/R = g(-1)/(2a)`; defined only in the q-Gibbs regime.
    pub fn inverse_decay_length(&self) -> Result<f64> {
        if self.is_symmetric() || self.at_critical_time() {
            return Err(Error::NoDecayRate);
        }
        let g = self.g(-1.0);
        if g > 0.0 {
            Ok(g / (2.0 * self.a))
        } else {
            Err(Error::NoDecayRate)
        }
    }

    pub fn decay_length(&self) -> Result<f64> {
        Ok(1.0 / self.inverse_decay_length()?)
    }

    pub fn regime(&self) -> RegimeCase {
        if self.is_symmetric() {
            return if self.t.is_infinite() { RegimeCase::Case2SymmetricInfinite } else { RegimeCase::Case4SwitchActive };
        }
        if self.at_critical_time() {
            return RegimeCase::Case3CriticalAsymmetric;
        }
        match (self.t, self.critical_time()) {
            (Time::Infinite, _) => RegimeCase::Case1QGibbs,
            (Time::Finite(t), Time::Finite(tg)) if t > tg => RegimeCase::Case1QGibbs,
            _ => RegimeCase::Case4SwitchActive,
        }
    }

    /// Numerical warnings attached to results computed with these parameters.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if let Time::Finite(t) = self.t {
            if t < 1e-6 {
                w.push(format!("t = {t:e} below 1e-6: log coth(t) = {:.6e} dominates every switch", self.t.log_coth()));
            }
        }
        w
    }
}

/// Log of the switch `ρ(ω_C) = exp(-|ω_C| g(m(ω_C)))`; zero for the empty input.
pub fn switch_log_rho(part: &ColoredConfiguration, params: &ModelParams) -> f64 {
    params.log_rho(part.len(), part.spin_sum())
}

/// Gibbs class of a (regime, intensity) cell of the time/intensity phase table.
pub fn phase_cell(params: &ModelParams, intensity: IntensityClass) -> GibbsClass {
    use GibbsClass::*;
    if params.is_symmetric() {
        return match intensity {
            IntensityClass::High => NonAsq,
            IntensityClass::Low => AsqNonQ,
        };
    }
    match params.regime() {
        RegimeCase::Case1QGibbs => Q,
        RegimeCase::Case3CriticalAsymmetric => AsqNonQ,
        _ => match intensity {
            IntensityClass::High => NonAsq,
            IntensityClass::Low => AsqNonQ,
        },
    }
}

/// The cell's class when it does not depend on the intensity class.
pub fn phase_cell_intensity_free(params: &ModelParams) -> Option<GibbsClass> {
    let h = phase_cell(params, IntensityClass::High);
    (h == phase_cell(params, IntensityClass::Low)).then_some(h)
}

/// Intensity-thinning constant ζ(d) of the percolation lower comparator.
pub fn zeta_thinning(d: usize) -> f64 {
    match d {
        1 => 0.25,
        2 => 1.0 / 64.0,
        _ => 2f64.powi(-(3i32.pow(d as u32))),
    }
}
