//! Probe reports and their CSV / JSON forms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GibbsClass, IntensityClass, ModelParams, Time};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconclusive,
    Violated,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Violated => "violated",
        }
    }

    /// Worst of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        self.max(other)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Decay,
    ColorDiscontinuity,
    SpatialDiscontinuity,
    Percolation,
}

impl ProbeKind {
    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Decay => "decay",
            ProbeKind::ColorDiscontinuity => "color_discontinuity",
            ProbeKind::SpatialDiscontinuity => "spatial_discontinuity",
            ProbeKind::Percolation => "percolation",
        }
    }
}

/// Whether a row's bound caps the estimate from above or from below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Upper,
    Lower,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub control: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: Option<f64>,
    pub bound_kind: BoundKind,
    pub verdict: Verdict,
    /// Companion numbers (comparators, per-member estimates, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl ProbeRow {
    /// Row with its verdict set from the bound: breached by more than `3σ` is a violation.
    pub fn new(control: f64, estimate: f64, std_error: f64, bound: Option<f64>, bound_kind: BoundKind) -> Self {
        let verdict = match (bound, bound_kind) {
            (Some(b), BoundKind::Upper) if estimate - 3.0 * std_error > b => Verdict::Violated,
            (Some(b), BoundKind::Lower) if estimate + 3.0 * std_error < b => Verdict::Violated,
            _ => Verdict::Consistent,
        };
        Self { control, estimate, std_error, bound, bound_kind, verdict, extra: BTreeMap::new() }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }
}

/// Log-linear fit `ln y = ln A - rate · x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub rate_std_error: f64,
    pub prefactor: f64,
    pub log_prefactor_std_error: f64,
    pub points: usize,
}

impl DecayFit {
    /// `(lo, hi)` of the rate at `z` standard errors.
    pub fn rate_interval(&self, z: f64) -> (f64, f64) {
        (self.rate - z * self.rate_std_error, self.rate + z * self.rate_std_error)
    }
}

/// Linear fit `y = c + slope · x`, used for trend tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub params: ModelParams,
    /// Echo of the probe inputs.
    pub settings: serde_json::Value,
    pub rows: Vec<ProbeRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<DecayFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trend: Option<TrendFit>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub quantities: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_class: Option<IntensityClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

pub const REPORT_CSV_HEADER: &str = "control,estimate,std_error,bound,verdict";

/// Float in 17 significant digits; non-finite values spelled `inf`, `-inf`, `nan`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl ProbeReport {
    pub fn new(kind: ProbeKind, params: &ModelParams, settings: serde_json::Value) -> Self {
        Self {
            kind,
            params: params.clone(),
            settings,
            rows: Vec::new(),
            fit: None,
            trend: None,
            quantities: BTreeMap::new(),
            intensity_class: None,
            notes: Vec::new(),
            verdict: Verdict::Consistent,
        }
    }

    /// Sorts rows by control value and folds row verdicts into the report verdict.
    pub fn finalize(mut self) -> Self {
        self.rows.sort_by(|a, b| a.control.total_cmp(&b.control));
        for r in &self.rows {
            self.verdict = self.verdict.and(r.verdict);
        }
        self
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let bound = r.bound.map(fmt_float).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                fmt_float(r.control),
                fmt_float(r.estimate),
                fmt_float(r.std_error),
                bound,
                r.verdict.name()
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// One cell of the time/intensity scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub t: Time,
    /// `None` when percolation was inconclusive.
    pub intensity_class: Option<IntensityClass>,
    /// `None` when the class depends on an undecided intensity class.
    pub gibbs_class: Option<GibbsClass>,
    pub connection_probability: f64,
}

pub const PHASE_CSV_HEADER: &str = "lambda_plus,lambda_minus,t,intensity_class,gibbs_class";

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut s = String::from(PHASE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let ic = match r.intensity_class {
            Some(IntensityClass::High) => "high",
            Some(IntensityClass::Low) => "low",
            None => "inconclusive",
        };
        let gc = r.gibbs_class.map_or("inconclusive", GibbsClass::name);
        let _ = writeln!(s, "{},{},{},{},{}", fmt_float(r.lambda_plus), fmt_float(r.lambda_minus), fmt_float(r.t.as_f64()), ic, gc);
    }
    s
}
