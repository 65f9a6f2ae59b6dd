//! Run configuration: TOML parsing, CLI overrides and validation with
//! line/field diagnostics.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wrm::io::{parse_any, Configuration};
use wrm::kernels::{Observable, ObservableKind};
use wrm::sampler::{BoundaryCondition, McmcSchedule};
use wrm::{ColoredConfiguration, ModelParams, Point, Spin, Time, Window};

/// A rejected configuration, pointing at the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}, field `{}`: {}", self.field, self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub replicas: Option<u32>,
    pub model: ModelParams,
    pub windows: WindowsSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub evolve: Option<EvolveSection>,
    pub kernel: Option<KernelSection>,
    #[serde(default)]
    pub probes: ProbesSection,
    pub scan: Option<ScanSection>,
    pub render: Option<RenderSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `[-half_width, half_width]^d`.
    Cube { half_width: f64 },
}

impl WindowSpec {
    pub fn build(&self, d: usize) -> wrm::Result<Window> {
        match self {
            WindowSpec::Ball { center, radius } => Window::ball(Point::new(center)?, *radius),
            WindowSpec::Box { lower, upper } => Window::cuboid(Point::new(lower)?, Point::new(upper)?),
            WindowSpec::Cube { half_width } => Window::centered_cube(d, *half_width),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowsSection {
    pub ambient: WindowSpec,
    pub lambda: WindowSpec,
    pub b: WindowSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryName {
    Plus,
    Minus,
    Empty,
}

impl BoundaryName {
    pub fn condition(self) -> BoundaryCondition {
        match self {
            BoundaryName::Plus => BoundaryCondition::AllPlus,
            BoundaryName::Minus => BoundaryCondition::AllMinus,
            BoundaryName::Empty => BoundaryCondition::Empty,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    Mcmc,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowName {
    Ambient,
    Lambda,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_method")]
    pub method: SamplerMethod,
    #[serde(default = "default_sample_window")]
    pub window: WindowName,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryName,
    #[serde(default = "default_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_one")]
    pub thinning: u64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: u64,
    /// Write sample files during `run`.
    #[serde(default)]
    pub dump: bool,
}

fn default_method() -> SamplerMethod {
    SamplerMethod::Mcmc
}
fn default_sample_window() -> WindowName {
    WindowName::Lambda
}
fn default_boundary() -> BoundaryName {
    BoundaryName::Empty
}
fn default_burn_in() -> u64 {
    McmcSchedule::default().burn_in
}
fn default_one() -> u64 {
    1
}
fn default_samples() -> usize {
    10
}
fn default_attempts() -> u64 {
    1_000_000
}
fn default_budget() -> u64 {
    100_000
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            window: default_sample_window(),
            boundary: default_boundary(),
            burn_in: default_burn_in(),
            thinning: 1,
            n_samples: default_samples(),
            max_attempts: default_attempts(),
            dump: false,
        }
    }
}

impl SamplerSection {
    pub fn schedule(&self) -> McmcSchedule {
        McmcSchedule { burn_in: self.burn_in, thinning: self.thinning, n_samples: self.n_samples }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    /// Defaults to the model time.
    pub t: Option<Time>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableName {
    IndicatorEmpty,
    IndicatorAllPlus,
    WindowMagnetization,
    PointCount,
}

/// Configuration given inline or by a path relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ConfigurationSource {
    File { file: PathBuf },
    Inline { points: Vec<Vec<f64>>, spins: String },
}

impl ConfigurationSource {
    pub fn load(&self, base: &Path, d: usize) -> Result<ColoredConfiguration, String> {
        match self {
            ConfigurationSource::File { file } => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                match parse_any(&text).map_err(|e| e.to_string())? {
                    Configuration::Colored(c) if c.dim() == d => Ok(c),
                    Configuration::Colored(_) => Err("configuration dimension differs from the model".into()),
                    Configuration::Grey(_) => Err("conditioning must carry spins".into()),
                }
            }
            ConfigurationSource::Inline { points, spins } => {
                let spins: Vec<Spin> = spins
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| Spin::from_symbol(&c.to_string()).ok_or_else(|| format!("bad spin {c:?}")))
                    .collect::<Result<_, _>>()?;
                let pts = points.iter().map(|c| Point::new(c)).collect::<wrm::Result<Vec<_>>>().map_err(|e| e.to_string())?;
                if pts.iter().any(|p| p.dim() != d) {
                    return Err("point dimension differs from the model".into());
                }
                ColoredConfiguration::new(d, pts, spins).map_err(|e| e.to_string())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    FiniteVolume,
    Infinity,
    Free,
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: KernelName,
    #[serde(default = "default_observable")]
    pub observable: ObservableName,
    #[serde(default = "default_cap")]
    pub count_cap: usize,
    #[serde(default = "default_budget")]
    pub n_samples: u64,
    /// Treat conditioning clusters within `2a` of the ambient boundary as infinite.
    #[serde(default)]
    pub horizon: bool,
    pub conditioning: Option<ConfigurationSource>,
    /// Time-zero boundary outside Λ for the finite-volume kernel.
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryName,
}

fn default_observable() -> ObservableName {
    ObservableName::IndicatorEmpty
}
fn default_cap() -> usize {
    10
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeName {
    Decay,
    Color,
    Spatial,
    Percolation,
}

impl ProbeName {
    pub fn file_stem(self) -> &'static str {
        match self {
            ProbeName::Decay => "decay",
            ProbeName::Color => "color",
            ProbeName::Spatial => "spatial",
            ProbeName::Percolation => "percolation",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbesSection {
    #[serde(default)]
    pub run: Vec<ProbeName>,
    pub decay: Option<DecaySection>,
    pub color: Option<ColorSection>,
    pub spatial: Option<SpatialSection>,
    pub percolation: Option<PercolationSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    pub distances: Vec<f64>,
    #[serde(default = "default_observable")]
    pub observable: ObservableName,
    #[serde(default = "default_cap")]
    pub count_cap: usize,
    #[serde(default = "default_budget")]
    pub n_samples: u64,
    /// Plus arm along the first axis from the centre of B, outside B; 0 for none.
    #[serde(default)]
    pub inner_extent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorSection {
    pub n: Vec<f64>,
    #[serde(default = "default_color_cap")]
    pub cap: usize,
    #[serde(default = "default_observable")]
    pub observable: ObservableName,
    #[serde(default = "default_cap")]
    pub count_cap: usize,
    #[serde(default)]
    pub jitter: bool,
    #[serde(default = "default_budget")]
    pub n_samples: u64,
}

fn default_color_cap() -> usize {
    20
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArmsName {
    One,
    Two,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialSection {
    pub n: Vec<f64>,
    #[serde(default = "default_arms")]
    pub arms: ArmsName,
    #[serde(default = "default_budget")]
    pub n_samples: u64,
}

fn default_arms() -> ArmsName {
    ArmsName::Two
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolationSection {
    pub r: f64,
    pub n: Vec<f64>,
    #[serde(default = "default_perc_burn_in")]
    pub burn_in: u64,
    #[serde(default = "default_perc_thinning")]
    pub thinning: u64,
    #[serde(default = "default_perc_samples")]
    pub n_samples: usize,
    #[serde(default = "default_high")]
    pub high_threshold: f64,
    #[serde(default = "default_low")]
    pub low_threshold: f64,
    #[serde(default = "default_scale")]
    pub intensity_scale: f64,
    #[serde(default = "default_perc_boundary")]
    pub boundary: BoundaryName,
}

fn default_perc_burn_in() -> u64 {
    200
}
fn default_perc_thinning() -> u64 {
    5
}
fn default_perc_samples() -> usize {
    100
}
fn default_high() -> f64 {
    0.5
}
fn default_low() -> f64 {
    0.05
}
fn default_scale() -> f64 {
    1.0
}
fn default_perc_boundary() -> BoundaryName {
    BoundaryName::Plus
}

impl PercolationSection {
    pub fn settings(&self) -> wrm::probes::PercolationSettings {
        let mut s = wrm::probes::PercolationSettings::new(
            self.r,
            self.n.clone(),
            McmcSchedule { burn_in: self.burn_in, thinning: self.thinning, n_samples: self.n_samples },
        );
        s.high_threshold = self.high_threshold;
        s.low_threshold = self.low_threshold;
        s.intensity_scale = self.intensity_scale;
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub lambda_plus: Vec<f64>,
    pub lambda_minus: Vec<f64>,
    pub t: Vec<Time>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    pub input: Option<PathBuf>,
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub replicas: Option<u32>,
}

/// A validated configuration with its windows built.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub replicas: u32,
    pub ambient: Window,
    pub lambda: Window,
    pub b: Window,
    /// Directory relative paths in the file resolve against.
    pub base: PathBuf,
    text: String,
}

/// Line of `key` inside `[section]` (dotted `section` for nested tables).
pub fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = match field.rsplit_once('.') {
        Some((s, k)) => (s, k),
        None => ("", field),
    };
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == field {
                section_line = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        if current == section && k.trim() == key {
            return Some(i + 1);
        }
    }
    section_line.or_else(|| {
        // Fall back to the enclosing table.
        field.rsplit_once('.').and_then(|(parent, _)| locate(text, parent))
    })
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn field_at_line(text: &str, line: usize) -> String {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.starts_with('[') {
            current = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        if i + 1 == line {
            if let Some((k, _)) = l.split_once('=') {
                let k = k.trim();
                return if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
            }
            return current;
        }
    }
    current
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start));
            let field = line.map(|l| field_at_line(text, l)).unwrap_or_default();
            ConfigError { field, line, message: e.message().to_string() }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Observable on `b`.
pub fn observable(name: ObservableName, cap: usize, b: &Window) -> Observable {
    let kind = match name {
        ObservableName::IndicatorEmpty => ObservableKind::IndicatorEmpty,
        ObservableName::IndicatorAllPlus => ObservableKind::IndicatorAllPlus,
        ObservableName::WindowMagnetization => ObservableKind::WindowMagnetization,
        ObservableName::PointCount => ObservableKind::PointCount { cap },
    };
    Observable::new(kind, b.clone())
}

impl Resolved {
    /// Parses, applies overrides and validates.
    pub fn from_text(text: &str, base: &Path, ov: &Overrides) -> Result<Resolved, ConfigError> {
        let mut config = RunConfig::parse(text)?;
        let err = |field: &str, message: String| ConfigError { field: field.to_string(), line: locate(text, field), message };
        if ov.seed.is_some() {
            config.seed = ov.seed;
        }
        if ov.out.is_some() {
            config.out = ov.out.clone();
        }
        if ov.replicas.is_some() {
            config.replicas = ov.replicas;
        }
        let Some(seed) = config.seed else {
            return Err(err("seed", "a seed is required (set `seed` or pass --seed)".into()));
        };
        let replicas = config.replicas.unwrap_or(1);
        if replicas == 0 {
            return Err(err("replicas", "must be at least 1".into()));
        }
        let out = config.out.clone().unwrap_or_else(|| PathBuf::from("wrm-out"));
        let d = config.model.dim();
        let build = |name: &str, spec: &WindowSpec| -> Result<Window, ConfigError> {
            let field = format!("windows.{name}");
            let w = spec.build(d).map_err(|e| err(&field, e.to_string()))?;
            if w.dim() != d {
                return Err(err(&field, format!("window has dimension {} but the model has d = {d}", w.dim())));
            }
            Ok(w)
        };
        let ambient = build("ambient", &config.windows.ambient)?;
        let lambda = build("lambda", &config.windows.lambda)?;
        let b = build("b", &config.windows.b)?;
        if !lambda.contains_window(&b) {
            return Err(err("windows.b", "B must lie inside Λ".into()));
        }
        if !ambient.contains_window(&lambda) {
            return Err(err("windows.lambda", "Λ must lie inside the ambient box".into()));
        }
        let s = &config.sampler;
        if s.thinning == 0 {
            return Err(err("sampler.thinning", "must be at least 1".into()));
        }
        if s.n_samples == 0 {
            return Err(err("sampler.n_samples", "must be at least 1".into()));
        }
        if let Some(k) = &config.kernel {
            if k.n_samples == 0 {
                return Err(err("kernel.n_samples", "must be at least 1".into()));
            }
            if matches!(k.kind, KernelName::Plus | KernelName::Minus) && !config.model.is_symmetric() {
                return Err(err("kernel.kind", "γ^± needs lambda_plus = lambda_minus".into()));
            }
        }
        let positive = |field: &str, xs: &[f64]| -> Result<(), ConfigError> {
            if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(err(field, "needs a nonempty list of positive numbers".into()));
            }
            Ok(())
        };
        let p = &config.probes;
        for name in &p.run {
            let present = match name {
                ProbeName::Decay => p.decay.is_some(),
                ProbeName::Color => p.color.is_some(),
                ProbeName::Spatial => p.spatial.is_some(),
                ProbeName::Percolation => p.percolation.is_some(),
            };
            if !present {
                return Err(err("probes.run", format!("probe `{}` listed without a [probes.{}] section", name.file_stem(), name.file_stem())));
            }
        }
        if let Some(x) = &p.decay {
            positive("probes.decay.distances", &x.distances)?;
            if !(x.inner_extent >= 0.0 && x.inner_extent.is_finite()) {
                return Err(err("probes.decay.inner_extent", "must be ≥ 0".into()));
            }
        }
        if let Some(x) = &p.color {
            positive("probes.color.n", &x.n)?;
        }
        if let Some(x) = &p.spatial {
            positive("probes.spatial.n", &x.n)?;
        }
        if let Some(x) = &p.percolation {
            positive("probes.percolation.n", &x.n)?;
            if !(x.r > 0.0) || x.n.iter().any(|&n| n <= x.r) {
                return Err(err("probes.percolation.r", "needs 0 < r < every n".into()));
            }
            if !(x.intensity_scale >= 0.0 && x.intensity_scale.is_finite()) {
                return Err(err("probes.percolation.intensity_scale", "must be ≥ 0".into()));
            }
            if x.n_samples == 0 || x.thinning == 0 {
                return Err(err("probes.percolation.n_samples", "samples and thinning must be positive".into()));
            }
        }
        if let Some(sc) = &config.scan {
            positive("scan.lambda_plus", &sc.lambda_plus)?;
            positive("scan.lambda_minus", &sc.lambda_minus)?;
            if sc.t.iter().any(|t| !(t.as_f64() > 0.0)) {
                return Err(err("scan.t", "times must be > 0 or inf".into()));
            }
            if p.percolation.is_none() {
                return Err(err("scan", "the scan needs a [probes.percolation] section".into()));
            }
        }
        Ok(Resolved { config, seed, out, replicas, ambient, lambda, b, base: base.to_path_buf(), text: text.to_string() })
    }

    pub fn from_file(path: &Path, ov: &Overrides) -> Result<Resolved, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { field: String::new(), line: None, message: format!("{}: {e}", path.display()) })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_text(&text, &base, ov)
    }

    /// Diagnostic for a problem found after validation.
    pub fn error(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { field: field.to_string(), line: locate(&self.text, field), message: message.into() }
    }

    /// Resolved configuration as written to the output directory.
    pub fn echo(&self) -> String {
        let mut c = self.config.clone();
        c.seed = Some(self.seed);
        c.out = Some(self.out.clone());
        c.replicas = Some(self.replicas);
        c.to_toml()
    }

    pub fn window(&self, name: WindowName) -> &Window {
        match name {
            WindowName::Ambient => &self.ambient,
            WindowName::Lambda => &self.lambda,
            WindowName::B => &self.b,
        }
    }
}
