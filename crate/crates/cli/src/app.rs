//! Subcommand bodies. Each returns its output files in memory; only
//! [`write_artifacts`] touches the output directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use wrm::io::{parse_any, write_colored_text, Configuration};
use wrm::kernels::{estimate, Budget, KernelKind, KernelProblem, KernelSpec};
use wrm::probes::{
    build_channel, probe_color_discontinuity, probe_decay, probe_percolation, probe_spatial_discontinuity, scan_phase_diagram,
    Arms, ChannelSpec, ScanGrid,
};
use wrm::render::{render_svg, Scene};
use wrm::report::{phase_csv, ProbeReport, Verdict};
use wrm::sampler::{evolve_spinflip, sample_wrm_exact, sample_wrm_mcmc};
use wrm::{ColoredConfiguration, Horizon, RngStream, Spin, Window};

use crate::config::{observable, ArmsName, ConfigError, KernelName, ProbeName, Resolved, SamplerMethod};
use crate::manifest::{manifest_json, ManifestEntry};

/// Stream ids, one per kind of work, so a probe gives the same bytes
/// whether it runs alone or inside `run`.
mod stream {
    pub const SAMPLE: u64 = 1;
    pub const EVOLVE: u64 = 2;
    pub const KERNEL: u64 = 3;
    pub const RENDER: u64 = 4;
    pub const DECAY: u64 = 10;
    pub const COLOR: u64 = 11;
    pub const SPATIAL: u64 = 12;
    pub const PERCOLATION: u64 = 13;
    pub const SCAN: u64 = 14;
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Io(String),
    Model(wrm::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid config: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Model(e) => write!(f, "error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<wrm::Error> for CliError {
    fn from(e: wrm::Error) -> Self {
        CliError::Model(e)
    }
}

/// Exit codes of the `wrm` binary.
pub mod exit {
    pub const CONSISTENT: i32 = 0;
    pub const INVALID_CONFIG: i32 = 1;
    pub const VIOLATED: i32 = 2;
    pub const INCONCLUSIVE: i32 = 3;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Sample,
    Evolve { input: Option<PathBuf> },
    Kernel,
    Probe(ProbeName),
    Scan,
    Render { input: Option<PathBuf> },
    Run,
}

/// In-memory outputs of one command.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
    pub verdicts: Vec<(String, Verdict)>,
}

impl Artifacts {
    fn put(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), bytes.into());
    }

    fn report(&mut self, stem: &str, r: &ProbeReport) {
        self.put(format!("{stem}.csv"), r.to_csv());
        self.put(format!("{stem}.json"), r.to_json());
        self.verdicts.push((stem.to_string(), r.verdict));
    }

    fn merge(&mut self, other: Artifacts) {
        self.files.extend(other.files);
        self.verdicts.extend(other.verdicts);
    }

    pub fn exit_code(&self) -> i32 {
        let worst = self.verdicts.iter().map(|(_, v)| *v).max().unwrap_or(Verdict::Consistent);
        match worst {
            Verdict::Consistent => exit::CONSISTENT,
            Verdict::Inconclusive => exit::INCONCLUSIVE,
            Verdict::Violated => exit::VIOLATED,
        }
    }
}

fn center(w: &Window) -> Vec<f64> {
    let (lo, hi) = w.bounds();
    lo.coords().iter().zip(hi.coords()).map(|(a, b)| 0.5 * (a + b)).collect()
}

fn stream(cfg: &Resolved, id: u64) -> RngStream {
    RngStream::new(cfg.seed, id)
}

fn budget(cfg: &Resolved, n: u64) -> Budget {
    Budget::new(n).with_replicas(cfg.replicas)
}

/// Maps a model error raised while running a config section to a config diagnostic.
fn in_section<'a>(cfg: &'a Resolved, field: &str) -> impl Fn(wrm::Error) -> CliError + 'a {
    let field = field.to_string();
    move |e| match e {
        wrm::Error::Invalid(_) | wrm::Error::RegimeMismatch(_) | wrm::Error::PlusMinusNeedsSymmetric | wrm::Error::NoDecayRate => {
            CliError::Config(cfg.error(&field, e.to_string()))
        }
        other => CliError::Model(other),
    }
}

fn read_configuration(path: &Path) -> Result<Configuration, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_any(&text)?)
}

/// Sample draws, split over replicas, each replica on its own substream.
fn draw_samples(cfg: &Resolved) -> Result<(Vec<Vec<ColoredConfiguration>>, serde_json::Value), CliError> {
    let s = &cfg.config.sampler;
    let params = &cfg.config.model;
    let window = cfg.window(s.window).clone();
    let bc = s.boundary.condition();
    let r = cfg.replicas as usize;
    let counts: Vec<usize> = (0..r).map(|i| s.n_samples / r + usize::from(i < s.n_samples % r)).collect();
    let base = stream(cfg, stream::SAMPLE);
    let runs = counts
        .par_iter()
        .enumerate()
        .map(|(i, &n)| -> Result<(Vec<ColoredConfiguration>, serde_json::Value), CliError> {
            let mut g = base.substream(i as u64).generator();
            if n == 0 {
                return Ok((Vec::new(), serde_json::Value::Null));
            }
            match s.method {
                SamplerMethod::Mcmc => {
                    let mut sched = s.schedule();
                    sched.n_samples = n;
                    let run = sample_wrm_mcmc(&window, params, &bc, &sched, &mut g).map_err(in_section(cfg, "sampler"))?;
                    Ok((run.samples, json!(run.diagnostics)))
                }
                SamplerMethod::Exact => {
                    let mut out = Vec::with_capacity(n);
                    let mut attempts = 0u64;
                    for _ in 0..n {
                        let d = sample_wrm_exact(&window, params, &bc, &mut g, s.max_attempts)?;
                        attempts += d.attempts;
                        out.push(d.config);
                    }
                    Ok((out, json!({ "attempts": attempts, "acceptance_rate": n as f64 / attempts as f64 })))
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (samples, diags): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let meta = json!({
        "seed": cfg.seed,
        "stream": stream::SAMPLE,
        "method": s.method,
        "window": window,
        "boundary": s.boundary,
        "schedule": s.schedule(),
        "replicas": cfg.replicas,
        "diagnostics": diags,
    });
    Ok((samples, meta))
}

fn sample_name(dir: &str, replica: usize, k: usize) -> String {
    format!("{dir}/r{replica:03}_{k:06}.txt")
}

pub fn cmd_sample(cfg: &Resolved) -> Result<Artifacts, CliError> {
    let (samples, meta) = draw_samples(cfg)?;
    let mut out = Artifacts::default();
    for (r, list) in samples.iter().enumerate() {
        for (k, c) in list.iter().enumerate() {
            out.put(sample_name("samples", r, k), write_colored_text(c));
        }
    }
    out.put("sample_meta.json", pretty(&meta));
    Ok(out)
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serialises");
    s.push('\n');
    s
}

pub fn cmd_evolve(cfg: &Resolved, input: Option<&Path>) -> Result<Artifacts, CliError> {
    let t = cfg.config.evolve.as_ref().and_then(|e| e.t).unwrap_or(cfg.config.model.t());
    let base = stream(cfg, stream::EVOLVE);
    let mut out = Artifacts::default();
    match input {
        Some(path) => {
            let c = match read_configuration(path)? {
                Configuration::Colored(c) => c,
                Configuration::Grey(_) => return Err(CliError::Model(wrm::Error::Invalid("evolution needs a coloured configuration".into()))),
            };
            let e = evolve_spinflip(&c, t, &mut base.generator())?;
            out.put("evolved.txt", write_colored_text(&e));
        }
        None => {
            let (samples, meta) = draw_samples(cfg)?;
            for (r, list) in samples.iter().enumerate() {
                for (k, c) in list.iter().enumerate() {
                    let e = evolve_spinflip(c, t, &mut base.substream(r as u64).substream(k as u64).generator())?;
                    out.put(sample_name("evolved", r, k), write_colored_text(&e));
                }
            }
            out.put("sample_meta.json", pretty(&meta));
        }
    }
    out.put("evolve_meta.json", pretty(&json!({ "t": t, "seed": cfg.seed, "stream": stream::EVOLVE })));
    Ok(out)
}

pub fn cmd_kernel(cfg: &Resolved) -> Result<Artifacts, CliError> {
    let k = cfg.config.kernel.as_ref().ok_or_else(|| cfg.error("kernel", "missing [kernel] section"))?;
    let params = &cfg.config.model;
    let d = params.dim();
    let cond = match &k.conditioning {
        Some(src) => src.load(&cfg.base, d).map_err(|m| cfg.error("kernel.conditioning", m))?,
        None => ColoredConfiguration::empty(d),
    };
    let f = observable(k.observable, k.count_cap, &cfg.b);
    let err = in_section(cfg, "kernel");
    let (spec, kept) = match k.kind {
        KernelName::FiniteVolume => {
            let inside = cond.filtered(|p, _| cfg.lambda.contains(p) && cfg.b.depth(p) <= 0.0);
            let outside = k.boundary.condition().materialize(&cfg.lambda, params.a()).map_err(&err)?;
            let n = inside.len();
            (KernelSpec::finite_volume(f, cfg.b.clone(), cfg.lambda.clone(), inside, outside, params).map_err(&err)?, n)
        }
        kind => {
            let kind = match kind {
                KernelName::Infinity => KernelKind::Infinity,
                KernelName::Free => KernelKind::Free,
                KernelName::Plus => KernelKind::PlusMinus(Spin::Plus),
                _ => KernelKind::PlusMinus(Spin::Minus),
            };
            let outside = cond.filtered(|p, _| cfg.lambda.depth(p) <= 0.0);
            let horizon = if k.horizon { Some(Horizon::new(cfg.ambient.clone(), 2.0 * params.a())?) } else { None };
            let n = outside.len();
            (KernelSpec::infinite_volume(kind, f, cfg.lambda.clone(), outside, horizon, params).map_err(&err)?, n)
        }
    };
    let problem = KernelProblem::new(&spec).map_err(&err)?;
    let est = estimate(&problem, &budget(cfg, k.n_samples), stream(cfg, stream::KERNEL))?;
    let mut out = Artifacts::default();
    out.put("kernel.csv", format!("{}\n{}\n", wrm::kernels::KernelEstimate::CSV_HEADER, est.csv_row()));
    out.put(
        "kernel.json",
        pretty(&json!({
            "kind": k.kind,
            "observable": spec.observable,
            "conditioning_points": cond.len(),
            "conditioning_used": kept,
            "cluster_bound": problem.cluster_bound(),
            "estimate": est,
        })),
    );
    Ok(out)
}

fn inner_arm(cfg: &Resolved, extent: f64) -> Result<ColoredConfiguration, CliError> {
    let params = &cfg.config.model;
    if extent == 0.0 {
        return Ok(ColoredConfiguration::empty(params.dim()));
    }
    let arm = build_channel(&ChannelSpec::one_arm(extent, params.a()), params, Spin::Plus)?;
    let c = center(&cfg.b);
    let pts = arm.points().iter().map(|p| p.translated(&c)).collect();
    let moved = ColoredConfiguration::new(params.dim(), pts, arm.spins().to_vec())?;
    Ok(moved.filtered(|p, _| cfg.b.depth(p) <= 0.0))
}

pub fn cmd_probe(cfg: &Resolved, which: ProbeName) -> Result<Artifacts, CliError> {
    let params = &cfg.config.model;
    let p = &cfg.config.probes;
    let stem = which.file_stem();
    let field = format!("probes.{stem}");
    let missing = || cfg.error(&field, format!("missing [{field}] section"));
    let err = in_section(cfg, &field);
    let report = match which {
        ProbeName::Decay => {
            let s = p.decay.as_ref().ok_or_else(missing)?;
            let inner = inner_arm(cfg, s.inner_extent)?;
            let f = observable(s.observable, s.count_cap, &cfg.b);
            probe_decay(params, &cfg.b, &s.distances, &inner, &f, &budget(cfg, s.n_samples), stream(cfg, stream::DECAY)).map_err(&err)?
        }
        ProbeName::Color => {
            let s = p.color.as_ref().ok_or_else(missing)?;
            let f = observable(s.observable, s.count_cap, &cfg.b);
            probe_color_discontinuity(params, &cfg.b, &cfg.lambda, s.cap, &s.n, &f, s.jitter, &budget(cfg, s.n_samples), stream(cfg, stream::COLOR))
                .map_err(&err)?
        }
        ProbeName::Spatial => {
            let s = p.spatial.as_ref().ok_or_else(missing)?;
            let arms = match s.arms {
                ArmsName::One => Arms::One,
                ArmsName::Two => Arms::Two,
            };
            probe_spatial_discontinuity(params, &cfg.b, &s.n, arms, &budget(cfg, s.n_samples), stream(cfg, stream::SPATIAL)).map_err(&err)?
        }
        ProbeName::Percolation => {
            let s = p.percolation.as_ref().ok_or_else(missing)?;
            probe_percolation(params, &s.settings(), &s.boundary.condition(), stream(cfg, stream::PERCOLATION)).map_err(&err)?
        }
    };
    let mut out = Artifacts::default();
    out.report(stem, &report);
    Ok(out)
}

pub fn cmd_scan(cfg: &Resolved) -> Result<Artifacts, CliError> {
    let sc = cfg.config.scan.as_ref().ok_or_else(|| cfg.error("scan", "missing [scan] section"))?;
    let perc = cfg.config.probes.percolation.as_ref().ok_or_else(|| cfg.error("scan", "the scan needs [probes.percolation]"))?;
    let grid = ScanGrid { lambda_plus: sc.lambda_plus.clone(), lambda_minus: sc.lambda_minus.clone(), t: sc.t.clone() };
    let m = &cfg.config.model;
    let (rows, reports) = scan_phase_diagram(m.dim(), m.a(), &grid, &perc.settings(), &perc.boundary.condition(), stream(cfg, stream::SCAN))
        .map_err(in_section(cfg, "scan"))?;
    let mut out = Artifacts::default();
    out.put("phase.csv", phase_csv(&rows));
    out.put("scan.json", pretty(&json!({ "rows": rows, "reports": reports })));
    let worst = reports.iter().map(|r| r.verdict).max().unwrap_or(Verdict::Consistent);
    // Undecided intensity classes are expected in a scan; only violations count.
    out.verdicts.push(("scan".into(), if worst == Verdict::Violated { worst } else { Verdict::Consistent }));
    Ok(out)
}

pub fn cmd_render(cfg: &Resolved, input: Option<&Path>) -> Result<Artifacts, CliError> {
    let a = cfg.config.model.a();
    let input = input.map(Path::to_path_buf).or_else(|| cfg.config.render.as_ref().and_then(|r| r.input.as_ref()).map(|p| cfg.base.join(p)));
    let scene = match input {
        Some(path) => match read_configuration(&path)? {
            Configuration::Grey(g) => Scene::grey(&g, a),
            Configuration::Colored(c) => Scene::colored(&c, a),
        },
        None => {
            let s = &cfg.config.sampler;
            let mut sched = s.schedule();
            sched.n_samples = 1;
            let w = cfg.window(s.window);
            let run = sample_wrm_mcmc(w, &cfg.config.model, &s.boundary.condition(), &sched, &mut stream(cfg, stream::RENDER).generator())
                .map_err(in_section(cfg, "sampler"))?;
            Scene::colored(&run.samples[0], a)
        }
    };
    let scene = scene
        .with_window("ambient", cfg.ambient.clone())
        .with_window("lambda", cfg.lambda.clone())
        .with_window("B", cfg.b.clone());
    let svg = render_svg(&scene).map_err(|e| match e {
        wrm::Error::RenderDimension => CliError::Config(cfg.error("model.d", e.to_string())),
        other => CliError::Model(other),
    })?;
    let mut out = Artifacts::default();
    out.put("render.svg", svg);
    Ok(out)
}

/// Probes listed in `[probes] run`, plus sample files when `sampler.dump` is set.
pub fn cmd_run(cfg: &Resolved) -> Result<Artifacts, CliError> {
    let mut out = Artifacts::default();
    if cfg.config.sampler.dump {
        out.merge(cmd_sample(cfg)?);
    }
    let parts = cfg.config.probes.run.par_iter().map(|&p| cmd_probe(cfg, p)).collect::<Vec<_>>();
    for part in parts {
        out.merge(part?);
    }
    Ok(out)
}

pub fn execute(cmd: &Command, cfg: &Resolved) -> Result<Artifacts, CliError> {
    match cmd {
        Command::Sample => cmd_sample(cfg),
        Command::Evolve { input } => cmd_evolve(cfg, input.as_deref()),
        Command::Kernel => cmd_kernel(cfg),
        Command::Probe(p) => cmd_probe(cfg, *p),
        Command::Scan => cmd_scan(cfg),
        Command::Render { input } => cmd_render(cfg, input.as_deref()),
        Command::Run => cmd_run(cfg),
    }
}

/// Writes the config echo, every artifact and the manifest into `dir`.
pub fn write_artifacts(dir: &Path, echo: &str, art: &Artifacts) -> Result<Vec<ManifestEntry>, CliError> {
    let io = |e: std::io::Error, p: &Path| CliError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let mut files: BTreeMap<String, &[u8]> = art.files.iter().map(|(k, v)| (k.clone(), v.as_slice())).collect();
    files.insert("config.toml".into(), echo.as_bytes());
    let mut entries = Vec::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(e, parent))?;
        }
        std::fs::write(&path, bytes).map_err(|e| io(e, &path))?;
        entries.push(ManifestEntry::of(name, bytes));
    }
    let manifest = dir.join(crate::manifest::MANIFEST_FILE);
    std::fs::write(&manifest, manifest_json(&entries)).map_err(|e| io(e, &manifest))?;
    Ok(entries)
}

/// Runs `cmd` and writes its outputs; returns the exit code.
pub fn run_and_write(cmd: &Command, cfg: &Resolved) -> Result<(Artifacts, i32), CliError> {
    let art = execute(cmd, cfg)?;
    write_artifacts(&cfg.out, &cfg.echo(), &art)?;
    let code = art.exit_code();
    Ok((art, code))
}

/// One `name: verdict` line per report.
pub fn summary(art: &Artifacts) -> Vec<String> {
    art.verdicts.iter().map(|(n, v)| format!("{n}: {}", v.name())).collect()
}
