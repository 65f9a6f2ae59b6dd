//! Configuration serialisation.
//!
//! Text form: an optional `# dimension d` header, then one line per point,
//! `x1 ... xd [+|-]`. Floats are written in shortest round-trip form, so
//! parse(write(c)) == c bit for bit. JSON form: `{dimension, points, spins}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ColoredConfiguration, GreyConfiguration, Point, Spin};

/// A configuration read from disk: grey when no line carries a spin.
#[derive(Clone, Debug, PartialEq)]
pub enum Configuration {
    Grey(GreyConfiguration),
    Colored(ColoredConfiguration),
}

impl Configuration {
    pub fn dim(&self) -> usize {
        match self {
            Configuration::Grey(g) => g.dim(),
            Configuration::Colored(c) => c.dim(),
        }
    }

    pub fn points(&self) -> &[Point] {
        match self {
            Configuration::Grey(g) => g.points(),
            Configuration::Colored(c) => c.points(),
        }
    }

    pub fn spins(&self) -> Option<&[Spin]> {
        match self {
            Configuration::Grey(_) => None,
            Configuration::Colored(c) => Some(c.spins()),
        }
    }
}

fn write_point(out: &mut String, p: &Point) {
    for (k, x) in p.coords().iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{x:?}"));
    }
}

pub fn write_grey_text(cfg: &GreyConfiguration) -> String {
    let mut out = format!("# dimension {}\n", cfg.dim());
    for p in cfg.points() {
        write_point(&mut out, p);
        out.push('\n');
    }
    out
}

pub fn write_colored_text(cfg: &ColoredConfiguration) -> String {
    let mut out = format!("# dimension {}\n", cfg.dim());
    for (p, s) in cfg.points().iter().zip(cfg.spins()) {
        write_point(&mut out, p);
        out.push(' ');
        out.push(s.symbol());
        out.push('\n');
    }
    out
}

pub fn write_text(cfg: &Configuration) -> String {
    match cfg {
        Configuration::Grey(g) => write_grey_text(g),
        Configuration::Colored(c) => write_colored_text(c),
    }
}

/// Parses the text form. Without a header the dimension is taken from the
/// first data line. Spins must be given on all lines or none.
pub fn parse_text(text: &str) -> Result<Configuration> {
    let mut dim: Option<usize> = None;
    let mut points = Vec::new();
    let mut spins = Vec::new();
    let mut colored: Option<bool> = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("dimension") {
                let d = it
                    .next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| Error::Parse(format!("line {}: bad dimension header", ln + 1)))?;
                dim = Some(d);
            }
            continue;
        }
        let mut toks: Vec<&str> = line.split_whitespace().collect();
        let spin = match toks.last().and_then(|s| Spin::from_symbol(s)) {
            Some(s) => {
                toks.pop();
                Some(s)
            }
            None => None,
        };
        match colored {
            None => colored = Some(spin.is_some()),
            Some(c) if c != spin.is_some() => {
                return Err(Error::Parse(format!("line {}: spins must be given on every line or none", ln + 1)))
            }
            _ => {}
        }
        let coords = toks
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
        let d = *dim.get_or_insert(coords.len());
        if coords.len() != d {
            return Err(Error::Parse(format!("line {}: expected {d} coordinates, found {}", ln + 1, coords.len())));
        }
        points.push(Point::new(&coords).map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?);
        if let Some(s) = spin {
            spins.push(s);
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse("no dimension header and no points".into()))?;
    if colored == Some(true) {
        Ok(Configuration::Colored(ColoredConfiguration::new(dim, points, spins)?))
    } else {
        Ok(Configuration::Grey(GreyConfiguration::new(dim, points)?))
    }
}

#[derive(Serialize, Deserialize)]
struct JsonConfiguration {
    dimension: usize,
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spins: Option<Vec<Spin>>,
}

pub fn write_json(cfg: &Configuration) -> String {
    let doc = JsonConfiguration {
        dimension: cfg.dim(),
        points: cfg.points().iter().map(|p| p.coords().to_vec()).collect(),
        spins: cfg.spins().map(|s| s.to_vec()),
    };
    serde_json::to_string_pretty(&doc).expect("plain data serialises")
}

pub fn parse_json(text: &str) -> Result<Configuration> {
    let doc: JsonConfiguration = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let points = doc.points.iter().map(|c| Point::new(c)).collect::<Result<Vec<_>>>()?;
    match doc.spins {
        Some(s) => Ok(Configuration::Colored(ColoredConfiguration::new(doc.dimension, points, s)?)),
        None => Ok(Configuration::Grey(GreyConfiguration::new(doc.dimension, points)?)),
    }
}

/// Dispatches on the first non-blank character: `{` is JSON, anything else text.
pub fn parse_any(text: &str) -> Result<Configuration> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}
