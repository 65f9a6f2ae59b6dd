//! Static SVG pictures of configurations and windows.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{ColoredConfiguration, GreyConfiguration, Point, Spin, Window};

const WIDTH_PX: f64 = 800.0;
const MARGIN_PX: f64 = 10.0;

const PLUS_FILL: &str = "#d62728";
const MINUS_FILL: &str = "#1f77b4";
const GREY_FILL: &str = "#7f7f7f";
const OUTLINES: [&str; 4] = ["#000000", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Points, optional spins and labelled window outlines to draw.
#[derive(Clone, Debug)]
pub struct Scene {
    pub dim: usize,
    pub a: f64,
    pub points: Vec<Point>,
    pub spins: Option<Vec<Spin>>,
    pub windows: Vec<(String, Window)>,
}

impl Scene {
    pub fn grey(cfg: &GreyConfiguration, a: f64) -> Self {
        Self { dim: cfg.dim(), a, points: cfg.points().to_vec(), spins: None, windows: Vec::new() }
    }

    pub fn colored(cfg: &ColoredConfiguration, a: f64) -> Self {
        Self { dim: cfg.dim(), a, points: cfg.points().to_vec(), spins: Some(cfg.spins().to_vec()), windows: Vec::new() }
    }

    pub fn with_window(mut self, label: &str, w: Window) -> Self {
        self.windows.push((label.to_string(), w));
        self
    }
}

struct Frame {
    x0: f64,
    y1: f64,
    scale: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        MARGIN_PX + (x - self.x0) * self.scale
    }
    fn y(&self, y: f64) -> f64 {
        MARGIN_PX + (self.y1 - y) * self.scale
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.3}");
    if s == "-0.000" { "0.000".into() } else { s }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// SVG 1.1 document for `scene`. In `d = 1` the line is drawn as a horizontal strip.
pub fn render_svg(scene: &Scene) -> Result<String> {
    let d = scene.dim;
    if d > 2 {
        return Err(Error::RenderDimension);
    }
    if !(scene.a > 0.0) {
        return Err(Error::Invalid("disc radius must be positive".into()));
    }
    if scene.spins.as_ref().is_some_and(|s| s.len() != scene.points.len()) {
        return Err(Error::Invalid("spin count differs from point count".into()));
    }
    if scene.points.iter().any(|p| p.dim() != d) || scene.windows.iter().any(|(_, w)| w.dim() != d) {
        return Err(Error::Invalid("mixed dimensions in scene".into()));
    }
    let a = scene.a;
    let coord = |p: &Point, k: usize| if k < d { p.coords()[k] } else { 0.0 };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &scene.points {
        for k in 0..2 {
            lo[k] = lo[k].min(coord(p, k) - a);
            hi[k] = hi[k].max(coord(p, k) + a);
        }
    }
    for (_, w) in &scene.windows {
        let (wl, wh) = w.bounds();
        for k in 0..2 {
            lo[k] = lo[k].min(coord(&wl, k));
            hi[k] = hi[k].max(coord(&wh, k));
        }
    }
    if d == 1 {
        lo[1] = lo[1].min(-1.5 * a);
        hi[1] = hi[1].max(1.5 * a);
    }
    if !lo[0].is_finite() {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    let scale = (WIDTH_PX - 2.0 * MARGIN_PX) / (hi[0] - lo[0]).max(1e-12);
    let height = (hi[1] - lo[1]) * scale + 2.0 * MARGIN_PX;
    let f = Frame { x0: lo[0], y1: hi[1], scale };

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        num(WIDTH_PX),
        num(height),
        num(WIDTH_PX),
        num(height)
    );
    s.push_str("<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    s.push_str("<g id=\"points\" fill-opacity=\"0.5\" stroke=\"none\">\n");
    for (i, p) in scene.points.iter().enumerate() {
        let fill = match scene.spins.as_ref().map(|s| s[i]) {
            Some(Spin::Plus) => PLUS_FILL,
            Some(Spin::Minus) => MINUS_FILL,
            None => GREY_FILL,
        };
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>",
            num(f.x(coord(p, 0))),
            num(f.y(coord(p, 1))),
            num(a * scale)
        );
    }
    s.push_str("</g>\n");
    s.push_str("<g id=\"windows\" fill=\"none\" stroke-width=\"1.5\">\n");
    for (k, (label, w)) in scene.windows.iter().enumerate() {
        let stroke = OUTLINES[k % OUTLINES.len()];
        let title = escape(label);
        match w {
            Window::Ball { center, radius } if d == 2 => {
                let _ = writeln!(
                    s,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" stroke=\"{stroke}\"><title>{title}</title></circle>",
                    num(f.x(coord(center, 0))),
                    num(f.y(coord(center, 1))),
                    num(radius * scale)
                );
            }
            _ => {
                let (wl, wh) = w.bounds();
                let (y0, y1) = if d == 1 { (-1.5 * a, 1.5 * a) } else { (coord(&wl, 1), coord(&wh, 1)) };
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" stroke=\"{stroke}\"><title>{title}</title></rect>",
                    num(f.x(coord(&wl, 0))),
                    num(f.y(y1)),
                    num((coord(&wh, 0) - coord(&wl, 0)) * scale),
                    num((y1 - y0) * scale)
                );
            }
        }
    }
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}
