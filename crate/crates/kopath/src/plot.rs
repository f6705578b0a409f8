//! Minimal deterministic SVG line charts.
//!
//! Every figure the tool emits (schedules over time, λ̂ over angle, loss
//! traces) is a handful of polylines, so this module renders exactly that:
//! fixed margins, a 1-2-5 tick ladder, a fixed palette and two-decimal
//! coordinate formatting. Identical inputs produce byte-identical SVG,
//! which keeps figures diffable and reproducibility checks trivial — no
//! plotting dependency pulls in system fonts or timestamps here.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Rendering failures.
#[derive(Debug, Error)]
pub enum PlotError {
    /// No series, or a series without points.
    #[error("nothing to plot: empty series")]
    EmptySeries,
    /// A series whose x and y vectors differ in length.
    #[error("series '{label}' has {nx} x values but {ny} y values")]
    MismatchedLengths { label: String, nx: usize, ny: usize },
    /// NaN or infinite coordinate.
    #[error("series '{label}' contains a non-finite value")]
    NonFinite { label: String },
    /// Underlying file-system failure.
    #[error("could not write plot: {0}")]
    Io(#[from] std::io::Error),
}

/// One polyline.
#[derive(Debug, Clone)]
pub struct Series {
    /// Legend label.
    pub label: String,
    /// X coordinates.
    pub xs: Vec<f64>,
    /// Y coordinates, same length as `xs`.
    pub ys: Vec<f64>,
}

impl Series {
    /// Convenience constructor.
    pub fn new(label: impl Into<String>, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        Series { label: label.into(), xs, ys }
    }
}

/// Figure-level options.
#[derive(Debug, Clone)]
pub struct PlotStyle {
    /// Title drawn above the axes.
    pub title: String,
    /// X-axis caption.
    pub x_label: String,
    /// Y-axis caption.
    pub y_label: String,
    /// Total width in pixels.
    pub width: u32,
    /// Total height in pixels.
    pub height: u32,
}

impl Default for PlotStyle {
    fn default() -> Self {
        PlotStyle {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            width: 800,
            height: 500,
        }
    }
}

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

/// Fixed line palette, cycled by series index.
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Render a line chart to an SVG string. Output is a pure function of the
/// inputs, byte for byte.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::EmptySeries);
    }
    for s in series {
        if s.xs.len() != s.ys.len() {
            return Err(PlotError::MismatchedLengths {
                label: s.label.clone(),
                nx: s.xs.len(),
                ny: s.ys.len(),
            });
        }
        if s.xs.is_empty() {
            return Err(PlotError::EmptySeries);
        }
        if s.xs.iter().chain(&s.ys).any(|v| !v.is_finite()) {
            return Err(PlotError::NonFinite { label: s.label.clone() });
        }
    }

    let (mut x_lo, mut x_hi) = bounds(series.iter().flat_map(|s| s.xs.iter().copied()));
    let (mut y_lo, mut y_hi) = bounds(series.iter().flat_map(|s| s.ys.iter().copied()));
    pad_if_degenerate(&mut x_lo, &mut x_hi);
    pad_if_degenerate(&mut y_lo, &mut y_hi);

    let w = style.width as f64;
    let h = style.height as f64;
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\" font-family=\"monospace\" font-size=\"12\">\n",
        style.width, style.height, style.width, style.height
    );
    let _ = write!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n",
        style.width, style.height
    );

    // Grid and tick labels.
    let (x_ticks, x_step) = ticks(x_lo, x_hi);
    let (y_ticks, y_step) = ticks(y_lo, y_hi);
    for &t in &x_ticks {
        let px = sx(t);
        let _ = write!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        );
        let _ = write!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            tick_label(t, x_step)
        );
    }
    for &t in &y_ticks {
        let py = sy(t);
        let _ = write!(
            out,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" fill=\"#333333\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            py + 4.0,
            tick_label(t, y_step)
        );
    }

    // Axes frame.
    let _ = write!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        MARGIN_LEFT, MARGIN_TOP
    );

    // Series polylines.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut d = String::new();
        for (k, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        let _ = write!(
            out,
            "<path class=\"series\" d=\"{d}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"1.5\"/>\n"
        );
    }

    // Legend, top-right inside the frame.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_TOP + 16.0 + 16.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w - 150.0;
        let _ = write!(
            out,
            "<line x1=\"{lx:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
             stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            ly - 4.0,
            lx + 24.0,
            ly - 4.0
        );
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{ly:.2}\" fill=\"#333333\">{}</text>\n",
            lx + 30.0,
            escape(&s.label)
        );
    }

    // Captions.
    if !style.title.is_empty() {
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\" \
             fill=\"#000000\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            escape(&style.title)
        );
    }
    if !style.x_label.is_empty() {
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#000000\">{}</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            h - 12.0,
            escape(&style.x_label)
        );
    }
    if !style.y_label.is_empty() {
        let _ = write!(
            out,
            "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" \
             transform=\"rotate(-90 16 {:.2})\" fill=\"#000000\">{}</text>\n",
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&style.y_label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Render and write to disk.
pub fn save_svg(series: &[Series], style: &PlotStyle, path: &Path) -> Result<(), PlotError> {
    let svg = render_svg(series, style)?;
    std::fs::write(path, svg)?;
    Ok(())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn pad_if_degenerate(lo: &mut f64, hi: &mut f64) {
    if *hi - *lo < 1e-12 {
        let pad = lo.abs().max(0.5);
        *lo -= pad;
        *hi += pad;
    }
}

/// Roughly five ticks on a 1-2-5 ladder; returns the tick positions and
/// the step (used to pick label precision).
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm < 1.5 {
            1.0
        } else if norm < 3.0 {
            2.0
        } else if norm < 7.0 {
            5.0
        } else {
            10.0
        };
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        // Snap values that should be exact multiples (avoids "-0.00").
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    (out, step)
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
