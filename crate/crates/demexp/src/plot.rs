//! Minimal self-contained SVG line plots for the experiment harness.

const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#3a7d44", "#bf8b12", "#6b4e9b", "#3b3b3b"];

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_x: false,
            log_y: false,
            series: Vec::new(),
        }
    }
}

/// Lay panels out in a grid and render one standalone SVG document.
pub fn render_grid(panels: &[Panel], cols: usize) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows.max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    for (i, panel) in panels.iter().enumerate() {
        let ox = (i % cols) as f64 * PANEL_W;
        let oy = (i / cols) as f64 * PANEL_H;
        out.push_str(&format!("<g transform=\"translate({ox},{oy})\">\n"));
        render_panel(panel, &mut out);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

fn transform(v: f64, log: bool) -> Option<f64> {
    if !v.is_finite() {
        return None;
    }
    if log {
        if v <= 0.0 {
            None
        } else {
            Some(v.log10())
        }
    } else {
        Some(v)
    }
}

fn render_panel(panel: &Panel, out: &mut String) {
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;

    // Transformed data ranges.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &panel.series {
        for &(x, y) in &s.points {
            if let (Some(tx), Some(ty)) = (transform(x, panel.log_x), transform(y, panel.log_y)) {
                xs.push(tx);
                ys.push(ty);
            }
        }
    }
    let (x_lo, x_hi) = padded_range(&xs);
    let (y_lo, y_hi) = padded_range(&ys);
    let sx = |tx: f64| MARGIN_L + (tx - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |ty: f64| MARGIN_T + plot_h - (ty - y_lo) / (y_hi - y_lo) * plot_h;

    out.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#444\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        PANEL_W / 2.0,
        escape(&panel.title)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        PANEL_H - 8.0,
        escape(&panel.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" \
         transform=\"rotate(-90 14 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(&panel.y_label)
    ));

    // Ticks.
    for t in ticks(x_lo, x_hi, panel.log_x) {
        let px = sx(t);
        out.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#444\"/>\n",
            MARGIN_T + plot_h,
            MARGIN_T + plot_h + 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n",
            MARGIN_T + plot_h + 16.0,
            tick_label(t, panel.log_x)
        ));
    }
    for t in ticks(y_lo, y_hi, panel.log_y) {
        let py = sy(t);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{MARGIN_L}\" y2=\"{py}\" stroke=\"#444\"/>\n",
            MARGIN_L - 4.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
            MARGIN_L - 7.0,
            py + 3.0,
            tick_label(t, panel.log_y)
        ));
    }

    // Series.
    for (k, s) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter_map(|&(x, y)| {
                Some((transform(x, panel.log_x)?, transform(y, panel.log_y)?))
            })
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|&(tx, ty)| format!("{:.2},{:.2}", sx(tx), sy(ty)))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
                path.join(" ")
            ));
        }
        for &(tx, ty) in &pts {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.4\" fill=\"{color}\"/>\n",
                sx(tx),
                sy(ty)
            ));
        }
        // Legend entry.
        let ly = MARGIN_T + 14.0 + 14.0 * k as f64;
        let lx = MARGIN_L + plot_w - 110.0;
        out.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 16.0
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n",
            lx + 20.0,
            ly + 3.0,
            escape(&s.label)
        ));
    }
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.06 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let mut out = Vec::new();
        let mut k = lo.ceil() as i64;
        while (k as f64) <= hi {
            out.push(k as f64);
            k += 1;
        }
        if out.len() < 2 {
            // fall back to linear ticks in log space
            return linear_ticks(lo, hi);
        }
        out
    } else {
        linear_ticks(lo, hi)
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= 5.5)
        .unwrap_or(mag * 10.0);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 * span.abs() {
        out.push(t);
        t += step;
    }
    out
}

fn tick_label(t: f64, log: bool) -> String {
    if log {
        let v = 10f64.powf(t);
        if (t - t.round()).abs() < 1e-9 {
            format_number(v)
        } else {
            format!("{v:.3}")
        }
    } else {
        format_number(t)
    }
}

fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 0.001 && a < 100_000.0 {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_named_series_on_log_axes() {
        let mut panel = Panel::new("mse by n", "N", "MSE");
        panel.log_x = true;
        panel.log_y = true;
        panel.series.push(Series {
            label: "linear".into(),
            points: vec![(64.0, 0.1), (512.0, 0.01), (4096.0, 0.001)],
        });
        panel.series.push(Series {
            label: "gbart".into(),
            points: vec![(64.0, 0.2), (512.0, 0.012), (4096.0, 0.0012)],
        });
        let svg = render_grid(&[panel], 3);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("linear") && svg.contains("gbart"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn survives_empty_and_degenerate_input() {
        let svg = render_grid(&[], 2);
        assert!(svg.contains("</svg>"));
        let mut panel = Panel::new("t", "x", "y");
        panel.log_y = true;
        panel.series.push(Series {
            label: "s".into(),
            points: vec![(1.0, 0.0), (2.0, -1.0)], // dropped on log axis
        });
        let svg = render_grid(&[panel], 1);
        assert!(svg.contains("</svg>"));
    }
}
