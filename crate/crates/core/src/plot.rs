//! Minimal self-contained SVG charts: forest plot, empirical CDFs, bars.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const MARGIN_LEFT: f64 = 200.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1b6ca8", "#d1495b", "#66a182", "#edae49"];

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub label: String,
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestGroup {
    pub label: String,
    pub items: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    pub interval: Option<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, height: f64, title: &str, metadata: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        "<metadata><![CDATA[{}]]></metadata>",
        metadata.replace("]]>", "]]]]><![CDATA[>")
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    );
}

/// Data range padded by 5%, always containing `include`.
fn range(values: impl Iterator<Item = f64>, include: Option<f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()).chain(include) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Axis {
    lo: f64,
    hi: f64,
    start: f64,
    len: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        let v = v.clamp(self.lo, self.hi);
        self.start + (v - self.lo) / (self.hi - self.lo) * self.len
    }

    fn ticks(&self) -> Vec<f64> {
        let span = self.hi - self.lo;
        let raw = span / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn x_axis(out: &mut String, axis: &Axis, y: f64, label: &str) {
    let _ = writeln!(
        out,
        r##"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="#333"/>"##,
        axis.start,
        axis.start + axis.len
    );
    for t in axis.ticks() {
        let x = axis.map(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x}" y1="{y}" x2="{x}" y2="{}" stroke="#333"/><text x="{x}" y="{}" text-anchor="middle">{}</text>"##,
            y + 4.0,
            y + 17.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        axis.start + axis.len / 2.0,
        y + 36.0,
        esc(label)
    );
}

/// Horizontal interval plot, one block per group and one colour per item
/// position (the same position means the same series across groups).
pub fn forest_plot(title: &str, groups: &[ForestGroup], x_label: &str, metadata: &str) -> String {
    let row_h = 18.0;
    let n_rows: usize = groups.iter().map(|g| g.items.len() + 1).sum();
    let height = MARGIN_TOP + MARGIN_BOTTOM + row_h * n_rows.max(1) as f64 + 30.0;
    let (lo, hi) = range(
        groups
            .iter()
            .flat_map(|g| g.items.iter().flat_map(|i| [i.low, i.high, i.estimate])),
        Some(0.0),
    );
    let axis = Axis {
        lo,
        hi,
        start: MARGIN_LEFT,
        len: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
    };
    let mut out = String::new();
    header(&mut out, height, title, metadata);
    let plot_bottom = height - MARGIN_BOTTOM - 30.0;
    let zero = axis.map(0.0);
    let _ = writeln!(
        out,
        r##"<line x1="{zero}" y1="{MARGIN_TOP}" x2="{zero}" y2="{plot_bottom}" stroke="#999" stroke-dasharray="4 3"/>"##
    );
    let mut y = MARGIN_TOP;
    for g in groups {
        let _ = writeln!(
            out,
            r#"<text x="8" y="{}" font-weight="bold">{}</text>"#,
            y + 12.0,
            esc(&g.label)
        );
        y += row_h;
        for (k, item) in g.items.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let cy = y + row_h / 2.0;
            let _ = writeln!(
                out,
                r#"<text x="20" y="{}">{}</text><line x1="{}" y1="{cy}" x2="{}" y2="{cy}" stroke="{colour}" stroke-width="2"/><circle cx="{}" cy="{cy}" r="4" fill="{colour}"/>"#,
                cy + 4.0,
                esc(&item.label),
                axis.map(item.low),
                axis.map(item.high),
                axis.map(item.estimate)
            );
            y += row_h;
        }
    }
    x_axis(&mut out, &axis, plot_bottom, x_label);
    out.push_str("</svg>\n");
    out
}

/// Empirical CDF step curves, one per series.
pub fn cdf_plot(title: &str, series: &[(&str, &[f64])], x_label: &str, metadata: &str) -> String {
    let height = 460.0;
    let (_, hi) = range(series.iter().flat_map(|(_, v)| v.iter().copied()), Some(0.0));
    let x = Axis {
        lo: 0.0,
        hi,
        start: MARGIN_LEFT / 2.0,
        len: WIDTH - MARGIN_LEFT / 2.0 - MARGIN_RIGHT,
    };
    let top = MARGIN_TOP;
    let bottom = height - MARGIN_BOTTOM - 20.0;
    let y_of = |f: f64| bottom - f * (bottom - top);
    let mut out = String::new();
    header(&mut out, height, title, metadata);
    let _ = writeln!(
        out,
        r##"<line x1="{0}" y1="{top}" x2="{0}" y2="{bottom}" stroke="#333"/>"##,
        x.start
    );
    for f in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x.start - 6.0,
            y_of(f) + 4.0,
            fmt_tick(f)
        );
    }
    for (k, (label, values)) in series.iter().enumerate() {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let colour = PALETTE[k % PALETTE.len()];
        let n = sorted.len().max(1) as f64;
        let mut path = format!("M{} {}", x.map(0.0), y_of(0.0));
        for (m, v) in sorted.iter().enumerate() {
            let px = x.map(*v);
            let _ = write!(
                path,
                " L{px:.2} {:.2} L{px:.2} {:.2}",
                y_of(m as f64 / n),
                y_of((m + 1) as f64 / n)
            );
        }
        let _ = write!(
            path,
            " L{} {}",
            x.map(hi),
            y_of(if sorted.is_empty() { 0.0 } else { 1.0 })
        );
        let _ = writeln!(
            out,
            r#"<path d="{path}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#
        );
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{colour}"/><text x="{}" y="{}">{} (n = {})</text>"#,
            WIDTH - 220.0,
            ly,
            WIDTH - 202.0,
            ly + 5.0,
            esc(label),
            sorted.len()
        );
    }
    x_axis(&mut out, &x, bottom, x_label);
    out.push_str("</svg>\n");
    out
}

/// Vertical bars with optional whiskers; infinite whisker ends are clipped.
pub fn bar_chart(title: &str, bars: &[Bar], y_label: &str, metadata: &str) -> String {
    let height = 420.0;
    let top = MARGIN_TOP;
    let bottom = height - MARGIN_BOTTOM;
    let left = 80.0;
    let (lo, hi) = range(
        bars.iter().flat_map(|b| {
            let (l, h) = b.interval.unwrap_or((b.value, b.value));
            [b.value, l, h]
        }),
        Some(0.0),
    );
    let y_of = |v: f64| bottom - (v.clamp(lo, hi) - lo) / (hi - lo) * (bottom - top);
    let mut out = String::new();
    header(&mut out, height, title, metadata);
    let slot = (WIDTH - left - MARGIN_RIGHT) / bars.len().max(1) as f64;
    let zero = y_of(0.0);
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{zero}" x2="{}" y2="{zero}" stroke="#333"/>"##,
        WIDTH - MARGIN_RIGHT
    );
    let yaxis = Axis {
        lo,
        hi,
        start: 0.0,
        len: 1.0,
    };
    for t in yaxis.ticks() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y_of(t) + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        esc(y_label)
    );
    for (k, b) in bars.iter().enumerate() {
        let cx = left + slot * (k as f64 + 0.5);
        let w = slot * 0.6;
        let (y0, y1) = (y_of(b.value).min(zero), y_of(b.value).max(zero));
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{y0}" width="{w}" height="{}" fill="{}"/>"#,
            cx - w / 2.0,
            y1 - y0,
            PALETTE[0]
        );
        if let Some((l, h)) = b.interval {
            let _ = writeln!(
                out,
                r##"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="#222" stroke-width="1.5"/>"##,
                y_of(l),
                y_of(h)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            bottom + 18.0,
            esc(&b.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
