//! Static HTML report with inline SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 300.0;
const PAD_L: f64 = 60.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 20.0;
const PAD_B: f64 = 60.0;

pub struct Bar {
    pub label: String,
    pub value: f64,
    /// Optional interval drawn as a whisker.
    pub interval: Option<(f64, f64)>,
}

pub struct Point {
    pub x: f64,
    pub y: f64,
    pub positive: bool,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    (lo - if lo < 0.0 { pad } else { 0.0 }, hi + pad)
}

fn axis_y(svg: &mut String, lo: f64, hi: f64, y: impl Fn(f64) -> f64) {
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let py = y(v);
        let _ = write!(
            svg,
            r##"<line x1="{PAD_L}" x2="{}" y1="{py:.1}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" font-size="11" text-anchor="end">{v:.3}</text>"##,
            W - PAD_R,
            PAD_L - 6.0,
            py + 4.0
        );
    }
}

pub fn bar_chart(bars: &[Bar]) -> String {
    let (lo, hi) = extent(bars.iter().flat_map(|b| {
        let (a, c) = b.interval.unwrap_or((b.value, b.value));
        [b.value, a, c]
    }));
    let y = |v: f64| PAD_T + (hi - v) / (hi - lo) * (H - PAD_T - PAD_B);
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    axis_y(&mut svg, lo, hi, y);
    let slot = (W - PAD_L - PAD_R) / bars.len().max(1) as f64;
    for (i, b) in bars.iter().enumerate() {
        let x = PAD_L + slot * i as f64 + slot * 0.15;
        let bw = slot * 0.7;
        let (top, bottom) = if b.value >= 0.0 { (y(b.value), y(0.0)) } else { (y(0.0), y(b.value)) };
        let _ = write!(
            svg,
            r##"<rect x="{x:.1}" y="{top:.1}" width="{bw:.1}" height="{:.1}" fill="#4a78b5"/>"##,
            (bottom - top).max(0.5)
        );
        if let Some((a, c)) = b.interval {
            let cx = x + bw / 2.0;
            let _ = write!(
                svg,
                r##"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="#222"/><line x1="{:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#222"/><line x1="{:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#222"/>"##,
                y(a),
                y(c),
                cx - 5.0,
                cx + 5.0,
                y(a),
                y(a),
                cx - 5.0,
                cx + 5.0,
                y(c),
                y(c)
            );
        }
        let _ = write!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            x + bw / 2.0,
            H - PAD_B + 16.0,
            escape(&b.label)
        );
    }
    svg.push_str("</svg>");
    svg
}

pub fn scatter(points: &[Point], x_label: &str, y_label: &str) -> String {
    let (xlo, xhi) = extent(points.iter().map(|p| p.x));
    let (ylo, yhi) = extent(points.iter().map(|p| p.y));
    let px = |v: f64| PAD_L + (v - xlo) / (xhi - xlo) * (W - PAD_L - PAD_R);
    let py = |v: f64| PAD_T + (yhi - v) / (yhi - ylo) * (H - PAD_T - PAD_B);
    let mut svg = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">"#);
    axis_y(&mut svg, ylo, yhi, py);
    for p in points {
        let color = if p.positive { "#c0392b" } else { "#2e86c1" };
        let _ = write!(
            svg,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}" fill-opacity="0.7"/>"#,
            px(p.x),
            py(p.y)
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text><text x="14" y="{:.1}" font-size="12" transform="rotate(-90 14 {:.1})" text-anchor="middle">{}</text></svg>"#,
        (W + PAD_L) / 2.0,
        H - 12.0,
        escape(x_label),
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    svg
}

/// Assembles a page from (heading, html body) sections.
pub fn page(title: &str, config_hash: &str, sections: &[(String, String)]) -> String {
    let mut html = format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title>\
         <style>body{{font-family:sans-serif;max-width:720px;margin:2em auto}}table{{border-collapse:collapse}}\
         td,th{{border:1px solid #ccc;padding:2px 8px;text-align:right}}</style></head><body>\
         <h1>{t}</h1><p>config {h}</p>\n",
        t = escape(title),
        h = escape(config_hash)
    );
    for (heading, body) in sections {
        let _ = writeln!(html, "<h2>{}</h2>\n{body}", escape(heading));
    }
    html.push_str("</body></html>\n");
    html
}

/// Renders rows of cells as a table; the first row is the header.
pub fn table(rows: &[Vec<String>]) -> String {
    let mut html = String::from("<table>");
    for (i, r) in rows.iter().enumerate() {
        let tag = if i == 0 { "th" } else { "td" };
        html.push_str("<tr>");
        for c in r {
            let _ = write!(html, "<{tag}>{}</{tag}>", escape(c));
        }
        html.push_str("</tr>");
    }
    html.push_str("</table>");
    html
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let bars = [
            Bar { label: "MCC".into(), value: 0.4, interval: Some((0.3, 0.5)) },
            Bar { label: "a<b".into(), value: -0.2, interval: None },
        ];
        let svg = bar_chart(&bars);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("a&lt;b"));
        let s = scatter(&[Point { x: 1.0, y: 2.0, positive: true }], "x", "y");
        assert_eq!(s.matches("<circle").count(), 1);
        let p = page("r", "abc", &[("m".into(), svg)]);
        assert!(p.contains("<h2>m</h2>"));
    }

    #[test]
    fn empty_and_constant_inputs_do_not_divide_by_zero() {
        assert!(!bar_chart(&[]).contains("NaN"));
        let pts: Vec<Point> = (0..3).map(|_| Point { x: 1.0, y: 1.0, positive: false }).collect();
        let s = scatter(&pts, "x", "y");
        assert!(!s.contains("NaN"));
    }
}
