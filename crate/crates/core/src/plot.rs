//! Standalone SVG figures. Every figure embeds its numbers as a comment so
//! plots diff cleanly and can be read back without the CSV.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

/// One polyline of a line chart, optionally with symmetric error bars.
#[derive(Clone, Debug, Default)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub err: Option<Vec<f64>>,
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn comment_safe(s: &str) -> String {
    s.replace("--", "- -")
}

fn header(out: &mut String, title: &str, w: f64, h: f64) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .expect("write to string");
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).expect("write to string");
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    )
    .expect("write to string");
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Line chart; with `log_y` the y axis shows `log10` of positive values.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], log_y: bool) -> String {
    let tf = |v: f64| if log_y { if v > 0.0 { v.log10() } else { f64::NAN } } else { v };
    let mut out = String::new();
    header(&mut out, title, W, H);
    out.push_str("<!-- data\nseries,x,y,err\n");
    for s in series {
        for (i, (x, y)) in s.x.iter().zip(&s.y).enumerate() {
            let e = s.err.as_ref().map(|e| e[i].to_string()).unwrap_or_default();
            writeln!(out, "{},{x},{y},{e}", comment_safe(&s.label)).expect("write to string");
        }
    }
    out.push_str("-->\n");
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| {
        s.y.iter().enumerate().flat_map(move |(i, y)| {
            let e = s.err.as_ref().map_or(0.0, |e| e[i]);
            [tf(y - e), tf(y + e), tf(*y)]
        })
    }));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    )
    .expect("write to string");
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let ylab = if log_y { format!("1e{fy:.1}") } else { format!("{fy:.3}") };
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.3}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#,
            px(fx),
            H - MARGIN + 15.0,
            MARGIN - 4.0,
            py(fy) + 4.0
        )
        .expect("write to string");
    }
    writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 15.0,
        escape(xlabel)
    )
    .expect("write to string");
    writeln!(
        out,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    )
    .expect("write to string");
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(_, y)| tf(**y).is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(tf(*y))))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            pts.join(" ")
        )
        .expect("write to string");
        if let Some(err) = &s.err {
            for ((x, y), e) in s.x.iter().zip(&s.y).zip(err) {
                let (a, b) = (tf(y - e), tf(y + e));
                if a.is_finite() && b.is_finite() {
                    writeln!(
                        out,
                        r#"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="{color}"/>"#,
                        px(*x),
                        py(a),
                        py(b)
                    )
                    .expect("write to string");
                }
            }
        }
        writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - MARGIN - 115.0,
            MARGIN + 15.0 + 15.0 * k as f64,
            escape(&s.label)
        )
        .expect("write to string");
    }
    out.push_str("</svg>\n");
    out
}

/// Heat map of a row-major `rows x cols` matrix. Values are clamped to
/// `[lo, hi]`; blue for `lo`, white in the middle, red for `hi`.
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], values: &[f64], lo: f64, hi: f64) -> String {
    let (rows, cols) = (row_labels.len(), col_labels.len());
    assert_eq!(values.len(), rows * cols, "heatmap shape");
    let cell = (480.0 / rows.max(cols) as f64).clamp(2.0, 24.0);
    let left = 140.0;
    let top = 40.0;
    let w = left + cell * cols as f64 + 20.0;
    let h = top + cell * rows as f64 + 20.0;
    let mut out = String::new();
    header(&mut out, title, w.max(300.0), h);
    out.push_str("<!-- data\nrow,col,value\n");
    for r in 0..rows {
        for c in 0..cols {
            writeln!(
                out,
                "{},{},{}",
                comment_safe(&row_labels[r]),
                comment_safe(&col_labels[c]),
                values[r * cols + c]
            )
            .expect("write to string");
        }
    }
    out.push_str("-->\n");
    for r in 0..rows {
        if cell >= 8.0 {
            writeln!(
                out,
                r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="{:.0}">{}</text>"#,
                left - 4.0,
                top + cell * (r as f64 + 0.75),
                (cell * 0.7).min(11.0),
                escape(&row_labels[r])
            )
            .expect("write to string");
        }
        for c in 0..cols {
            let v = values[r * cols + c];
            let t = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
            let color = if !v.is_finite() {
                "#888888".to_string()
            } else if t < 0.5 {
                let k = (255.0 * t * 2.0) as u8;
                format!("#{k:02x}{k:02x}ff")
            } else {
                let k = (255.0 * (1.0 - t) * 2.0) as u8;
                format!("#ff{k:02x}{k:02x}")
            };
            writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="{color}"/>"#,
                left + cell * c as f64,
                top + cell * r as f64
            )
            .expect("write to string");
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_embeds_data() {
        let s = Series {
            label: "a".into(),
            x: vec![0.0, 1.0],
            y: vec![1.0, 2.0],
            ..Series::default()
        };
        let svg = line_chart("t", "x", "y", &[s], false);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("a,1,2,"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn heatmap_embeds_data() {
        let labels = vec!["p".to_string(), "q".to_string()];
        let svg = heatmap("m", &labels, &labels, &[1.0, -1.0, 0.0, 1.0], -1.0, 1.0);
        assert!(svg.contains("p,q,-1"));
        assert_eq!(svg.matches("<rect x=").count(), 4);
    }
}
