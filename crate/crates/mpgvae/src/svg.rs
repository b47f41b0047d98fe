//! Minimal hand-written SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title)).unwrap();
}

fn axes(out: &mut String, y_max: f64, y_label: &str) {
    let (x0, y0, x1, y1) = (PAD, H - PAD, W - PAD, PAD);
    writeln!(out, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#).unwrap();
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = y0 - (y0 - y1) * i as f64 / 4.0;
        writeln!(out, r##"<line x1="{}" y1="{y:.1}" x2="{x0}" y2="{y:.1}" stroke="black"/><text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"##, x0 - 4.0, x0 - 6.0, y + 4.0).unwrap();
    }
    writeln!(out, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(y_label)).unwrap();
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = PAD + 16.0 * i as f64;
        let x = W - PAD - 110.0;
        writeln!(
            out,
            r#"<rect x="{x}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{}" y="{:.1}">{}</text>"#,
            y - 9.0,
            COLORS[i % COLORS.len()],
            x + 14.0,
            y,
            escape(name)
        )
        .unwrap();
    }
}

fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&m| m >= v).unwrap()
}

/// Polylines of `(x, y)` series sharing one axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.1.is_finite());
    let (x_min, x_max, y_max) = pts.fold((f64::INFINITY, f64::NEG_INFINITY, 0.0f64), |(a, b, c), p| {
        (a.min(p.0), b.max(p.0), c.max(p.1))
    });
    let y_max = nice_max(y_max);
    axes(&mut out, y_max, y_label);
    let (x_min, x_span) = if x_min.is_finite() && x_max > x_min {
        (x_min, x_max - x_min)
    } else {
        (x_min.min(0.0), 1.0)
    };
    let sx = |x: f64| PAD + (W - 2.0 * PAD) * (x - x_min) / x_span;
    let sy = |y: f64| H - PAD - (H - 2.0 * PAD) * y.max(0.0) / y_max;
    for (i, (_, pts)) in series.iter().enumerate() {
        let d: Vec<String> = pts
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        writeln!(out, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, d.join(" "), COLORS[i % COLORS.len()]).unwrap();
    }
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label)).unwrap();
    let names: Vec<&str> = series.iter().map(|s| s.0).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// One stacked bar per `(label, values)`; `values[i]` belongs to
/// `categories[i]`.
pub fn stacked_bars(title: &str, y_label: &str, categories: &[&str], bars: &[(&str, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let y_max = nice_max(bars.iter().map(|b| b.1.iter().sum::<f64>()).fold(0.0, f64::max));
    axes(&mut out, y_max, y_label);
    let slot = (W - 2.0 * PAD - 130.0) / bars.len().max(1) as f64;
    let scale = (H - 2.0 * PAD) / y_max;
    for (j, (label, values)) in bars.iter().enumerate() {
        let x = PAD + slot * j as f64 + slot * 0.2;
        let mut y = H - PAD;
        for (i, &v) in values.iter().enumerate() {
            let h = v.max(0.0) * scale;
            y -= h;
            writeln!(
                out,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{}"><title>{} {v:.3}</title></rect>"#,
                slot * 0.6,
                COLORS[i % COLORS.len()],
                escape(categories[i])
            )
            .unwrap();
        }
        writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x + slot * 0.3, H - PAD + 16.0, escape(label)).unwrap();
    }
    legend(&mut out, categories);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_documents() {
        let l = line_chart("loss", "epoch", "nats", &[("total", vec![(1.0, 2.0), (2.0, 1.0)])]);
        assert!(l.starts_with("<svg") && l.trim_end().ends_with("</svg>"));
        assert!(l.contains("<polyline"));
        let b = stacked_bars("atoms", "per molecule", &["C", "N"], &[("data", vec![5.0, 1.0]), ("samples", vec![4.0, 2.0])]);
        assert_eq!(b.matches("<rect x=").count(), 4 + 2);
        assert!(line_chart("empty", "x", "y", &[]).contains("</svg>"));
    }

    #[test]
    fn nice_maxima() {
        assert_eq!(nice_max(0.0), 1.0);
        assert_eq!(nice_max(3.2), 5.0);
        assert_eq!(nice_max(0.9), 1.0);
        assert_eq!(nice_max(11.0), 20.0);
    }
}
