//! Self-contained SVG documents: one polyline plot and one verdict bar.

use std::fmt::Write;

use eqm_core::analysis::{ScanReport, Verdict};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const PAD: f64 = 40.0;

pub struct Shade {
    pub lo: f64,
    pub hi: f64,
    pub fill: &'static str,
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{:.1}" font-family="monospace" font-size="13">{}</text>"#,
        PAD * 0.6,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `ys` against `xs` with shaded x-ranges behind the curve.
pub fn line_plot(xs: &[f64], ys: &[f64], shades: &[Shade], title: &str) -> String {
    let (x0, x1) = (xs.first().copied().unwrap_or(0.0), xs.last().copied().unwrap_or(1.0));
    let y1 = ys.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE) * 1.05;
    let span = (x1 - x0).max(f64::MIN_POSITIVE);
    let px = |x: f64| PAD + (x - x0) / span * (WIDTH - 2.0 * PAD);
    let py = |y: f64| HEIGHT - PAD - y / y1 * (HEIGHT - 2.0 * PAD);
    let mut out = String::new();
    header(&mut out, title);
    for s in shades {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{PAD}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.25"/>"#,
            px(s.lo),
            (px(s.hi) - px(s.lo)).max(0.5),
            HEIGHT - 2.0 * PAD,
            s.fill
        );
    }
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{b:.2}" x2="{:.2}" y2="{b:.2}" stroke="black"/>"#,
        WIDTH - PAD,
        b = HEIGHT - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{:.1}" font-family="monospace" font-size="11">{x0:.4}</text><text x="{:.1}" y="{:.1}" font-family="monospace" font-size="11" text-anchor="end">{x1:.4}</text>"#,
        HEIGHT - PAD * 0.4,
        WIDTH - PAD,
        HEIGHT - PAD * 0.4
    );
    let mut points = String::new();
    for (x, y) in xs.iter().zip(ys) {
        let _ = write!(points, "{:.2},{:.2} ", px(*x), py(*y));
    }
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="navy" stroke-width="1.2"/>"#,
        points.trim_end()
    );
    out.push_str("</svg>\n");
    out
}

fn verdict_colour(v: Verdict) -> &'static str {
    match v {
        Verdict::Regular => "#3a7d44",
        Verdict::Singular => "#c0392b",
        Verdict::Indeterminate => "#e0a526",
    }
}

/// One coloured cell per mass value.
pub fn verdict_bar(report: &ScanReport) -> String {
    let mut out = String::new();
    header(
        &mut out,
        &format!(
            "{}  gamma={}  regular {:.1}%",
            report.potential,
            report.gamma,
            100.0 * report.regular_fraction
        ),
    );
    let n = report.rows.len().max(1) as f64;
    let w = (WIDTH - 2.0 * PAD) / n;
    for (k, row) in report.rows.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{PAD}" width="{:.2}" height="{:.2}" fill="{}"><title>s={} {}</title></rect>"#,
            PAD + k as f64 * w,
            w,
            HEIGHT - 2.0 * PAD - 20.0,
            verdict_colour(row.verdict),
            row.s,
            row.verdict.as_str()
        );
    }
    if let (Some(a), Some(b)) = (report.s_values.first(), report.s_values.last()) {
        let _ = writeln!(
            out,
            r#"<text x="{PAD}" y="{:.1}" font-family="monospace" font-size="11">s={a}</text><text x="{:.1}" y="{:.1}" font-family="monospace" font-size="11" text-anchor="end">s={b}</text>"#,
            HEIGHT - PAD + 4.0,
            WIDTH - PAD,
            HEIGHT - PAD + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed() {
        let xs = [0.0, 0.5, 1.0];
        let svg = line_plot(&xs, &[0.0, 1.0, 0.0], &[Shade { lo: 0.2, hi: 0.8, fill: "green" }], "a<b");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}
