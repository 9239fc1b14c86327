//! Trajectory output: CSV rows and an SVG line chart of the mean
//! normalized best score.

use std::fmt::Write;

use super::aggregate::AggregateRow;
use super::Trajectory;

pub const CSV_HEADER: &str = "seed,iteration,score,best_so_far,normalized,feedback_kind";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per iteration of every trajectory. `normalized` is empty
/// without a baseline or before the first success.
pub fn to_csv(trajectories: &[Trajectory], baseline: Option<f64>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for t in trajectories {
        for r in &t.records {
            let normalized = baseline.and_then(|b| r.best_so_far.map(|s| s / b));
            writeln!(
                out,
                "{},{},{},{},{},{}",
                t.seed,
                r.iteration,
                opt(r.score),
                opt(r.best_so_far),
                opt(normalized),
                r.feedback.kind.as_str()
            )
            .expect("writing to a string");
        }
    }
    out
}

/// A small line chart of mean normalized best-so-far per iteration.
pub fn to_svg(rows: &[AggregateRow], title: &str) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let n = rows.len().max(1);
    let ymax = rows.iter().map(|r| r.mean_normalized).fold(1.0_f64, f64::max).max(1e-9);
    let x = |i: usize| {
        left + if n > 1 {
            pw * i as f64 / (n - 1) as f64
        } else {
            pw / 2.0
        }
    };
    let y = |v: f64| top + ph * (1.0 - v / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        top + ph
    );
    for k in 0..=4 {
        let v = ymax * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#,
            left - 6.0,
            y(v) + 4.0,
            v
        );
    }
    let step = n.div_ceil(10).max(1);
    for (i, r) in rows.iter().enumerate() {
        if i % step == 0 || i + 1 == rows.len() {
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                x(i),
                top + ph + 18.0,
                r.iteration
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">normalized throughput</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    if ymax >= 1.0 {
        let _ = writeln!(
            s,
            r#"<line x1="{left}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="gray" stroke-dasharray="4 4"/>"#,
            y(1.0),
            left + pw,
            y(1.0)
        );
    }
    let points: Vec<String> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{:.1},{:.1}", x(i), y(r.mean_normalized)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
