use std::fmt::Write;

use msgraph_core::similarity::SimilaritySeries;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

/// Static line chart of a similarity series. Injected pairs, when labelled,
/// get a shaded background.
pub fn line_chart(series: &SimilaritySeries) -> String {
    let (lo, hi) = series.metric.range();
    let n = series.len().max(2);
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v.clamp(lo, hi) - lo) / (hi - lo);
    let step = (WIDTH - 2.0 * MARGIN) / (n - 1) as f64;

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(labels) = &series.labels {
        for (i, l) in labels.iter().enumerate() {
            if l.is_injected() {
                let _ = writeln!(
                    out,
                    r##"<rect x="{:.2}" y="{MARGIN}" width="{:.2}" height="{}" fill="#f4c7c3"/>"##,
                    x(i) - step / 2.0,
                    step,
                    HEIGHT - 2.0 * MARGIN
                );
            }
        }
    }
    let _ = writeln!(
        out,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{v}</text>"#, MARGIN - 4.0, y(v) + 4.0);
    }
    let points: Vec<String> = series.values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
    let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.2"/>"##, points.join(" "));
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{} similarity, window {} ({} pairs)</text>"#,
        WIDTH / 2.0,
        MARGIN / 2.0,
        series.metric,
        series.window_size,
        series.len()
    );
    out.push_str("</svg>\n");
    out
}
