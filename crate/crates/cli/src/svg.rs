use std::fmt::Write;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 50.0;

/// Line plot of test SSE against interface width with the chosen width
/// marked.
pub fn sse_plot(sse: &[f64], chosen: usize) -> String {
    let k_max = sse.len().saturating_sub(1).max(1) as f64;
    let top = sse.iter().copied().fold(0.0, f64::max);
    let top = if top > 0.0 { top } else { 1.0 };
    let x = |k: usize| MARGIN + k as f64 / k_max * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - v / top * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // axes
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..sse.len() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{k}</text>"#,
            x(k),
            y0 + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
        x0 - 6.0,
        y1 + 4.0,
        format_tick(top)
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0</text>"#, x0 - 6.0, y0 + 4.0);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">interface width k</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">test SSE</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );

    let points: Vec<String> = sse
        .iter()
        .enumerate()
        .map(|(k, &v)| format!("{:.1},{:.1}", x(k), y(v)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        points.join(" ")
    );
    for (k, &v) in sse.iter().enumerate() {
        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/>"#, x(k), y(v));
    }
    if let Some(&v) = sse.get(chosen) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="7" fill="none" stroke="crimson" stroke-width="2"/>"#,
            x(chosen),
            y(v)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="crimson">k*={chosen}</text>"#,
            x(chosen) + 10.0,
            y(v) - 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if !(0.01..1000.0).contains(&v) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}
