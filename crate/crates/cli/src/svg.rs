use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

pub struct Series<'a> {
    pub x: &'a [f64],
    pub theta: &'a [f64],
    pub band: Option<(&'a [f64], &'a [f64])>,
    pub x_label: &'a str,
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// A line plot of the effect curve with an optional shaded interval band.
pub fn render(s: &Series<'_>) -> String {
    let (x0, x1) = extent(s.x.iter().copied());
    let ys = s.theta.iter().copied().chain(s.band.into_iter().flat_map(|(l, h)| l.iter().chain(h).copied()));
    let (y0, y1) = extent(ys);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.clamp(y0, y1) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some((low, high)) = s.band {
        let mut pts: Vec<String> = s.x.iter().zip(high).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        pts.extend(s.x.iter().zip(low).rev().map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))));
        let _ = writeln!(out, r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>"##, pts.join(" "));
    }
    let line: Vec<String> = s.x.iter().zip(s.theta).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(out, r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##, line.join(" "));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>"#);
    let label = |out: &mut String, x: f64, y: f64, anchor: &str, text: &str| {
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{text}</text>"#);
    };
    label(&mut out, left, bottom + 16.0, "middle", &format!("{x0:.3}"));
    label(&mut out, right, bottom + 16.0, "middle", &format!("{x1:.3}"));
    label(&mut out, left - 6.0, bottom, "end", &format!("{y0:.3}"));
    label(&mut out, left - 6.0, top + 4.0, "end", &format!("{y1:.3}"));
    label(&mut out, 0.5 * WIDTH, HEIGHT - 10.0, "middle", s.x_label);
    label(&mut out, 14.0, 0.5 * HEIGHT, "middle", "theta");
    out.push_str("</svg>\n");
    out
}
