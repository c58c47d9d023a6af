//! Minimal SVG charts for reports.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, config_hash: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- config_hash {config_hash} -->");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn y_of(v: f64, ymax: f64) -> f64 {
    let h = H - TOP - BOTTOM;
    H - BOTTOM - (v / ymax).clamp(0.0, 1.0) * h
}

fn y_axis(s: &mut String, ymax: f64, label: &str) {
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#,
        H - BOTTOM
    );
    for k in 0..=5 {
        let v = ymax * k as f64 / 5.0;
        let y = y_of(v, ymax);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            LEFT,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(label)
    );
}

fn hline(s: &mut String, v: f64, ymax: f64, label: &str) {
    let y = y_of(v, ymax);
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#d62728" stroke-dasharray="6,4"/><text x="{}" y="{:.1}" text-anchor="end" fill="#d62728">{}</text>"##,
        W - RIGHT,
        W - RIGHT,
        y - 4.0,
        escape(label)
    );
}

/// One bar per `(label, mean, std)` with ±std whiskers and an optional
/// dashed bound line.
pub fn bar_chart(title: &str, bars: &[(String, f64, f64)], bound: Option<f64>, config_hash: &str) -> String {
    let mut s = open(title, config_hash);
    let ymax = 1.0f64.max(bound.unwrap_or(0.0));
    y_axis(&mut s, ymax, "normalized advantage");
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (i, (label, mean, std)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.2;
        let w = slot * 0.6;
        let y = y_of(*mean, ymax);
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{}"><title>{} {mean:.4}</title></rect>"#,
            H - BOTTOM - y,
            PALETTE[i % PALETTE.len()],
            escape(label)
        );
        let cx = x + w / 2.0;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y_of(mean - std, ymax),
            y_of(mean + std, ymax)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{}" text-anchor="middle">{}</text>"#,
            H - BOTTOM + 18.0,
            escape(label)
        );
    }
    if let Some(b) = bound {
        hline(&mut s, b, ymax, "bound");
    }
    s.push_str("</svg>\n");
    s
}

/// Lines over a shared x axis; `overlay` is drawn dashed.
pub fn line_chart(
    title: &str,
    x_label: &str,
    xs: &[f64],
    series: &[(String, Vec<f64>)],
    overlay: Option<(&str, &[f64])>,
    config_hash: &str,
) -> String {
    let mut s = open(title, config_hash);
    let ymax = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .chain(overlay.iter().flat_map(|(_, v)| v.iter()))
        .fold(1.0f64, |a, &b| if b.is_finite() { a.max(b) } else { a });
    y_axis(&mut s, ymax, "normalized advantage");
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = if xmax > xmin { xmax - xmin } else { 1.0 };
    let px = |x: f64| LEFT + (x - xmin) / span * (W - LEFT - RIGHT);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="black"/>"#,
        W - RIGHT,
        y = H - BOTTOM
    );
    for &x in xs {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
            px(x),
            H - BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let mut draw = |name: &str, ys: &[f64], color: &str, dashed: bool, slot: usize| {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), y_of(y, ymax)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        );
        let ly = TOP + 14.0 * slot as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#,
            LEFT + 10.0,
            escape(name)
        );
    };
    for (i, (name, ys)) in series.iter().enumerate() {
        draw(name, ys, PALETTE[i % PALETTE.len()], false, i + 1);
    }
    if let Some((name, ys)) = overlay {
        draw(name, ys, "#000000", true, series.len() + 1);
    }
    s.push_str("</svg>\n");
    s
}
