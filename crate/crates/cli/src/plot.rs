//! Minimal SVG log-log scatter with the fitted line.

use std::fmt::Write as _;

use markoff_core::analysis::{CountSeries, ExponentEstimate};

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 60.0;

pub fn log_log_svg(series: &CountSeries, fit: &ExponentEstimate) -> String {
    let xs: Vec<f64> = series.samples.iter().map(|s| s.l.ln()).collect();
    let ys: Vec<f64> = series.samples.iter().map(|s| s.n.ln()).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{a} {b} H{c} M{a} {b} V{d}" stroke="black" fill="none"/>"#,
        a = PAD,
        b = H - PAD,
        c = W - PAD,
        d = PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">ln L</text>"#,
        W / 2.0,
        H - PAD / 3.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle" font-size="14" transform="rotate(-90 {x} {y})">ln N</text>"#,
        x = PAD / 3.0,
        y = H / 2.0
    );
    for (x, y) in xs.iter().zip(&ys) {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, px(*x), py(*y));
    }
    let (a, b) = (fit.fit_range.0.ln(), fit.fit_range.1.ln());
    let line = |x: f64| fit.log_c + fit.beta * x;
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="2"/>"#,
        px(a),
        py(line(a)),
        px(b),
        py(line(b))
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="14">beta = {:.4}</text>"#,
        PAD + 10.0,
        PAD + 10.0,
        fit.beta
    );
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, lo + 1.0)
    }
}
