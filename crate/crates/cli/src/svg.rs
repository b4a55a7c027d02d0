//! Static log-log plot of `Δ̂_n` with its noise floor and the theorem bound.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotPoint {
    pub n: f64,
    pub delta_hat: f64,
    pub mc_error: f64,
    pub theorem_bound: f64,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 56.0;

struct LogAxis {
    lo: f64,
    hi: f64,
    start: f64,
    end: f64,
}

impl LogAxis {
    /// Decade-aligned range covering the positive finite values.
    fn covering(values: impl Iterator<Item = f64>, start: f64, end: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && *v > 0.0) {
            lo = lo.min(v.log10());
            hi = hi.max(v.log10());
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let (lo, mut hi) = (lo.floor(), hi.ceil());
        if hi <= lo {
            hi = lo + 1.0;
        }
        Self { lo, hi, start, end }
    }

    fn map(&self, v: f64) -> f64 {
        let t = (v.max(10f64.powf(self.lo)).log10() - self.lo) / (self.hi - self.lo);
        self.start + t.min(1.0) * (self.end - self.start)
    }

    fn decades(&self) -> impl Iterator<Item = i32> {
        (self.lo as i32)..=(self.hi as i32)
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], style: &str) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(out, r#"<polyline points="{}" {style}/>"#, coords.join(" "));
}

/// Renders the plot. Points at or below their noise floor are drawn hollow.
pub fn render(points: &[PlotPoint], title: &str) -> String {
    let x = LogAxis::covering(points.iter().map(|p| p.n), LEFT, WIDTH - RIGHT);
    let y = LogAxis::covering(
        points
            .iter()
            .flat_map(|p| [p.delta_hat, p.mc_error, p.theorem_bound]),
        HEIGHT - BOTTOM,
        TOP,
    );
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    for k in x.decades() {
        let px = x.map(10f64.powi(k));
        let _ = writeln!(s, r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, HEIGHT - BOTTOM);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">1e{k}</text>"#, HEIGHT - BOTTOM + 16.0);
    }
    for k in y.decades() {
        let py = y.map(10f64.powi(k));
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e0e0e0"/>"##, WIDTH - RIGHT);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{k}</text>"#, LEFT - 6.0, py + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">n</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Δ̂ₙ</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    );

    let floor: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mc_error.is_finite() && p.mc_error > 0.0)
        .map(|p| (x.map(p.n), y.map(p.mc_error)))
        .collect();
    if floor.len() >= 2 {
        let base = y.map(0.0);
        let mut band: Vec<String> = floor.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
        band.push(format!("{:.2},{base:.2}", floor[floor.len() - 1].0));
        band.push(format!("{:.2},{base:.2}", floor[0].0));
        let _ = writeln!(s, r##"<polygon points="{}" fill="#9e9e9e" fill-opacity="0.3" stroke="none"/>"##, band.join(" "));
    }

    let bound: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.theorem_bound.is_finite() && p.theorem_bound > 0.0)
        .map(|p| (x.map(p.n), y.map(p.theorem_bound)))
        .collect();
    polyline(&mut s, &bound, r##"fill="none" stroke="#c62828" stroke-width="1.5" stroke-dasharray="6 3""##);

    let measured: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.delta_hat.is_finite() && p.delta_hat > 0.0)
        .map(|p| (x.map(p.n), y.map(p.delta_hat)))
        .collect();
    polyline(&mut s, &measured, r##"fill="none" stroke="#1565c0" stroke-width="1""##);
    for p in points.iter().filter(|p| p.delta_hat.is_finite() && p.delta_hat > 0.0) {
        let fill = if p.delta_hat > p.mc_error { "#1565c0" } else { "white" };
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="#1565c0" stroke-width="1.5"/>"##,
            x.map(p.n),
            y.map(p.delta_hat)
        );
    }

    let lx = WIDTH - RIGHT - 170.0;
    let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1565c0"/>"##, lx, TOP + 16.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">measured Δ̂ₙ</text>"#, lx + 12.0, TOP + 20.0);
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#c62828" stroke-width="1.5" stroke-dasharray="6 3"/>"##,
        lx - 6.0,
        TOP + 34.0,
        lx + 6.0,
        TOP + 34.0
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">theorem bound</text>"#, lx + 12.0, TOP + 38.0);
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="12" height="8" fill="#9e9e9e" fill-opacity="0.3"/>"##,
        lx - 6.0,
        TOP + 48.0
    );
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">noise floor</text>"#, lx + 12.0, TOP + 56.0);
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
