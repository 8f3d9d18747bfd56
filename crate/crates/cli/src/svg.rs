//! Minimal SVG output: line plots and a stability heatmap.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub struct Series<'a> {
    pub label: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub dashed: bool,
}

#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(
    out: &mut String,
    f: Frame,
    x_label: &str,
    y_label: &str,
    x_ticks: &[(f64, String)],
    y_ticks: &[(f64, String)],
) {
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for (x, label) in x_ticks {
        let px = f.px(*x);
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{label}</text>"#,
            H - BOTTOM,
            H - BOTTOM + 5.0,
            H - BOTTOM + 18.0,
        );
    }
    for (y, label) in y_ticks {
        let py = f.py(*y);
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let cy = (TOP + H - BOTTOM) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="18" y="{cy}" text-anchor="middle" transform="rotate(-90 18 {cy})">{}</text>"#,
        escape(y_label)
    );
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    (0..=5)
        .map(|i| {
            let y = lo + (hi - lo) * i as f64 / 5.0;
            (y, tick(y))
        })
        .collect()
}

/// Whole decades covering `[lo, hi]` (in log10 units), at most nine labels.
fn decade_ticks(lo: f64, hi: f64) -> (f64, f64, Vec<(f64, String)>) {
    let (a, b) = (
        lo.floor() as i32,
        (hi.ceil() as i32).max(lo.floor() as i32 + 1),
    );
    let step = ((b - a) as usize).div_ceil(8).max(1);
    let ticks = (a..=b)
        .step_by(step)
        .map(|e| (e as f64, format!("1e{e}")))
        .collect();
    (a as f64, b as f64, ticks)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Polylines over shared axes; with `y_log` nonpositive values are dropped.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    y_log: bool,
) -> String {
    let tf = |y: f64| if y_log { y.log10() } else { y };
    let keep = |y: f64| y.is_finite() && (!y_log || y > 0.0);
    let (mut xl, mut xh, mut yl, mut yh) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for s in series {
        for (&x, &y) in s.xs.iter().zip(s.ys) {
            if keep(y) && x.is_finite() {
                xl = xl.min(x);
                xh = xh.max(x);
                yl = yl.min(tf(y));
                yh = yh.max(tf(y));
            }
        }
    }
    let (x0, x1) = span(xl, xh);
    let (y0, y1) = span(yl, yh);
    let (y0, y1, y_ticks) = if y_log {
        decade_ticks(y0, y1)
    } else {
        (y0, y1, linear_ticks(y0, y1))
    };
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title);
    axes(
        &mut out,
        f,
        x_label,
        y_label,
        &linear_ticks(x0, x1),
        &y_ticks,
    );
    // An unlabeled series continues the previous one: same color, no legend entry.
    let mut color_idx = 0;
    let mut legend_row = 0;
    for (i, s) in series.iter().enumerate() {
        if i > 0 && !s.label.is_empty() {
            color_idx += 1;
        }
        let color = COLORS[color_idx % COLORS.len()];
        let mut points = String::new();
        for (&x, &y) in s.xs.iter().zip(s.ys) {
            if keep(y) && x.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", f.px(x), f.py(tf(y)));
            }
        }
        let dash = if s.dashed {
            r#" stroke-dasharray="5,4""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            points.trim_end()
        );
        if s.label.is_empty() {
            continue;
        }
        let ly = TOP + 16.0 + 16.0 * legend_row as f64;
        legend_row += 1;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT - 150.0,
            W - RIGHT - 125.0,
            W - RIGHT - 120.0,
            ly + 4.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One cell of a stability heatmap.
#[derive(Clone, Copy)]
pub struct Cell {
    pub analytic: bool,
    pub numeric: bool,
}

/// Cells are row-major with `y` outer. `boundary` is drawn as a curve and clipped to the frame.
pub fn heatmap(
    title: &str,
    xs: &[f64],
    ys: &[f64],
    cells: &[Cell],
    boundary: &[(f64, f64)],
) -> String {
    let half = |v: &[f64]| {
        if v.len() > 1 {
            (v[1] - v[0]) / 2.0
        } else {
            0.5
        }
    };
    let (hx, hy) = (half(xs), half(ys));
    let f = Frame {
        x0: xs[0] - hx,
        x1: xs[xs.len() - 1] + hx,
        y0: ys[0] - hy,
        y1: ys[ys.len() - 1] + hy,
    };
    let mut out = String::new();
    header(&mut out, title);
    let cw = f.px(xs[0] + hx) - f.px(xs[0] - hx);
    let ch = f.py(ys[0] - hy) - f.py(ys[0] + hy);
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let c = cells[iy * xs.len() + ix];
            let fill = match (c.analytic, c.numeric) {
                (true, _) => "#e06666",
                (false, true) => "#f6d55c",
                (false, false) => "#eeeeee",
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                f.px(x - hx),
                f.py(y + hy),
                cw + 0.3,
                ch + 0.3
            );
        }
    }
    let mut points = String::new();
    for &(x, y) in boundary {
        if y >= f.y0 && y <= f.y1 && x >= f.x0 && x <= f.x1 {
            let _ = write!(points, "{:.2},{:.2} ", f.px(x), f.py(y));
        }
    }
    if !points.is_empty() {
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="black" stroke-width="2" points="{}"/>"#,
            points.trim_end()
        );
    }
    let (xt, yt) = (
        linear_ticks(xs[0], xs[xs.len() - 1]),
        linear_ticks(ys[0], ys[ys.len() - 1]),
    );
    axes(&mut out, f, "beta1", "beta0", &xt, &yt);
    let legend = [
        ("#e06666", "analytic and numeric"),
        ("#f6d55c", "numeric only"),
        ("#eeeeee", "unstable"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = H - 12.0;
        let x = LEFT + 170.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}" stroke="black"/><text x="{}" y="{y}">{label}</text>"#,
            y - 9.0,
            x + 14.0
        );
    }
    out.push_str("</svg>\n");
    out
}
