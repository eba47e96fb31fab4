//! Minimal static SVG plots: the Fisher-Shannon plane and silhouette curves.

use std::fmt::Write;

use crate::infoplane::FsPoint;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const MARKERS: [&str; 4] = ["circle", "triangle", "square", "diamond"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }
}

/// Decade-aligned log10 range covering `values`.
fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let (mut lo, mut hi) = (lo.floor(), hi.ceil());
    if hi <= lo {
        hi = lo + 1.0;
    }
    if hi - lo < 1.0 {
        lo -= 1.0;
    }
    (lo, hi)
}

fn frame(out: &mut String, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn marker(out: &mut String, shape: &str, x: f64, y: f64, color: &str) {
    let r = 5.0;
    let _ = match shape {
        "triangle" => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - r,
            x - r,
            y + r,
            x + r,
            y + r
        ),
        "square" => writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
            x - r,
            y - r,
            2.0 * r,
            2.0 * r
        ),
        "diamond" => writeln!(
            out,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - r,
            x + r,
            y,
            x,
            y + r,
            x - r,
            y
        ),
        _ => writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{color}"/>"#),
    };
}

/// Log-log scatter of (SEP, FIM), coloured by cluster, with the
/// `N * I = 1` boundary drawn dashed.
pub(crate) fn fs_plane(title: &str, points: &[FsPoint], labels: Option<&[usize]>) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (xlo, xhi) = log_range(points.iter().map(|p| p.sep));
    let (ylo, yhi) = log_range(points.iter().map(|p| p.fim));
    let xa = Axis { lo: xlo, hi: xhi, px_lo: LEFT, px_hi: W - RIGHT };
    let ya = Axis { lo: ylo, hi: yhi, px_lo: H - BOTTOM, px_hi: TOP };

    for d in xlo as i32..=xhi as i32 {
        let x = xa.map(d as f64);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.1}" stroke="#ddd"/>"##, H - BOTTOM);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">1e{d}</text>"#, H - BOTTOM + 18.0);
    }
    for d in ylo as i32..=yhi as i32 {
        let y = ya.map(d as f64);
        let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">1e{d}</text>"#, LEFT - 6.0, y + 4.0);
    }
    frame(&mut out, "Shannon entropy power N (log)", "Fisher information I (log)");

    // log I = -log N, clipped to the plot box.
    let t_lo = xlo.max(-yhi);
    let t_hi = xhi.min(-ylo);
    if t_lo < t_hi {
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="6 4"/>"##,
            xa.map(t_lo),
            ya.map(-t_lo),
            xa.map(t_hi),
            ya.map(-t_hi)
        );
    }

    for (i, p) in points.iter().enumerate() {
        let c = labels.map_or(0, |l| l[i]);
        let (x, y) = (xa.map(p.sep.log10()), ya.map(p.fim.log10()));
        marker(&mut out, MARKERS[c % MARKERS.len()], x, y, PALETTE[c % PALETTE.len()]);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#, x + 7.0, y - 6.0, escape(&p.id));
    }
    if let Some(l) = labels {
        let k = l.iter().max().map_or(0, |m| m + 1);
        for c in 0..k {
            let y = TOP + 16.0 + 16.0 * c as f64;
            marker(&mut out, MARKERS[c % MARKERS.len()], W - RIGHT - 80.0, y, PALETTE[c % PALETTE.len()]);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">cluster {}</text>"#, W - RIGHT - 70.0, y + 4.0, c + 1);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Average silhouette width against k, one polyline per named curve.
pub(crate) fn silhouette_curves(title: &str, curves: &[(String, Vec<(usize, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let ks = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.0));
    let (kmin, kmax) = ks.fold((usize::MAX, 0), |(a, b), k| (a.min(k), b.max(k)));
    let (kmin, kmax) = if kmin > kmax { (2, 3) } else if kmin == kmax { (kmin, kmin + 1) } else { (kmin, kmax) };
    let vals = curves.iter().flat_map(|(_, c)| c.iter().map(|p| p.1));
    let (vlo, vhi) = vals.fold((0.0f64, 1.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let xa = Axis { lo: kmin as f64, hi: kmax as f64, px_lo: LEFT + 10.0, px_hi: W - RIGHT - 10.0 };
    let ya = Axis { lo: vlo, hi: vhi, px_lo: H - BOTTOM, px_hi: TOP };

    for k in kmin..=kmax {
        let x = xa.map(k as f64);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.1}" text-anchor="middle">{k}</text>"#, H - BOTTOM + 18.0);
    }
    let steps = 5;
    for s in 0..=steps {
        let v = vlo + (vhi - vlo) * s as f64 / steps as f64;
        let y = ya.map(v);
        let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, LEFT - 6.0, y + 4.0);
    }
    frame(&mut out, "number of clusters k", "average silhouette width");

    for (ci, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[ci % PALETTE.len()];
        let pts: Vec<String> = curve
            .iter()
            .map(|&(k, v)| format!("{:.2},{:.2}", xa.map(k as f64), ya.map(v)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        for &(k, v) in curve {
            marker(&mut out, MARKERS[ci % MARKERS.len()], xa.map(k as f64), ya.map(v), color);
        }
        let y = TOP + 16.0 + 16.0 * ci as f64;
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/>"#, W - RIGHT - 110.0, W - RIGHT - 90.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT - 84.0, y + 4.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}
