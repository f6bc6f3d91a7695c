//! Minimal SVG output for scatter plots, histograms and curves.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 50.0;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        let range = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            }
        };
        let mut xs = xs;
        let mut ys = ys;
        Self {
            x: range(&mut xs),
            y: range(&mut ys),
        }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (W - 2.0 * PAD) * (x - self.x.0) / (self.x.1 - self.x.0)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (H - 2.0 * PAD) * (y - self.y.0) / (self.y.1 - self.y.0)
    }
}

fn open(out: &mut String, f: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(out, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\">");
    let _ = writeln!(
        out,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        out,
        "<text x=\"{PAD}\" y=\"30\" font-size=\"14\">{title}</text>"
    );
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{xlabel} [{:.3}, {:.3}]</text>", W / 2.0, H - 15.0, f.x.0, f.x.1);
    let _ = writeln!(
        out,
        "<text x=\"15\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 {})\">{ylabel} [{:.3}, {:.3}]</text>",
        H / 2.0,
        H / 2.0,
        f.y.0,
        f.y.1
    );
}

/// Scatter of `(x, y)` points with an optional `y = x` reference line.
pub fn scatter(
    points: &[(f64, f64)],
    title: &str,
    xlabel: &str,
    ylabel: &str,
    identity: bool,
) -> String {
    let f = Frame::fit(
        points.iter().map(|p| p.0).chain(identity.then_some(0.0)),
        points.iter().map(|p| p.1).chain(identity.then_some(0.0)),
    );
    let mut out = String::new();
    open(&mut out, &f, title, xlabel, ylabel);
    if identity {
        let lo = f.x.0.max(f.y.0);
        let hi = f.x.1.min(f.y.1);
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#c33\"/>",
            f.px(lo),
            f.py(lo),
            f.px(hi),
            f.py(hi)
        );
    }
    for &(x, y) in points {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"#236\"/>",
            f.px(x),
            f.py(y)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar histogram overlaid with a normal density scaled to the counts.
pub fn histogram(
    h: &super::stats::Histogram,
    fit: Option<(f64, f64)>,
    title: &str,
    xlabel: &str,
) -> String {
    let n: usize = h.counts.iter().sum();
    let top = h.counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let f = Frame {
        x: (h.lo, h.lo + h.width * h.counts.len() as f64),
        y: (0.0, top * 1.1),
    };
    let mut out = String::new();
    open(&mut out, &f, title, xlabel, "count");
    for (k, &c) in h.counts.iter().enumerate() {
        let x0 = f.px(h.lo + k as f64 * h.width);
        let x1 = f.px(h.lo + (k + 1) as f64 * h.width);
        let y = f.py(c as f64);
        let _ = writeln!(
            out,
            "<rect x=\"{x0:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#9ab\" stroke=\"#567\"/>",
            (x1 - x0).max(0.5),
            f.py(0.0) - y
        );
    }
    if let Some((mu, sd)) = fit.filter(|f| f.1 > 0.0) {
        let mut pts = String::new();
        for i in 0..=200 {
            let x = f.x.0 + (f.x.1 - f.x.0) * i as f64 / 200.0;
            let d = (-(x - mu).powi(2) / (2.0 * sd * sd)).exp()
                / (sd * (2.0 * std::f64::consts::PI).sqrt());
            let _ = write!(pts, "{:.1},{:.1} ", f.px(x), f.py(d * n as f64 * h.width));
        }
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"#c33\" points=\"{}\"/>",
            pts.trim_end()
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per named series, markers at the data points.
pub fn curves(
    series: &[(String, Vec<(f64, f64)>)],
    title: &str,
    xlabel: &str,
    ylabel: &str,
) -> String {
    const COLORS: [&str; 6] = ["#236", "#c33", "#393", "#939", "#963", "#399"];
    let f = Frame::fit(
        series
            .iter()
            .flat_map(|s| s.1.iter().map(|p| p.0))
            .chain(Some(0.0)),
        series
            .iter()
            .flat_map(|s| s.1.iter().map(|p| p.1))
            .chain(Some(0.0)),
    );
    let mut out = String::new();
    open(&mut out, &f, title, xlabel, ylabel);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let line: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>",
            line.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" fill=\"{color}\"/>",
                f.px(x),
                f.py(y)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{name}</text>",
            PAD + 10.0,
            PAD + 15.0 + 14.0 * i as f64
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_are_svg() {
        let s = scatter(&[(0.0, 0.1), (1.0, 0.9)], "t", "x", "y", true);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<circle").count(), 2);
        let h = super::super::stats::Histogram::of(&[0.0, 0.1, -0.1], 4, true);
        assert!(histogram(&h, Some((0.0, 0.1)), "h", "e").contains("<polyline"));
        assert!(curves(&[("a".into(), vec![(1.0, 2.0)])], "c", "x", "y").contains(">a</text>"));
        assert!(scatter(&[], "t", "x", "y", false).contains("</svg>"));
    }
}
