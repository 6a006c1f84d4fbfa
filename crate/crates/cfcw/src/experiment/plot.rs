//! Plain SVG figures: spectrogram, error CDFs and trajectory overlays.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rustfft::{num_complex::Complex64, FftPlanner};

use super::Bundle;
use crate::error::Result;
use crate::sim::{Point3, RawCapture};
use crate::tx::CAPTURE_RATE;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;

struct Axes {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, x: f64) -> f64 {
        M + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * M)
    }

    fn py(&self, y: f64) -> f64 {
        H - M - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * M)
    }

    fn frame(&self, svg: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let _ = write!(
            svg,
            r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * M,
            H - 2.0 * M
        );
        let _ = write!(svg, r#"<text x="{}" y="30" text-anchor="middle">{title}</text>"#, W / 2.0);
        let _ = write!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, W / 2.0, H - 12.0);
        let _ = write!(
            svg,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{ylabel}</text>"#,
            H / 2.0,
            H / 2.0
        );
        for (v, anchor, x, y) in [
            (self.x0, "start", M, H - M + 16.0),
            (self.x1, "end", W - M, H - M + 16.0),
        ] {
            let _ = write!(svg, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="11">{}</text>"#, tick(v));
        }
        for (v, y) in [(self.y0, H - M), (self.y1, M + 10.0)] {
            let _ = write!(svg, r#"<text x="{}" y="{y}" text-anchor="end" font-size="11">{}</text>"#, M - 4.0, tick(v));
        }
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn open() -> String {
    format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="13">"#)
}

fn polyline(svg: &mut String, ax: &Axes, pts: impl Iterator<Item = (f64, f64)>, colour: &str) {
    let mut d = String::new();
    let mut pen = false;
    for (x, y) in pts {
        if !(x.is_finite() && y.is_finite()) {
            pen = false;
            continue;
        }
        let _ = write!(d, "{}{:.2},{:.2} ", if pen { "L" } else { "M" }, ax.px(x), ax.py(y));
        pen = true;
    }
    let _ = write!(svg, r#"<path d="{d}" fill="none" stroke="{colour}" stroke-width="1.2"/>"#);
}

/// Magnitude spectrogram of the first channel, 32 ms Hann frames.
pub fn spectrogram_svg(capture: &RawCapture) -> String {
    let x = &capture.channels[0];
    let n = 512;
    let hop = 256;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let win: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut s = 0;
    while s + n <= x.len() {
        let mean = x[s..s + n].iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex64> = (0..n).map(|i| Complex64::new((x[s + i] - mean) * win[i], 0.0)).collect();
        fft.process(&mut buf);
        // 128 rows of two bins each
        cols.push((0..128).map(|r| buf[2 * r].norm_sqr() + buf[2 * r + 1].norm_sqr()).collect());
        s += hop;
    }
    let mut svg = open();
    let dur = capture.duration;
    let ax = Axes {
        x0: 0.0,
        x1: dur.max(1e-3),
        y0: 0.0,
        y1: CAPTURE_RATE / 2.0,
    };
    let peak = cols.iter().flatten().fold(1e-300f64, |m, v| m.max(*v));
    let (cw, rh) = ((W - 2.0 * M) / cols.len().max(1) as f64, (H - 2.0 * M) / 128.0);
    for (c, col) in cols.iter().enumerate() {
        for (r, p) in col.iter().enumerate() {
            let db = 10.0 * (p / peak).max(1e-12).log10();
            let g = ((1.0 + db / 80.0).clamp(0.0, 1.0) * 255.0) as u8;
            if g < 8 {
                continue;
            }
            let _ = write!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({g},{g},{})"/>"#,
                M + c as f64 * cw,
                H - M - (r + 1) as f64 * rh,
                cw + 0.05,
                rh + 0.05,
                255 - g / 2
            );
        }
    }
    ax.frame(&mut svg, "Spectrogram, microphone 0 (80 dB range)", "time (s)", "frequency (Hz)");
    svg.push_str("</svg>\n");
    svg
}

/// Empirical CDFs of one or more error samples, errors in millimetres.
pub fn cdf_svg(title: &str, series: &[(&str, &[f64])]) -> String {
    let mut svg = open();
    let xmax = series
        .iter()
        .flat_map(|(_, v)| v.iter())
        .filter(|e| e.is_finite())
        .fold(0.0f64, |m, e| m.max(*e))
        * 1e3;
    let ax = Axes {
        x0: 0.0,
        x1: if xmax > 0.0 { xmax } else { 1.0 },
        y0: 0.0,
        y1: 1.0,
    };
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (i, (name, v)) in series.iter().enumerate() {
        let mut s: Vec<f64> = v.iter().copied().filter(|e| e.is_finite()).map(|e| e * 1e3).collect();
        s.sort_by(f64::total_cmp);
        let n = s.len().max(1) as f64;
        let c = colours[i % colours.len()];
        polyline(&mut svg, &ax, s.iter().enumerate().map(|(k, e)| (*e, (k + 1) as f64 / n)), c);
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" fill="{c}" font-size="12">{name}</text>"#,
            W - M - 150.0,
            M + 18.0 + 16.0 * i as f64
        );
    }
    ax.frame(&mut svg, title, "error (mm)", "CDF");
    svg.push_str("</svg>\n");
    svg
}

/// Estimated and true 3D paths projected on their principal plane.
pub fn trajectory_svg(estimate: &[Point3], truth: &[Point3]) -> String {
    let good: Vec<Point3> = truth.iter().chain(estimate).filter(|p| p.iter().all(|v| v.is_finite())).copied().collect();
    let mut svg = open();
    if good.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let c = good.iter().sum::<Point3>() / good.len() as f64;
    let mut cov = nalgebra::Matrix3::<f64>::zeros();
    for p in &good {
        cov += (p - c) * (p - c).transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let e1: Point3 = eig.eigenvectors.column(order[0]).into_owned();
    let e2: Point3 = eig.eigenvectors.column(order[1]).into_owned();
    let proj = |p: &Point3| ((p - c).dot(&e1) * 1e3, (p - c).dot(&e2) * 1e3);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &good {
        let (x, y) = proj(p);
        lo = lo.min(x.min(y));
        hi = hi.max(x.max(y));
    }
    let pad = 0.05 * (hi - lo).max(1e-3);
    let ax = Axes {
        x0: lo - pad,
        x1: hi + pad,
        y0: lo - pad,
        y1: hi + pad,
    };
    polyline(&mut svg, &ax, truth.iter().map(proj), "#999999");
    polyline(&mut svg, &ax, estimate.iter().map(proj), "#d62728");
    let _ = write!(svg, r##"<text x="{}" y="{}" fill="#999999" font-size="12">truth</text>"##, W - M - 90.0, M + 18.0);
    let _ = write!(svg, r##"<text x="{}" y="{}" fill="#d62728" font-size="12">estimate</text>"##, W - M - 90.0, M + 34.0);
    ax.frame(&mut svg, "Trajectory, principal plane", "mm", "mm");
    svg.push_str("</svg>\n");
    svg
}

pub fn save_all(b: &Bundle, dir: &Path) -> Result<()> {
    fs::write(dir.join("spectrogram.svg"), spectrogram_svg(&b.capture))?;
    fs::write(
        dir.join("cdf.svg"),
        cdf_svg(
            "Error CDF",
            &[("1D ranging", &b.ranging_errors), ("3D position", &b.tracking_errors)],
        ),
    )?;
    let truth: Vec<Point3> = b.truth[b.trajectory.fix_frame..].iter().map(|t| t.position).collect();
    fs::write(dir.join("trajectory.svg"), trajectory_svg(&b.trajectory.points, &truth))?;
    Ok(())
}
