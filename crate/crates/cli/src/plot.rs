//! Standalone SVG rendering of spectra and pseudospectra.

use std::fmt::Write;

use koopman_core::io::{PseudospectrumRow, SpectrumRow};

const MARGIN: f64 = 40.0;
/// Residuals at or below this map to the coolest color.
const RESIDUAL_FLOOR: f64 = 1e-8;

/// Maps complex-plane coordinates to SVG pixels.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub center: f64,
    pub scale: f64,
}

impl Frame {
    pub fn new(size: u32, extent: f64) -> Self {
        let center = size as f64 / 2.0;
        Self {
            center,
            scale: (center - MARGIN) / extent,
        }
    }

    pub fn x(&self, re: f64) -> f64 {
        self.center + re * self.scale
    }

    pub fn y(&self, im: f64) -> f64 {
        self.center - im * self.scale
    }
}

/// Gray level for a pseudospectrum cell, darker for smaller `tau` on a log
/// scale between `lo` and `hi`.
pub fn shade(tau: f64, lo: f64, hi: f64) -> u8 {
    let t = if hi > lo {
        ((tau.max(lo).ln() - lo.ln()) / (hi.ln() - lo.ln())).clamp(0.0, 1.0)
    } else {
        0.5
    };
    (40.0 + 200.0 * t).round() as u8
}

/// Blue for small residuals through red for residual 1 and above; gray when
/// unknown.
pub fn residual_color(residual: Option<f64>) -> String {
    let Some(r) = residual else {
        return "rgb(128,128,128)".into();
    };
    let t = ((r.max(RESIDUAL_FLOOR).log10() - RESIDUAL_FLOOR.log10()) / -RESIDUAL_FLOOR.log10()).clamp(0.0, 1.0);
    let red = (255.0 * t).round() as u8;
    let blue = (255.0 * (1.0 - t)).round() as u8;
    format!("rgb({red},40,{blue})")
}

/// Smallest positive gap between sorted distinct values.
fn spacing(mut values: Vec<f64>) -> Option<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).reduce(f64::min)
}

fn extent(spectrum: &[SpectrumRow], pseudo: &[PseudospectrumRow]) -> f64 {
    spectrum
        .iter()
        .map(|r| r.lambda)
        .chain(pseudo.iter().map(|r| r.z))
        .map(|z| z.re.abs().max(z.im.abs()))
        .filter(|v| v.is_finite())
        .fold(1.2_f64, |a, b| a.max(1.05 * b))
}

pub fn render(spectrum: &[SpectrumRow], pseudo: &[PseudospectrumRow], size: u32, title: Option<&str>) -> String {
    let frame = Frame::new(size, extent(spectrum, pseudo));
    let mut svg = String::new();
    let s = size;
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{s}" height="{s}" fill="white"/>"#);

    if !pseudo.is_empty() {
        let dx = spacing(pseudo.iter().map(|r| r.z.re).collect()).unwrap_or(0.05);
        let dy = spacing(pseudo.iter().map(|r| r.z.im).collect()).unwrap_or(0.05);
        let positive = pseudo.iter().map(|r| r.tau).filter(|t| *t > 0.0 && t.is_finite());
        let lo = positive.clone().fold(f64::INFINITY, f64::min).clamp(1e-16, 1.0);
        let hi = positive.fold(0.0, f64::max).max(lo);
        let _ = writeln!(svg, r#"<g class="pseudospectrum">"#);
        for row in pseudo {
            let g = shade(row.tau, lo, hi);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="rgb({g},{g},{g})" data-tau="{}" data-accepted="{}"/>"#,
                frame.x(row.z.re - dx / 2.0),
                frame.y(row.z.im + dy / 2.0),
                dx * frame.scale,
                dy * frame.scale,
                row.tau,
                u8::from(row.accepted)
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    let (lo, hi) = (MARGIN / 2.0, size as f64 - MARGIN / 2.0);
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{lo:.3}" y1="{c:.3}" x2="{hi:.3}" y2="{c:.3}" stroke="black" stroke-width="0.5"/>"#,
        c = frame.y(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<line class="axis" x1="{c:.3}" y1="{lo:.3}" x2="{c:.3}" y2="{hi:.3}" stroke="black" stroke-width="0.5"/>"#,
        c = frame.x(0.0)
    );
    let _ = writeln!(
        svg,
        r#"<circle class="unit-circle" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#,
        frame.x(0.0),
        frame.y(0.0),
        frame.scale
    );

    for row in spectrum {
        let _ = writeln!(
            svg,
            r#"<circle class="eigenvalue" cx="{:.3}" cy="{:.3}" r="3" fill="{}" data-re="{}" data-im="{}" data-residual="{}"/>"#,
            frame.x(row.lambda.re),
            frame.y(row.lambda.im),
            residual_color(row.residual),
            row.lambda.re,
            row.lambda.im,
            row.residual.map(|r| r.to_string()).unwrap_or_default()
        );
    }

    if let Some(t) = title {
        let escaped = t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            svg,
            r#"<text x="{:.3}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escaped}</text>"#,
            frame.center
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use koopman_core::c64;

    #[test]
    fn shading_is_monotone() {
        let taus = [1e-9, 1e-6, 1e-3, 0.1, 1.0];
        let levels: Vec<u8> = taus.iter().map(|&t| shade(t, 1e-9, 1.0)).collect();
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(shade(0.0, 1e-9, 1.0), levels[0]);
    }

    #[test]
    fn residual_colors_run_blue_to_red() {
        assert_eq!(residual_color(Some(0.0)), "rgb(0,40,255)");
        assert_eq!(residual_color(Some(5.0)), "rgb(255,40,0)");
        assert_eq!(residual_color(None), "rgb(128,128,128)");
    }

    #[test]
    fn frame_maps_unit_circle() {
        let f = Frame::new(640, 1.2);
        assert_eq!(f.x(0.0), 320.0);
        assert!((f.x(1.0) - f.x(0.0) - f.scale).abs() < 1e-12);
        assert!(f.y(1.0) < f.y(0.0));
    }

    #[test]
    fn empty_input_still_draws_circle() {
        let svg = render(&[], &[], 300, Some("a < b"));
        assert!(svg.contains("unit-circle"));
        assert!(!svg.contains("class=\"eigenvalue\""));
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn extent_grows_with_far_points() {
        let row = SpectrumRow {
            lambda: c64::new(0.0, -3.0),
            residual: None,
        };
        assert!((extent(&[row], &[]) - 3.15).abs() < 1e-12);
        assert_eq!(extent(&[], &[]), 1.2);
    }
}
