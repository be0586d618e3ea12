//! Deterministic SVG rendering of networks.

use std::fmt::Write;

use netflow_core::anisotropy::Anisotropy;
use netflow_core::crystalline::min_field;
use netflow_core::network::Network;
use netflow_core::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct SvgOptions {
    /// Length at which half-lines are cut, measured from their start point.
    pub halfline_length: f64,
    pub width: f64,
    pub wulff_inset: bool,
    /// Draw minimizing Cahn-Hoffman vectors at polygon nodes (crystalline only).
    pub arrows: bool,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            halfline_length: 1.0,
            width: 600.0,
            wulff_inset: false,
            arrows: false,
        }
    }
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn fmt(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// Curve polylines with half-lines cut at the render length, in curve order.
fn polylines(net: &Network, opts: &SvgOptions) -> Vec<Vec<Vec2>> {
    net.curves()
        .iter()
        .map(|c| {
            let mut p = c.points.clone();
            if c.closed {
                p.push(c.points[0]);
            }
            if let Some(d) = c.halfline {
                let last = *p.last().unwrap();
                p.push(last + d * opts.halfline_length);
            }
            p
        })
        .collect()
}

pub fn render_svg(net: &Network, table: &[Anisotropy], opts: &SvgOptions) -> String {
    let lines = polylines(net, opts);
    let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in lines.iter().flatten() {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    if !lo.is_finite() {
        lo = Vec2::new(-1.0, -1.0);
        hi = Vec2::new(1.0, 1.0);
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
    let margin = 0.05 * span;
    let (x0, y0) = (lo.x - margin, lo.y - margin);
    let (w, h) = (hi.x - lo.x + 2.0 * margin, hi.y - lo.y + 2.0 * margin);
    let stroke = 0.004 * span.max(w).max(h);
    let height = opts.width * h / w;
    // flip y so that the picture has the usual orientation
    let flip = |p: Vec2| Vec2::new(p.x, y0 + y0 + h - p.y);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="{} {} {} {}">"#,
        fmt(opts.width),
        fmt(height),
        fmt(x0),
        fmt(y0),
        fmt(w),
        fmt(h)
    );
    let _ = writeln!(
        s,
        r#"<rect class="background" x="{}" y="{}" width="{}" height="{}" fill="white"/>"#,
        fmt(x0),
        fmt(y0),
        fmt(w),
        fmt(h)
    );
    for (i, (c, p)) in net.curves().iter().zip(&lines).enumerate() {
        let mut d = String::new();
        for (k, q) in p.iter().enumerate() {
            let q = flip(*q);
            let _ = write!(
                d,
                "{}{} {}",
                if k == 0 { "M" } else { " L" },
                fmt(q.x),
                fmt(q.y)
            );
        }
        let _ = writeln!(
            s,
            r#"<path class="curve" data-curve="{}" data-segments="{}" d="{}" fill="none" stroke="{}" stroke-width="{}"/>"#,
            c.id,
            c.segment_count(),
            d,
            PALETTE[i % PALETTE.len()],
            fmt(stroke)
        );
    }
    for j in net.junctions() {
        let q = flip(j.point);
        let _ = writeln!(
            s,
            r#"<circle class="junction" cx="{}" cy="{}" r="{}" fill="black"/>"#,
            fmt(q.x),
            fmt(q.y),
            fmt(3.0 * stroke)
        );
    }
    if opts.arrows {
        if let Ok(m) = min_field(net, table) {
            let scale = 0.1 * span;
            for (ci, c) in net.curves().iter().enumerate() {
                for (k, p) in c.points.iter().enumerate() {
                    let a = flip(*p);
                    let b = flip(*p + m.field.value(ci, k) * scale);
                    let _ = writeln!(
                        s,
                        r#"<line class="cahn-hoffman" x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-width="{}"/>"#,
                        fmt(a.x),
                        fmt(a.y),
                        fmt(b.x),
                        fmt(b.y),
                        fmt(0.5 * stroke)
                    );
                }
            }
        }
    }
    if opts.wulff_inset {
        let r = 0.1 * span;
        let center = Vec2::new(hi.x + margin - 1.2 * r, lo.y - margin + 1.2 * r);
        for (i, a) in table.iter().enumerate() {
            let pts = wulff_outline(a);
            let size = pts.iter().fold(0.0f64, |m, p| m.max(p.norm())).max(1e-12);
            let mut d = String::new();
            for (k, q) in pts.iter().enumerate() {
                let q = flip(center + *q * (r / size));
                let _ = write!(
                    d,
                    "{}{} {}",
                    if k == 0 { "M" } else { " L" },
                    fmt(q.x),
                    fmt(q.y)
                );
            }
            let _ = writeln!(
                s,
                r#"<path class="wulff" data-anisotropy="{i}" d="{d} Z" fill="none" stroke="{}" stroke-width="{}"/>"#,
                PALETTE[i % PALETTE.len()],
                fmt(0.5 * stroke)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Boundary of the Wulff shape: polygon vertices, or the image of the unit
/// circle under the Cahn-Hoffman map for smooth anisotropies.
fn wulff_outline(a: &Anisotropy) -> Vec<Vec2> {
    match a {
        Anisotropy::Crystalline(p) => p.vertices().to_vec(),
        Anisotropy::Smooth(s) => (0..128)
            .map(|k| {
                let nu = Vec2::from_angle(std::f64::consts::TAU * k as f64 / 128.0);
                s.dual_gradient(nu).unwrap_or(nu)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_network_is_valid_svg() {
        let net = Network::new(vec![], vec![]).unwrap();
        let s = render_svg(&net, &[], &SvgOptions::default());
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<path").count(), 0);
    }
}
