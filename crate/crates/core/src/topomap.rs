//! Scalp maps as standalone SVG: inverse-distance-weighted interpolation of
//! channel values on a square grid clipped to the head, drawn with a
//! diverging blue-white-red scale that is symmetric about zero.

use std::fmt::Write as _;

use crate::error::Result;
use crate::montage;

/// Grid cells per side.
pub const GRID: usize = 48;
const IDW_POWER: f64 = 2.0;
const SIZE: f64 = 320.0;

/// Interpolated grid over the square `[-r, r]²` (row 0 at the front of the
/// head), `None` outside the head radius `r`.
#[derive(Debug, Clone)]
pub struct TopoGrid {
    pub radius: f64,
    pub cells: Vec<Option<f64>>,
    pub n: usize,
}

impl TopoGrid {
    /// Head-plane coordinates of the center of cell `(row, col)`.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        let step = 2.0 * self.radius / self.n as f64;
        (-self.radius + (col as f64 + 0.5) * step, self.radius - (row as f64 + 0.5) * step)
    }
}

pub fn interpolate(values: &[f64], positions: &[(f64, f64)], n: usize) -> TopoGrid {
    let radius = positions
        .iter()
        .map(|(x, y)| x.hypot(*y))
        .fold(1.0_f64, f64::max)
        + 0.05;
    let mut grid = TopoGrid {
        radius,
        cells: vec![None; n * n],
        n,
    };
    for row in 0..n {
        for col in 0..n {
            let (x, y) = grid.center(row, col);
            if x.hypot(y) > radius {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            let mut exact = None;
            for (v, (px, py)) in values.iter().zip(positions) {
                let d = (x - px).hypot(y - py);
                if d < 1e-12 {
                    exact = Some(*v);
                    break;
                }
                let w = d.powf(-IDW_POWER);
                num += w * v;
                den += w;
            }
            grid.cells[row * n + col] = Some(exact.unwrap_or(if den > 0.0 { num / den } else { 0.0 }));
        }
    }
    grid
}

/// Maps `t ∈ [-1, 1]` to blue (−1), white (0) and red (+1).
pub fn diverging_color(t: f64) -> (u8, u8, u8) {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |full: f64| (255.0 - (255.0 - full) * t.abs()).round() as u8;
    if t >= 0.0 {
        (fade(178.0), fade(24.0), fade(43.0))
    } else {
        (fade(33.0), fade(102.0), fade(172.0))
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `values` (one per channel) as an SVG scalp map. Every channel
/// must have a montage position.
pub fn render_svg(values: &[f64], channels: &[String], title: &str) -> Result<String> {
    let positions = montage::positions(channels)?;
    let grid = interpolate(values, &positions, GRID);
    let vmax = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let margin = 30.0;
    let scale = (SIZE - 2.0 * margin) / (2.0 * grid.radius);
    let to_px = |x: f64, y: f64| (SIZE / 2.0 + x * scale, SIZE / 2.0 + 10.0 - y * scale);
    let cell = 2.0 * grid.radius / GRID as f64 * scale;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{h}" viewBox="0 0 {SIZE} {h}">"#,
        h = SIZE + 20.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="16" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, SIZE / 2.0, escape(title));
    for row in 0..GRID {
        for col in 0..GRID {
            let Some(v) = grid.cells[row * GRID + col] else { continue };
            let (r, g, b) = diverging_color(if vmax > 0.0 { v / vmax } else { 0.0 });
            let (cx, cy) = grid.center(row, col);
            let (px, py) = to_px(cx, cy);
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{w:.2}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                px - cell / 2.0,
                py - cell / 2.0,
                w = cell + 0.05
            );
        }
    }
    let (hx, hy) = to_px(0.0, 0.0);
    let _ = writeln!(s, r#"<circle cx="{hx:.2}" cy="{hy:.2}" r="{:.2}" fill="none" stroke="black" stroke-width="1.5"/>"#, scale);
    let (nx, ny) = to_px(0.0, 1.0);
    let _ = writeln!(
        s,
        r#"<polyline points="{:.2},{:.2} {nx:.2},{:.2} {:.2},{:.2}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        nx - 8.0,
        ny + 2.0,
        ny - 10.0,
        nx + 8.0,
        ny + 2.0
    );
    for (name, &(x, y)) in channels.iter().zip(&positions) {
        let (px, py) = to_px(x, y);
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2" fill="black"><title>{}</title></circle>"#, escape(name));
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">±{vmax:.3e}</text>"#,
        SIZE / 2.0,
        SIZE + 14.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}
