//! Top-down SVG rendering of a mission: scene footprints, ground-truth
//! changes, the flown trajectory, and detected hulls.

use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::realtime::MissionResult;
use crate::scene::{diff_scenes, Scene};
use std::fmt::Write as _;
use std::path::Path;

const CANVAS_W: f64 = 1000.0;
const MARGIN: f64 = 40.0;

struct Mapper {
    scale: f64,
    min: Vec2,
    height: f64,
}

impl Mapper {
    fn map(&self, p: Vec2) -> (f64, f64) {
        // World +z points up on the page.
        (
            MARGIN + (p.x - self.min.x) * self.scale,
            MARGIN + self.height - (p.z - self.min.z) * self.scale,
        )
    }
}

fn path_of(mapper: &Mapper, poly: &[Vec2], close: bool) -> String {
    let mut d = String::new();
    for (i, p) in poly.iter().enumerate() {
        let (x, y) = mapper.map(*p);
        let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
    }
    if close {
        d.push('Z');
    }
    d
}

/// Render the mission over its scene pair to an SVG file.
pub fn render_svg(
    result: &MissionResult,
    t1: &Scene,
    t2: &Scene,
    out: impl AsRef<Path>,
) -> Result<()> {
    let svg = render_svg_string(result, t1, t2)?;
    let out = out.as_ref();
    std::fs::write(out, svg).map_err(|source| Error::Io {
        path: out.display().to_string(),
        source,
    })
}

pub fn render_svg_string(result: &MissionResult, t1: &Scene, t2: &Scene) -> Result<String> {
    let bounds = t1.bounds;
    let scale = (CANVAS_W - 2.0 * MARGIN) / bounds.width().max(1e-9);
    let height = bounds.depth() * scale;
    let canvas_h = height + 2.0 * MARGIN;
    let mapper = Mapper {
        scale,
        min: bounds.min,
        height,
    };
    let gt = diff_scenes(t1, t2)?;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_W:.0}" height="{canvas_h:.0}" viewBox="0 0 {CANVAS_W:.0} {canvas_h:.0}">"##
    );
    let _ = writeln!(
        s,
        r##"<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto-start-reverse"><path d="M0,0 L10,5 L0,10 Z" fill="#1565c0"/></marker></defs>"##
    );
    // Ground.
    {
        let (x0, y0) = mapper.map(bounds.min);
        let (x1, y1) = mapper.map(bounds.max);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#f3f1ec" stroke="#888888"/>"##,
            x0.min(x1),
            y0.min(y1),
            (x1 - x0).abs(),
            (y0 - y1).abs()
        );
    }
    // T1 prisms.
    for prism in &t1.prisms {
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="#c9c9c9" stroke="#777777" stroke-width="1"/>"##,
            path_of(&mapper, &prism.footprint, true)
        );
    }
    // Ground-truth changes: dashed red outline.
    for prism in &gt {
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#d32f2f" stroke-width="2" stroke-dasharray="6,4"/>"##,
            path_of(&mapper, &prism.footprint, true)
        );
    }
    // Detected hulls: translucent green fill.
    for target in &result.targets {
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="#4caf50" fill-opacity="0.35" stroke="#2e7d32" stroke-width="1.5"/>"##,
            path_of(&mapper, &target.hull.footprint, true)
        );
    }
    // Trajectory with arrowheads on every hop.
    let positions: Vec<Vec2> = result.views.iter().map(|v| v.position.xz()).collect();
    if positions.len() > 1 {
        for w in positions.windows(2) {
            let (x0, y0) = mapper.map(w[0]);
            let (x1, y1) = mapper.map(w[1]);
            if (x0 - x1).abs() + (y0 - y1).abs() < 1e-6 {
                continue; // same rig position, no physical hop
            }
            let _ = writeln!(
                s,
                r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="#1565c0" stroke-width="1.5" marker-end="url(#arrow)"/>"##
            );
        }
    }
    for (i, p) in positions.iter().enumerate() {
        let (x, y) = mapper.map(*p);
        let fill = if i == 0 { "#ff9800" } else { "#1565c0" };
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{fill}"/>"##);
    }
    // Legend.
    let legend = [
        ("#c9c9c9", "scene prism"),
        ("#d32f2f", "ground-truth change"),
        ("#4caf50", "detected hull"),
        ("#1565c0", "trajectory"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r##"<rect x="8" y="{:.1}" width="10" height="10" fill="{color}"/><text x="24" y="{:.1}" font-size="12" font-family="sans-serif">{label}</text>"##,
            y,
            y + 9.0
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="8" y="{:.1}" font-size="12" font-family="sans-serif">views: {}  path: {:.0} m  targets: {}</text>"##,
        canvas_h - 10.0,
        result.views.len(),
        result.trajectory.length_m,
        result.targets.len()
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlannerConfig;
    use crate::math::{v2, Rect};
    use crate::oracle::OracleNoise;
    use crate::realtime::run_mission;

    /// Minimal XML well-formedness check: every opened tag closes in order.
    fn assert_well_formed(xml: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = xml;
        while let Some(start) = rest.find('<') {
            let end = rest[start..].find('>').expect("unclosed tag bracket") + start;
            let tag = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().unwrap_or_else(|| panic!("stray closing {name}"));
                assert_eq!(open, name, "mismatched tag");
            } else if !tag.ends_with('/') {
                let name: String = tag.split_whitespace().next().unwrap().to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    #[test]
    fn empty_mission_renders_scene_only() {
        let scene = Scene::new(Vec::new(), Rect::new(v2(0.0, 0.0), v2(60.0, 60.0))).unwrap();
        let cfg = PlannerConfig::default();
        let result = run_mission(&scene, &scene, &cfg, &OracleNoise::NONE, 1).unwrap();
        let svg = render_svg_string(&result, &scene, &scene).unwrap();
        assert_well_formed(&svg);
        assert!(svg.contains("trajectory"));
        assert_eq!(svg.matches("fill-opacity").count(), 0); // no detected hulls
    }
}
