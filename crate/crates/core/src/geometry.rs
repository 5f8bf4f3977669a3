//! Exact geometric kernel: convex polygon math, hulls, prism IoU, and
//! frustum/occlusion visibility tests.
//!
//! All polygons are convex and stored counter-clockwise in the x–z plane
//! (positive shoelace area). Occlusion uses parametric segment clipping
//! against prism half-spaces, so no mesh booleans or exact predicates are
//! needed; tolerances are absolute and in meters.

use crate::error::{Error, Result};
use crate::math::{v2, v3, Rect, Vec2, Vec3};
use crate::scene::{Prism, Sample, Scene};
use crate::viewgen::View;
use serde::{Deserialize, Serialize};

/// Distance tolerance (m) for point-on-surface and containment checks.
pub const GEOM_EPS: f64 = 1e-9;

/// Self-face contact tolerance (m): a sight line may touch geometry this
/// close to the sample it targets without being counted as occluded.
pub const CONTACT_TOL: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Convex polygon primitives
// ---------------------------------------------------------------------------

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.cross(b);
    }
    acc * 0.5
}

pub fn polygon_area(poly: &[Vec2]) -> f64 {
    signed_area(poly).abs()
}

/// Convexity check for a CCW ring. Collinear vertices are tolerated.
pub fn is_convex_ccw(poly: &[Vec2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        let cross = (b - a).cross(c - b);
        // Scale tolerance with edge lengths so meter-scale and kilometer-scale
        // footprints behave alike.
        let scale = (b - a).norm() * (c - b).norm();
        if cross < -GEOM_EPS * scale.max(1.0) {
            return false;
        }
    }
    signed_area(poly) > GEOM_EPS
}

/// Point-in-convex-polygon with a distance tolerance in meters.
/// Points within `tol` outside an edge still count as inside.
pub fn point_in_convex(poly: &[Vec2], p: Vec2, tol: f64) -> bool {
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let e = b - a;
        let len = e.norm();
        if len <= GEOM_EPS {
            continue;
        }
        // Signed distance of p left of edge a->b (inside is left for CCW).
        let d = e.cross(p - a) / len;
        if d < -tol {
            return false;
        }
    }
    true
}

fn centroid(poly: &[Vec2]) -> Vec2 {
    let mut c = v2(0.0, 0.0);
    for p in poly {
        c = c + *p;
    }
    c * (1.0 / poly.len() as f64)
}

/// Clip a convex polygon by the half-plane left of `a -> b`
/// (Sutherland–Hodgman step).
fn clip_halfplane(subject: &[Vec2], a: Vec2, b: Vec2) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(subject.len() + 1);
    let n = subject.len();
    let e = b - a;
    for i in 0..n {
        let cur = subject[i];
        let nxt = subject[(i + 1) % n];
        let dc = e.cross(cur - a);
        let dn = e.cross(nxt - a);
        if dc >= 0.0 {
            out.push(cur);
        }
        if (dc > 0.0 && dn < 0.0) || (dc < 0.0 && dn > 0.0) {
            let t = dc / (dc - dn);
            out.push(cur + (nxt - cur) * t);
        }
    }
    out
}

/// Intersection of two convex CCW polygons (may be empty).
pub fn clip_convex(a: &[Vec2], b: &[Vec2]) -> Vec<Vec2> {
    let mut cur = a.to_vec();
    let n = b.len();
    for i in 0..n {
        if cur.is_empty() {
            break;
        }
        cur = clip_halfplane(&cur, b[i], b[(i + 1) % n]);
    }
    cur
}

/// Minkowski dilation of a convex CCW polygon by a disk of radius `r`,
/// approximated with a regular 16-gon.
pub fn dilate_convex(poly: &[Vec2], r: f64) -> Result<Vec<Vec2>> {
    if r <= 0.0 {
        return convex_hull_2d(poly);
    }
    let mut cloud = Vec::with_capacity(poly.len() * 16);
    for p in poly {
        for k in 0..16 {
            let ang = std::f64::consts::TAU * k as f64 / 16.0;
            cloud.push(*p + v2(ang.cos(), ang.sin()) * r);
        }
    }
    convex_hull_2d(&cloud)
}

/// Convex hull (Andrew monotone chain), CCW, no duplicate endpoint.
pub fn convex_hull_2d(points: &[Vec2]) -> Result<Vec<Vec2>> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.z).partial_cmp(&(b.x, b.z)).unwrap());
    pts.dedup_by(|a, b| a.dist(*b) <= GEOM_EPS);
    if pts.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).cross(b - o);
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    Ok(lower)
}

// ---------------------------------------------------------------------------
// Hull prisms
// ---------------------------------------------------------------------------

/// 2.5D convex prism bounding a detected point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullPrism {
    pub footprint: Vec<Vec2>,
    pub base_height: f64,
    pub top_height: f64,
}

impl HullPrism {
    pub fn volume(&self) -> f64 {
        polygon_area(&self.footprint) * (self.top_height - self.base_height)
    }

    pub fn footprint_area(&self) -> f64 {
        polygon_area(&self.footprint)
    }

    pub fn centroid(&self) -> Vec2 {
        centroid(&self.footprint)
    }

    /// Footprint containment plus height-interval containment.
    pub fn contains_prism(&self, other: &HullPrism, tol: f64) -> bool {
        other.base_height >= self.base_height - tol
            && other.top_height <= self.top_height + tol
            && other
                .footprint
                .iter()
                .all(|p| point_in_convex(&self.footprint, *p, tol))
    }

    pub fn contains_point(&self, p: Vec3, tol: f64) -> bool {
        p.y >= self.base_height - tol
            && p.y <= self.top_height + tol
            && point_in_convex(&self.footprint, p.xz(), tol)
    }
}

/// Bounding hull prism of a 3D point cloud: convex hull of the plan-view
/// projection, heights spanning the cloud.
pub fn hull_prism_of(points: &[Vec3]) -> Result<HullPrism> {
    if points.len() < 3 {
        return Err(Error::DegenerateHull);
    }
    let plan: Vec<Vec2> = points.iter().map(|p| p.xz()).collect();
    let footprint = convex_hull_2d(&plan)?;
    let mut base = f64::INFINITY;
    let mut top = f64::NEG_INFINITY;
    for p in points {
        base = base.min(p.y);
        top = top.max(p.y);
    }
    Ok(HullPrism {
        footprint,
        base_height: base,
        top_height: top,
    })
}

/// Volume intersection-over-union of two hull prisms. Footprint overlap is
/// exact convex clipping; height overlap is interval arithmetic. Flat prisms
/// (zero height) fall back to footprint-area IoU when they share a plane.
pub fn iou_prism(a: &HullPrism, b: &HullPrism) -> f64 {
    let inter_poly = clip_convex(&a.footprint, &b.footprint);
    let inter_area = if inter_poly.len() >= 3 {
        polygon_area(&inter_poly)
    } else {
        0.0
    };
    let h_overlap = (a.top_height.min(b.top_height) - a.base_height.max(b.base_height)).max(0.0);
    let vol_inter = inter_area * h_overlap;
    let vol_union = a.volume() + b.volume() - vol_inter;
    if vol_union > GEOM_EPS {
        return (vol_inter / vol_union).clamp(0.0, 1.0);
    }
    // Both prisms are flat. Compare footprints if they lie at the same height.
    if (a.base_height - b.base_height).abs() > GEOM_EPS {
        return 0.0;
    }
    let area_union = a.footprint_area() + b.footprint_area() - inter_area;
    if area_union > GEOM_EPS {
        (inter_area / area_union).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

// ---------------------------------------------------------------------------
// Frustum
// ---------------------------------------------------------------------------

/// View frustum: an apex, a forward direction, and two half-angles.
#[derive(Debug, Clone)]
pub struct Frustum {
    pub apex: Vec3,
    pub direction: Vec3,
    pub horizontal_half_angle: f64,
    pub vertical_half_angle: f64,
    pub far: f64,
    right: Vec3,
    up: Vec3,
    tan_h: f64,
    tan_v: f64,
}

impl Frustum {
    pub fn new(
        apex: Vec3,
        direction: Vec3,
        horizontal_half_angle: f64,
        vertical_half_angle: f64,
        far: f64,
    ) -> Frustum {
        let forward = direction.normalized();
        // Reference up: world +y unless the camera looks straight up/down,
        // then +z keeps the frame well defined (nadir views image world x–z).
        let reference = if forward.y.abs() < 0.999 {
            v3(0.0, 1.0, 0.0)
        } else {
            v3(0.0, 0.0, 1.0)
        };
        let right = reference.cross(forward).normalized();
        let up = forward.cross(right);
        Frustum {
            apex,
            direction: forward,
            horizontal_half_angle,
            vertical_half_angle,
            far,
            right,
            up,
            tan_h: horizontal_half_angle.tan(),
            tan_v: vertical_half_angle.tan(),
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let d = p - self.apex;
        let f = d.dot(self.direction);
        if f <= 0.0 {
            return false;
        }
        if d.norm() > self.far {
            return false;
        }
        let r = d.dot(self.right).abs();
        let u = d.dot(self.up).abs();
        r <= f * self.tan_h + GEOM_EPS && u <= f * self.tan_v + GEOM_EPS
    }
}

// ---------------------------------------------------------------------------
// Occlusion and the visibility predicate
// ---------------------------------------------------------------------------

/// True if the open segment `a -> b` passes through the prism interior.
/// The final `CONTACT_TOL` meters before `b` are excluded, so a segment
/// ending on the prism surface is not blocked by its own face.
pub fn segment_blocked_by_prism(a: Vec3, b: Vec3, prism: &Prism) -> bool {
    let seg = b - a;
    let len = seg.norm();
    if len <= CONTACT_TOL {
        return false;
    }
    let t_max = 1.0 - CONTACT_TOL / len;
    // Parametric clipping against the prism's half-spaces; each constraint is
    // c(t) <= 0 inside.
    let mut t_enter: f64 = 0.0;
    let mut t_exit: f64 = t_max;

    let mut apply = |c_a: f64, c_b: f64| -> bool {
        // Constraint values at t=0 and t=1; linear in t.
        let denom = c_b - c_a;
        if denom.abs() <= f64::EPSILON {
            return c_a <= 0.0; // parallel: inside iff already satisfying
        }
        let t = -c_a / denom;
        if denom > 0.0 {
            t_exit = t_exit.min(t); // leaving the half-space
        } else {
            t_enter = t_enter.max(t); // entering the half-space
        }
        t_enter < t_exit
    };

    // Height slab.
    if !apply(prism.base_height - a.y, prism.base_height - b.y) {
        return false;
    }
    if !apply(a.y - prism.top_height, b.y - prism.top_height) {
        return false;
    }
    // Footprint edges (CCW, inside is left of each edge).
    let fp = &prism.footprint;
    let n = fp.len();
    for i in 0..n {
        let p = fp[i];
        let q = fp[(i + 1) % n];
        let e = q - p;
        // c = -cross(e, x - p): negative when left of the edge (inside).
        let c_a = -e.cross(a.xz() - p);
        let c_b = -e.cross(b.xz() - p);
        if !apply(c_a, c_b) {
            return false;
        }
    }
    // Require the clipped interval to span a real distance, so grazing
    // contact along a face does not count as occlusion.
    (t_exit - t_enter) * len > CONTACT_TOL
}

/// Visibility of a sample from a view: inside the frustum, unoccluded by
/// every scene prism, and facing the camera.
pub fn visible(sample: &Sample, view: &View, scene: &Scene) -> bool {
    visible_point(sample.position, sample.normal, view, scene)
}

/// Visibility of an arbitrary oriented surface point (used by the change
/// oracle, which tests ground-truth points that are not scene samples).
pub fn visible_point(position: Vec3, normal: Vec3, view: &View, scene: &Scene) -> bool {
    // Back-face cull first: it is the cheapest rejection.
    if normal.dot(view.position - position) <= 0.0 {
        return false;
    }
    if !view.frustum.contains(position) {
        return false;
    }
    let a = view.position;
    for prism in &scene.prisms {
        // Plan-view reject before the full clip.
        if !segment_overlaps_rect(a.xz(), position.xz(), &prism.plan_bbox) {
            continue;
        }
        if segment_blocked_by_prism(a, position, prism) {
            return false;
        }
    }
    true
}

fn segment_overlaps_rect(a: Vec2, b: Vec2, r: &Rect) -> bool {
    a.x.min(b.x) <= r.max.x
        && a.x.max(b.x) >= r.min.x
        && a.z.min(b.z) <= r.max.z
        && a.z.max(b.z) >= r.min.z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SemanticLabel;

    fn square(cx: f64, cz: f64, half: f64) -> Vec<Vec2> {
        vec![
            v2(cx - half, cz - half),
            v2(cx + half, cz - half),
            v2(cx + half, cz + half),
            v2(cx - half, cz + half),
        ]
    }

    fn box_prism(cx: f64, cz: f64, half: f64, base: f64, top: f64) -> Prism {
        Prism::new(square(cx, cz, half), base, top, SemanticLabel::BuildingLow).unwrap()
    }

    #[test]
    fn hull_drops_interior_point() {
        let mut pts = square(0.5, 0.5, 0.5);
        pts.push(v2(0.5, 0.5));
        let hull = convex_hull_2d(&pts).unwrap();
        assert_eq!(hull.len(), 4);
        assert!((polygon_area(&hull) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hull_is_idempotent() {
        let pts = vec![
            v2(0.0, 0.0),
            v2(3.0, 0.2),
            v2(2.5, 2.9),
            v2(0.1, 2.0),
            v2(1.5, 1.0),
        ];
        let h1 = convex_hull_2d(&pts).unwrap();
        let h2 = convex_hull_2d(&h1).unwrap();
        assert_eq!(h1.len(), h2.len());
        for (a, b) in h1.iter().zip(h2.iter().cycle().skip_while(|p| p.dist(h1[0]) > 1e-12)) {
            assert!(a.dist(*b) < 1e-12);
        }
    }

    #[test]
    fn hull_rejects_collinear() {
        let pts = vec![v2(0.0, 0.0), v2(1.0, 1.0), v2(2.0, 2.0)];
        assert!(convex_hull_2d(&pts).is_err());
    }

    #[test]
    fn clip_of_offset_squares() {
        let a = square(0.5, 0.5, 0.5);
        let b = square(1.0, 0.5, 0.5);
        let inter = clip_convex(&a, &b);
        assert!((polygon_area(&inter) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = HullPrism {
            footprint: square(0.0, 0.0, 1.0),
            base_height: 0.0,
            top_height: 2.0,
        };
        assert!((iou_prism(&a, &a) - 1.0).abs() < 1e-12);
        let far = HullPrism {
            footprint: square(10.0, 0.0, 1.0),
            base_height: 0.0,
            top_height: 2.0,
        };
        assert_eq!(iou_prism(&a, &far), 0.0);
    }

    #[test]
    fn iou_offset_unit_cubes_is_one_third() {
        let a = HullPrism {
            footprint: square(0.5, 0.5, 0.5),
            base_height: 0.0,
            top_height: 1.0,
        };
        let b = HullPrism {
            footprint: square(1.0, 0.5, 0.5),
            base_height: 0.0,
            top_height: 1.0,
        };
        assert!((iou_prism(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hull_prism_of_box_corners() {
        let mut pts = Vec::new();
        for &y in &[0.0, 2.0] {
            for c in square(0.0, 0.0, 1.0) {
                pts.push(c.at_height(y));
            }
        }
        let hp = hull_prism_of(&pts).unwrap();
        assert_eq!(hp.base_height, 0.0);
        assert_eq!(hp.top_height, 2.0);
        assert!((hp.footprint_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn flat_cloud_keeps_zero_height() {
        let pts: Vec<Vec3> = square(0.0, 0.0, 1.0).iter().map(|p| p.at_height(5.0)).collect();
        let hp = hull_prism_of(&pts).unwrap();
        assert_eq!(hp.base_height, hp.top_height);
        assert!((iou_prism(&hp, &hp) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn segment_through_box_is_blocked() {
        let prism = box_prism(0.0, 0.0, 1.0, 0.0, 10.0);
        let a = v3(-5.0, 5.0, 0.0);
        let b = v3(5.0, 5.0, 0.0);
        assert!(segment_blocked_by_prism(a, b, &prism));
        // Above the prism: clear.
        let a2 = v3(-5.0, 11.0, 0.0);
        let b2 = v3(5.0, 11.0, 0.0);
        assert!(!segment_blocked_by_prism(a2, b2, &prism));
    }

    #[test]
    fn segment_ending_on_face_is_not_blocked() {
        let prism = box_prism(0.0, 0.0, 1.0, 0.0, 10.0);
        // From outside to a point on the wall x = -1.
        let a = v3(-5.0, 5.0, 0.0);
        let b = v3(-1.0, 5.0, 0.0);
        assert!(!segment_blocked_by_prism(a, b, &prism));
        // To the far wall: must pass through the interior.
        let c = v3(1.0, 5.0, 0.0);
        assert!(segment_blocked_by_prism(a, c, &prism));
    }

    #[test]
    fn grazing_segment_is_tolerated() {
        let prism = box_prism(0.0, 0.0, 1.0, 0.0, 10.0);
        // Slides along the top face plane.
        let a = v3(-5.0, 10.0, 0.0);
        let b = v3(5.0, 10.0, 0.0);
        assert!(!segment_blocked_by_prism(a, b, &prism));
    }

    #[test]
    fn frustum_nadir_contains_ground_cone() {
        let f = Frustum::new(
            v3(0.0, 120.0, 0.0),
            v3(0.0, -1.0, 0.0),
            0.4,
            0.4,
            360.0,
        );
        assert!(f.contains(v3(0.0, 0.0, 0.0)));
        let reach = 120.0 * 0.4f64.tan();
        assert!(f.contains(v3(reach - 0.1, 0.0, 0.0)));
        assert!(!f.contains(v3(reach + 1.0, 0.0, 0.0)));
        assert!(!f.contains(v3(0.0, 130.0, 0.0))); // behind the apex
    }

    #[test]
    fn dilation_grows_area() {
        let poly = square(0.0, 0.0, 1.0);
        let grown = dilate_convex(&poly, 2.0).unwrap();
        assert!(polygon_area(&grown) > polygon_area(&poly) + 4.0);
        for p in &poly {
            assert!(point_in_convex(&grown, *p, 1e-9));
        }
    }
}
