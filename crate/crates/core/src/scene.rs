//! Labeled 2.5D urban scenes at two epochs.
//!
//! A scene is a ground rectangle plus a set of convex vertical prisms, each
//! carrying a semantic label with an associated prior change probability
//! (WUSU change statistics mapped onto the UrbanBIS label set). The module
//! also owns surface discretization into scored samples and the ground-truth
//! diff between the two epochs.

use crate::error::{Error, Result};
use crate::geometry::{
    clip_convex, convex_hull_2d, is_convex_ccw, point_in_convex, polygon_area, signed_area,
    GEOM_EPS,
};
use crate::math::{v2, v3, Rect, Vec2, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

/// Buildings at or below this roof height are "low" in the WUSU statistics.
pub const BUILDING_SPLIT_HEIGHT: f64 = 40.0;

/// Semantic labels: the UrbanBIS scene labels (buildings split by height)
/// plus the WUSU classes that have no UrbanBIS mapping. The extra classes are
/// carried so custom scenes can opt into them; the bundled scenes do not use
/// them.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum SemanticLabel {
    Terrain,
    Vegetation,
    Water,
    Bridge,
    Vehicle,
    Boat,
    BuildingLow,
    BuildingHigh,
    Grassland,
    Excavation,
    BareSurface,
    ArableLand,
    River,
    Unclassified,
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// Per-label prior change probabilities.
///
/// Defaults are the WUSU change rates (changed pixels / total pixels per
/// class across the 2015-2016 and 2016-2018 periods).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub entries: BTreeMap<SemanticLabel, f64>,
}

impl Default for PriorTable {
    fn default() -> Self {
        use SemanticLabel::*;
        let entries = BTreeMap::from([
            // Road row covers paved terrain and the vehicles on it.
            (Terrain, 0.017833558),
            (Vehicle, 0.017833558),
            (BuildingLow, 0.075458861),
            (BuildingHigh, 0.018068121),
            (Vegetation, 0.041211502),
            (Water, 0.002392529),
            (Boat, 0.002392529),
            (Bridge, 0.059790134),
            (Grassland, 0.262180652),
            (River, 2.37656e-5),
            (Excavation, 0.278449149),
            (BareSurface, 0.496139114),
            (ArableLand, 0.0),
            (Unclassified, 0.0),
        ]);
        PriorTable { entries }
    }
}

impl PriorTable {
    /// Prior change probability for a label; errors if the configured table
    /// has no entry.
    pub fn prior_probability(&self, label: SemanticLabel) -> Result<f64> {
        self.entries
            .get(&label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (label, p) in &self.entries {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidConfig(format!(
                    "prior probability for {label} is {p}, outside [0,1]"
                )));
            }
        }
        Ok(())
    }
}

/// Convex vertical prism: a CCW footprint extruded from `base_height` to
/// `top_height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prism {
    pub footprint: Vec<Vec2>,
    pub base_height: f64,
    pub top_height: f64,
    pub label: SemanticLabel,
    #[serde(skip, default = "empty_rect")]
    pub plan_bbox: Rect,
}

fn empty_rect() -> Rect {
    Rect::new(v2(0.0, 0.0), v2(0.0, 0.0))
}

impl Prism {
    /// Validates and normalizes a prism. Clockwise footprints are reversed;
    /// concave or collinear footprints are rejected.
    pub fn new(
        footprint: Vec<Vec2>,
        base_height: f64,
        top_height: f64,
        label: SemanticLabel,
    ) -> Result<Prism> {
        let mut fp = footprint;
        fp.dedup_by(|a, b| a.dist(*b) <= GEOM_EPS);
        if fp.len() > 1 && fp[0].dist(*fp.last().unwrap()) <= GEOM_EPS {
            fp.pop();
        }
        if fp.len() < 3 {
            return Err(Error::InvalidScene(
                "footprint needs at least 3 distinct vertices".into(),
            ));
        }
        if signed_area(&fp) < 0.0 {
            fp.reverse();
        }
        if polygon_area(&fp) <= GEOM_EPS {
            return Err(Error::InvalidScene("footprint is degenerate".into()));
        }
        if !is_convex_ccw(&fp) {
            return Err(Error::InvalidScene("footprint not convex".into()));
        }
        if !(base_height >= 0.0 && top_height > base_height) {
            return Err(Error::InvalidScene(format!(
                "heights invalid: base {base_height}, top {top_height}"
            )));
        }
        let plan_bbox = Rect::around(fp.iter().copied()).unwrap();
        Ok(Prism {
            footprint: fp,
            base_height,
            top_height,
            label,
            plan_bbox,
        })
    }

    pub fn volume(&self) -> f64 {
        polygon_area(&self.footprint) * (self.top_height - self.base_height)
    }

    /// Geometric equality within `tol`, up to footprint rotation.
    pub fn geometry_eq(&self, other: &Prism, tol: f64) -> bool {
        if (self.base_height - other.base_height).abs() > tol
            || (self.top_height - other.top_height).abs() > tol
            || self.footprint.len() != other.footprint.len()
        {
            return false;
        }
        let n = self.footprint.len();
        (0..n).any(|shift| {
            (0..n).all(|i| self.footprint[i].dist(other.footprint[(i + shift) % n]) <= tol)
        })
    }
}

/// A labeled 2.5D scene: ground rectangle at height zero plus prisms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub prisms: Vec<Prism>,
    pub bounds: Rect,
}

impl Scene {
    pub fn new(prisms: Vec<Prism>, bounds: Rect) -> Result<Scene> {
        if !(bounds.width() > 0.0 && bounds.depth() > 0.0) {
            return Err(Error::InvalidScene("bounds are degenerate".into()));
        }
        for (i, prism) in prisms.iter().enumerate() {
            for p in &prism.footprint {
                if !bounds.contains(*p, 1e-6) {
                    return Err(Error::InvalidPrism {
                        index: i,
                        reason: format!("vertex ({}, {}) outside scene bounds", p.x, p.z),
                    });
                }
            }
        }
        Ok(Scene { prisms, bounds })
    }

    pub fn max_top_height(&self) -> f64 {
        self.prisms
            .iter()
            .map(|p| p.top_height)
            .fold(0.0, f64::max)
    }

    /// Labels appearing in the scene (ground is always Terrain).
    pub fn labels(&self) -> BTreeSet<SemanticLabel> {
        let mut set: BTreeSet<SemanticLabel> =
            self.prisms.iter().map(|p| p.label).collect();
        set.insert(SemanticLabel::Terrain);
        set
    }
}

/// Discretized surface point with its changeability score and observation
/// bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub position: Vec3,
    pub normal: Vec3,
    /// Changeability score: the label prior, or 1.0 for detected-change
    /// target samples.
    pub q: f64,
    pub label: SemanticLabel,
    /// Ids of visited views that have observed this sample.
    pub observers: BTreeSet<u32>,
}

impl Sample {
    pub fn new(position: Vec3, normal: Vec3, q: f64, label: SemanticLabel) -> Sample {
        Sample {
            position,
            normal,
            q,
            label,
            observers: BTreeSet::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// Scene files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SceneFile {
    bounds: [[f64; 2]; 2],
    prisms: Vec<PrismFile>,
}

#[derive(Serialize, Deserialize)]
struct PrismFile {
    footprint: Vec<[f64; 2]>,
    base: f64,
    top: f64,
    label: String,
}

fn parse_label(raw: &str, top_height: f64) -> Result<SemanticLabel> {
    use SemanticLabel::*;
    Ok(match raw {
        // Unsplit buildings are classified by roof height at load time.
        "Building" => {
            if top_height > BUILDING_SPLIT_HEIGHT {
                BuildingHigh
            } else {
                BuildingLow
            }
        }
        "Terrain" => Terrain,
        "Vegetation" => Vegetation,
        "Water" => Water,
        "Bridge" => Bridge,
        "Vehicle" => Vehicle,
        "Boat" => Boat,
        "BuildingLow" => BuildingLow,
        "BuildingHigh" => BuildingHigh,
        "Grassland" => Grassland,
        "Excavation" => Excavation,
        "BareSurface" => BareSurface,
        "ArableLand" => ArableLand,
        "River" => River,
        "Unclassified" => Unclassified,
        other => return Err(Error::UnknownLabel(other.to_string())),
    })
}

/// Load and validate a scene file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    scene_from_json(&text).map_err(|e| match e {
        Error::InvalidScene(reason) => Error::InvalidScene(format!("{}: {reason}", path.display())),
        other => other,
    })
}

/// Parse a scene from JSON text.
pub fn scene_from_json(text: &str) -> Result<Scene> {
    let file: SceneFile = serde_json::from_str(text).map_err(|source| Error::Parse {
        path: "<scene>".into(),
        source,
    })?;
    let bounds = Rect::new(
        v2(file.bounds[0][0], file.bounds[0][1]),
        v2(file.bounds[1][0], file.bounds[1][1]),
    );
    let mut prisms = Vec::with_capacity(file.prisms.len());
    for (i, pf) in file.prisms.into_iter().enumerate() {
        let label = parse_label(&pf.label, pf.top)?;
        let footprint = pf.footprint.iter().map(|&[x, z]| v2(x, z)).collect();
        let prism = Prism::new(footprint, pf.base, pf.top, label)
            .map_err(|e| Error::InvalidPrism {
                index: i,
                reason: e.to_string(),
            })?;
        prisms.push(prism);
    }
    Scene::new(prisms, bounds)
}

/// Serialize a scene to the on-disk JSON schema.
pub fn scene_to_json(scene: &Scene) -> String {
    let file = SceneFile {
        bounds: [
            [scene.bounds.min.x, scene.bounds.min.z],
            [scene.bounds.max.x, scene.bounds.max.z],
        ],
        prisms: scene
            .prisms
            .iter()
            .map(|p| PrismFile {
                footprint: p.footprint.iter().map(|v| [v.x, v.z]).collect(),
                base: p.base_height,
                top: p.top_height,
                label: p.label.to_string(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("scene serialization cannot fail")
}

// ---------------------------------------------------------------------------
// Surface discretization
// ---------------------------------------------------------------------------

/// Evenly spaced values covering [lo, hi] inclusive, at most `spacing` apart.
fn linspace(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let extent = hi - lo;
    if extent <= GEOM_EPS {
        return vec![lo];
    }
    let segments = (extent / spacing).ceil().max(1.0) as usize;
    (0..=segments)
        .map(|i| lo + extent * i as f64 / segments as f64)
        .collect()
}

/// Discretize the scene surface (ground, prism tops, prism walls) into
/// samples at most `spacing` apart, scoring each from the prior table.
///
/// Deterministic: same scene and spacing produce the identical sample list.
pub fn sample_surface(scene: &Scene, spacing: f64, priors: &PriorTable) -> Result<Vec<Sample>> {
    assert!(spacing > 0.0, "sample spacing must be positive");
    let mut samples = Vec::new();
    let up = v3(0.0, 1.0, 0.0);

    // Ground: inclusive grid over the bounds, skipping points strictly inside
    // a ground-touching prism (those points are interior, not surface).
    let ground_q = priors.prior_probability(SemanticLabel::Terrain)?;
    let xs = linspace(scene.bounds.min.x, scene.bounds.max.x, spacing);
    let zs = linspace(scene.bounds.min.z, scene.bounds.max.z, spacing);
    let grounded: Vec<&Prism> = scene
        .prisms
        .iter()
        .filter(|p| p.base_height <= 1e-6)
        .collect();
    for &x in &xs {
        for &z in &zs {
            let p = v2(x, z);
            let buried = grounded.iter().any(|prism| {
                prism.plan_bbox.contains(p, 0.0) && point_in_convex(&prism.footprint, p, -1e-6)
            });
            if !buried {
                samples.push(Sample::new(p.at_height(0.0), up, ground_q, SemanticLabel::Terrain));
            }
        }
    }

    for prism in &scene.prisms {
        let q = priors.prior_probability(prism.label)?;
        sample_prism_faces(prism, spacing, &mut |pos, normal| {
            samples.push(Sample::new(pos, normal, q, prism.label));
        });
    }
    Ok(samples)
}

/// Emit surface points of a prism's top face and side walls. Face corners
/// are always included, so the emitted cloud's convex hull recovers the
/// prism exactly.
pub fn sample_prism_faces(prism: &Prism, spacing: f64, emit: &mut dyn FnMut(Vec3, Vec3)) {
    let up = v3(0.0, 1.0, 0.0);
    let fp = &prism.footprint;
    let n = fp.len();

    // Top face: vertices, subdivided edges, then the interior lattice.
    for v in fp {
        emit(v.at_height(prism.top_height), up);
    }
    for i in 0..n {
        let a = fp[i];
        let b = fp[(i + 1) % n];
        let len = a.dist(b);
        let m = (len / spacing).ceil().max(1.0) as usize;
        for j in 1..m {
            let p = a + (b - a) * (j as f64 / m as f64);
            emit(p.at_height(prism.top_height), up);
        }
    }
    let bbox = prism.plan_bbox;
    for &x in &linspace(bbox.min.x, bbox.max.x, spacing) {
        for &z in &linspace(bbox.min.z, bbox.max.z, spacing) {
            let p = v2(x, z);
            if point_in_convex(fp, p, -1e-6) {
                emit(p.at_height(prism.top_height), up);
            }
        }
    }

    // Walls: one rectangular grid per footprint edge, corners included.
    for i in 0..n {
        let a = fp[i];
        let b = fp[(i + 1) % n];
        let e = b - a;
        let len = e.norm();
        if len <= GEOM_EPS {
            continue;
        }
        // Outward normal of a CCW ring edge.
        let normal2 = v2(e.z, -e.x).normalized();
        let normal = v3(normal2.x, 0.0, normal2.z);
        let nu = (len / spacing).ceil().max(1.0) as usize;
        let ys = linspace(prism.base_height, prism.top_height, spacing);
        for iu in 0..=nu {
            let p = a + e * (iu as f64 / nu as f64);
            for &y in &ys {
                emit(p.at_height(y), normal);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Ground-truth diff between epochs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Epoch {
    T1,
    T2,
}

/// One ground-truth change area: the prisms that differ between epochs,
/// grouped into a connected region, plus the region's bounding prism.
#[derive(Debug, Clone)]
pub struct ChangeRegion {
    /// Union-footprint hull spanning all member prisms.
    pub prism: Prism,
    pub members: Vec<(Epoch, Prism)>,
}

/// Minimum plan-view distance between two convex polygons (0 if they
/// intersect).
fn polygon_distance(a: &[Vec2], b: &[Vec2]) -> f64 {
    if !clip_convex(a, b).is_empty() {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for (p, q) in [(a, b), (b, a)] {
        for v in p {
            let n = q.len();
            for i in 0..n {
                best = best.min(point_segment_distance(*v, q[i], q[(i + 1) % n]));
            }
        }
    }
    best
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let e = b - a;
    let len2 = e.dot(e);
    if len2 <= GEOM_EPS * GEOM_EPS {
        return p.dist(a);
    }
    let t = (e.dot(p - a) / len2).clamp(0.0, 1.0);
    p.dist(a + e * t)
}

/// Ground-truth change regions between two epochs of the same site.
///
/// Prisms geometrically identical in both epochs are unchanged. Remaining
/// prisms are grouped into regions by plan-view adjacency, so a modified
/// building (old and new footprints overlapping) or a composite building
/// forms a single region.
pub fn diff_regions(t1: &Scene, t2: &Scene) -> Result<Vec<ChangeRegion>> {
    let b1 = t1.bounds;
    let b2 = t2.bounds;
    if b1.min.dist(b2.min) > 1e-9 || b1.max.dist(b2.max) > 1e-9 {
        return Err(Error::MismatchedBounds);
    }

    // Multiset-match identical prisms across epochs.
    let mut t2_used = vec![false; t2.prisms.len()];
    let mut changed: Vec<(Epoch, Prism)> = Vec::new();
    for p1 in &t1.prisms {
        let matched = t2.prisms.iter().enumerate().find(|(j, p2)| {
            !t2_used[*j] && p1.label == p2.label && p1.geometry_eq(p2, 1e-9)
        });
        match matched {
            Some((j, _)) => t2_used[j] = true,
            None => changed.push((Epoch::T1, p1.clone())),
        }
    }
    for (j, p2) in t2.prisms.iter().enumerate() {
        if !t2_used[j] {
            changed.push((Epoch::T2, p2.clone()));
        }
    }

    // Union-find over plan-view adjacency.
    let n = changed.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if polygon_distance(&changed[i].1.footprint, &changed[j].1.footprint) <= 1e-6 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut regions = Vec::new();
    for (_, idxs) in groups {
        let members: Vec<(Epoch, Prism)> = idxs.iter().map(|&i| changed[i].clone()).collect();
        let mut cloud: Vec<Vec2> = Vec::new();
        let mut base = f64::INFINITY;
        let mut top = f64::NEG_INFINITY;
        for (_, p) in &members {
            cloud.extend(p.footprint.iter().copied());
            base = base.min(p.base_height);
            top = top.max(p.top_height);
        }
        let footprint = convex_hull_2d(&cloud)?;
        let label = members
            .iter()
            .max_by(|a, b| a.1.volume().partial_cmp(&b.1.volume()).unwrap())
            .map(|(_, p)| p.label)
            .unwrap();
        let prism = Prism::new(footprint, base, top, label).map_err(|e| {
            Error::InvalidScene(format!("degenerate change region: {e}"))
        })?;
        regions.push(ChangeRegion { prism, members });
    }
    // Deterministic order: by footprint centroid, x then z.
    regions.sort_by(|a, b| {
        let ca = a.prism.plan_bbox.min;
        let cb = b.prism.plan_bbox.min;
        (ca.x, ca.z).partial_cmp(&(cb.x, cb.z)).unwrap()
    });
    Ok(regions)
}

/// Symmetric difference of two epochs as a list of changed prisms.
pub fn diff_scenes(t1: &Scene, t2: &Scene) -> Result<Vec<Prism>> {
    Ok(diff_regions(t1, t2)?.into_iter().map(|r| r.prism).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(cx: f64, cz: f64, half: f64) -> Vec<Vec2> {
        vec![
            v2(cx - half, cz - half),
            v2(cx + half, cz - half),
            v2(cx + half, cz + half),
            v2(cx - half, cz + half),
        ]
    }

    fn ground_scene(w: f64, d: f64) -> Scene {
        Scene::new(Vec::new(), Rect::new(v2(0.0, 0.0), v2(w, d))).unwrap()
    }

    #[test]
    fn prior_table_matches_wusu() {
        let t = PriorTable::default();
        assert_eq!(t.prior_probability(SemanticLabel::BuildingLow).unwrap(), 0.075458861);
        assert_eq!(t.prior_probability(SemanticLabel::Vegetation).unwrap(), 0.041211502);
        assert_eq!(t.prior_probability(SemanticLabel::Water).unwrap(), 0.002392529);
        assert_eq!(t.prior_probability(SemanticLabel::BuildingHigh).unwrap(), 0.018068121);
    }

    #[test]
    fn ground_only_sampling_count_and_score() {
        let scene = ground_scene(10.0, 10.0);
        let samples = sample_surface(&scene, 5.0, &PriorTable::default()).unwrap();
        assert_eq!(samples.len(), 9);
        for s in &samples {
            assert_eq!(s.q, 0.017833558);
            assert_eq!(s.position.y, 0.0);
            assert!(s.observers.is_empty());
        }
    }

    #[test]
    fn building_split_on_load() {
        let json = r#"{
            "bounds": [[0,0],[100,100]],
            "prisms": [
                {"footprint": [[10,10],[30,10],[30,30],[10,30]], "base": 0, "top": 20, "label": "Building"},
                {"footprint": [[50,50],[70,50],[70,70],[50,70]], "base": 0, "top": 55, "label": "Building"}
            ]
        }"#;
        let scene = scene_from_json(json).unwrap();
        assert_eq!(scene.prisms[0].label, SemanticLabel::BuildingLow);
        assert_eq!(scene.prisms[1].label, SemanticLabel::BuildingHigh);
    }

    #[test]
    fn concave_footprint_rejected() {
        let json = r#"{
            "bounds": [[0,0],[100,100]],
            "prisms": [
                {"footprint": [[0,0],[40,0],[40,40],[20,10],[0,40]], "base": 0, "top": 10, "label": "Building"}
            ]
        }"#;
        let err = scene_from_json(json).unwrap_err();
        assert!(err.to_string().contains("footprint not convex"), "{err}");
    }

    #[test]
    fn single_prism_scene_loads() {
        let json = r#"{
            "bounds": [[0,0],[1,1]],
            "prisms": [
                {"footprint": [[0,0],[1,0],[1,1],[0,1]], "base": 0, "top": 1, "label": "BuildingLow"}
            ]
        }"#;
        let scene = scene_from_json(json).unwrap();
        assert_eq!(scene.prisms.len(), 1);
        assert_eq!(scene.prisms[0].plan_bbox, Rect::new(v2(0.0, 0.0), v2(1.0, 1.0)));
    }

    #[test]
    fn degenerate_spacing_keeps_every_face() {
        let prism =
            Prism::new(square(50.0, 50.0, 10.0), 0.0, 8.0, SemanticLabel::BuildingLow).unwrap();
        let scene = Scene::new(vec![prism], Rect::new(v2(0.0, 0.0), v2(100.0, 100.0))).unwrap();
        let samples = sample_surface(&scene, 1000.0, &PriorTable::default()).unwrap();
        // Top face present.
        assert!(samples.iter().any(|s| s.position.y == 8.0 && s.normal.y == 1.0));
        // All four wall orientations present.
        for dir in [v2(1.0, 0.0), v2(-1.0, 0.0), v2(0.0, 1.0), v2(0.0, -1.0)] {
            assert!(
                samples
                    .iter()
                    .any(|s| s.normal.y == 0.0 && s.normal.xz().dot(dir) > 0.99),
                "missing wall facing {dir:?}"
            );
        }
    }

    #[test]
    fn samples_lie_on_surfaces() {
        let prism =
            Prism::new(square(40.0, 40.0, 15.0), 0.0, 22.0, SemanticLabel::BuildingLow).unwrap();
        let scene = Scene::new(vec![prism], Rect::new(v2(0.0, 0.0), v2(100.0, 100.0))).unwrap();
        let samples = sample_surface(&scene, 7.0, &PriorTable::default()).unwrap();
        for s in &samples {
            let on_ground = s.position.y.abs() <= 1e-6;
            let p = &scene.prisms[0];
            let on_top = (s.position.y - p.top_height).abs() <= 1e-6
                && point_in_convex(&p.footprint, s.position.xz(), 1e-6);
            let on_wall = s.position.y >= -1e-6
                && s.position.y <= p.top_height + 1e-6
                && point_in_convex(&p.footprint, s.position.xz(), 1e-6)
                && !point_in_convex(&p.footprint, s.position.xz(), -1e-6);
            assert!(on_ground || on_top || on_wall, "stray sample at {:?}", s.position);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let prism =
            Prism::new(square(40.0, 40.0, 15.0), 0.0, 22.0, SemanticLabel::BuildingLow).unwrap();
        let scene = Scene::new(vec![prism], Rect::new(v2(0.0, 0.0), v2(100.0, 100.0))).unwrap();
        let a = sample_surface(&scene, 7.0, &PriorTable::default()).unwrap();
        let b = sample_surface(&scene, 7.0, &PriorTable::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diff_identical_scenes_is_empty() {
        let prism =
            Prism::new(square(40.0, 40.0, 15.0), 0.0, 22.0, SemanticLabel::BuildingLow).unwrap();
        let scene = Scene::new(vec![prism], Rect::new(v2(0.0, 0.0), v2(100.0, 100.0))).unwrap();
        assert!(diff_scenes(&scene, &scene).unwrap().is_empty());
    }

    #[test]
    fn diff_detects_insertion() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(100.0, 100.0));
        let t1 = Scene::new(Vec::new(), bounds).unwrap();
        let added =
            Prism::new(square(40.0, 40.0, 15.0), 0.0, 22.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = Scene::new(vec![added.clone()], bounds).unwrap();
        let diff = diff_scenes(&t1, &t2).unwrap();
        assert_eq!(diff.len(), 1);
        assert!(diff[0].geometry_eq(&added, 1e-9));
    }

    #[test]
    fn diff_merges_modified_prism() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(100.0, 100.0));
        let old =
            Prism::new(square(40.0, 40.0, 15.0), 0.0, 22.0, SemanticLabel::BuildingLow).unwrap();
        let new =
            Prism::new(square(40.0, 40.0, 15.0), 0.0, 35.0, SemanticLabel::BuildingLow).unwrap();
        let t1 = Scene::new(vec![old.clone()], bounds).unwrap();
        let t2 = Scene::new(vec![new], bounds).unwrap();
        let diff = diff_scenes(&t1, &t2).unwrap();
        assert_eq!(diff.len(), 1);
        // One region whose footprint equals the shared footprint, spanning
        // both height ranges.
        assert_eq!(diff[0].base_height, 0.0);
        assert_eq!(diff[0].top_height, 35.0);
        assert!((polygon_area(&diff[0].footprint) - polygon_area(&old.footprint)).abs() < 1e-9);
    }

    #[test]
    fn diff_rejects_mismatched_bounds() {
        let t1 = ground_scene(100.0, 100.0);
        let t2 = ground_scene(120.0, 100.0);
        assert!(matches!(diff_scenes(&t1, &t2), Err(Error::MismatchedBounds)));
    }
}
