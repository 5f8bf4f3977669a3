//! Geometric change oracle: a desk-scale stand-in for image matching plus
//! multi-view stereo.
//!
//! The oracle knows the ground-truth diff between the epochs. At each
//! visited view it returns surface points of changed regions that are
//! visible from the recent 8-view window, optionally degraded by per-view
//! dropout and Gaussian position jitter. Everything is deterministic for a
//! fixed seed: dropout and jitter derive from hashes of (seed, view id,
//! point index), never from call order.

use crate::config::PlannerConfig;
use crate::error::Result;
use crate::geometry::{hull_prism_of, iou_prism, visible_point, HullPrism, GEOM_EPS};
use crate::math::{mix_seed, Vec2, Vec3};
use crate::scene::{
    diff_regions, sample_prism_faces, ChangeRegion, Epoch, Sample, Scene, SemanticLabel,
};
use crate::viewgen::View;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};

/// Reconstruction window: only the newest 8 images contribute points.
pub const WINDOW_CAPACITY: usize = 8;

/// Imperfection model for the replaced vision stack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleNoise {
    /// Fraction of change points withheld per view.
    pub dropout_prob: f64,
    /// Standard deviation of Gaussian positional noise (m).
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl OracleNoise {
    pub const NONE: OracleNoise = OracleNoise {
        dropout_prob: 0.0,
        jitter_sigma: 0.0,
        seed: 0,
    };

    pub fn new(dropout_prob: f64, jitter_sigma: f64, seed: u64) -> OracleNoise {
        assert!((0.0..=1.0).contains(&dropout_prob));
        assert!(jitter_sigma >= 0.0);
        OracleNoise {
            dropout_prob,
            jitter_sigma,
            seed,
        }
    }
}

/// One ground-truth surface point of a change region.
#[derive(Debug, Clone)]
struct RegionPoint {
    position: Vec3,
    normal: Vec3,
    epoch: Epoch,
}

/// Ring buffer of the most recent visited views with their per-view
/// visibility masks over the oracle's change points.
#[derive(Debug, Default)]
pub struct DetectionWindow {
    entries: VecDeque<WindowEntry>,
}

#[derive(Debug)]
struct WindowEntry {
    view_id: u32,
    /// Global change-point indices visible from this view.
    visible: Vec<u32>,
    /// Change regions this view's frustum intersected (diff mask summary).
    pub regions_seen: BTreeSet<usize>,
}

impl DetectionWindow {
    pub fn new() -> DetectionWindow {
        DetectionWindow::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn view_ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.view_id).collect()
    }

    fn push(&mut self, entry: WindowEntry) {
        if self.entries.len() == WINDOW_CAPACITY {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }
}

/// Ground-truth change detector for a T1/T2 scene pair.
pub struct ChangeOracle {
    regions: Vec<ChangeRegion>,
    points: Vec<RegionPoint>,
    /// Per region: range of indices into `points`.
    region_ranges: Vec<(u32, u32)>,
    t1: Scene,
    t2: Scene,
}

impl ChangeOracle {
    /// Diff the epochs and discretize every changed surface at `spacing`.
    pub fn new(t1: &Scene, t2: &Scene, spacing: f64) -> Result<ChangeOracle> {
        let regions = diff_regions(t1, t2)?;
        let mut points = Vec::new();
        let mut region_ranges = Vec::new();
        for region in &regions {
            let start = points.len() as u32;
            for (epoch, prism) in &region.members {
                sample_prism_faces(prism, spacing, &mut |position, normal| {
                    points.push(RegionPoint {
                        position,
                        normal,
                        epoch: *epoch,
                    });
                });
            }
            region_ranges.push((start, points.len() as u32));
        }
        Ok(ChangeOracle {
            regions,
            points,
            region_ranges,
            t1: t1.clone(),
            t2: t2.clone(),
        })
    }

    pub fn regions(&self) -> &[ChangeRegion] {
        &self.regions
    }

    /// Record a just-visited view into the window and return the change
    /// points currently supported by the window: every ground-truth point
    /// visible (and not dropped) from at least one window view, jittered.
    pub fn observe(
        &self,
        view: &View,
        window: &mut DetectionWindow,
        noise: &OracleNoise,
    ) -> Vec<Vec3> {
        // Visibility of each change point from the new view, occluded by the
        // epoch scene the point actually belongs to.
        let mut visible_ids = Vec::new();
        let mut regions_seen = BTreeSet::new();
        for (ri, &(start, end)) in self.region_ranges.iter().enumerate() {
            for idx in start..end {
                let p = &self.points[idx as usize];
                let occluders = match p.epoch {
                    Epoch::T1 => &self.t1,
                    Epoch::T2 => &self.t2,
                };
                if visible_point(p.position, p.normal, view, occluders) {
                    visible_ids.push(idx);
                    regions_seen.insert(ri);
                }
            }
        }
        window.push(WindowEntry {
            view_id: view.id,
            visible: visible_ids,
            regions_seen,
        });

        // A point is supported if some window view saw it and did not drop it.
        let mut supported: Vec<bool> = vec![false; self.points.len()];
        for entry in &window.entries {
            for &idx in &entry.visible {
                if supported[idx as usize] {
                    continue;
                }
                if noise.dropout_prob > 0.0 {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                        noise.seed,
                        (entry.view_id as u64) << 32 | idx as u64,
                    ));
                    if rng.gen::<f64>() < noise.dropout_prob {
                        continue;
                    }
                }
                supported[idx as usize] = true;
            }
        }

        let mut out = Vec::new();
        for (idx, ok) in supported.iter().enumerate() {
            if !ok {
                continue;
            }
            let mut p = self.points[idx].position;
            if noise.jitter_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                    noise.seed ^ 0xa5a5_5a5a_dead_beef,
                    (view.id as u64) << 32 | idx as u64,
                ));
                p.x += noise.jitter_sigma * gaussian(&mut rng);
                p.y += noise.jitter_sigma * gaussian(&mut rng);
                p.z += noise.jitter_sigma * gaussian(&mut rng);
            }
            out.push(p);
        }
        out
    }
}

/// Standard normal via Box-Muller.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Cluster splitting
// ---------------------------------------------------------------------------

/// Single-linkage clustering with distance threshold `gap`; clusters are
/// ordered nearest-centroid-first relative to the drone position.
pub fn split_targets(points: &[Vec3], gap: f64, drone_position: Vec3) -> Vec<Vec<Vec3>> {
    assert!(gap > 0.0);
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let gap2 = gap * gap;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i] - points[j];
            if d.dot(d) <= gap2 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut clusters: Vec<Vec<Vec3>> = Vec::new();
    let mut cluster_of_root: std::collections::HashMap<usize, usize> =
        std::collections::HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let slot = *cluster_of_root.entry(root).or_insert_with(|| {
            clusters.push(Vec::new());
            clusters.len() - 1
        });
        clusters[slot].push(points[i]);
    }
    // Nearest change area first, plan-view distance to the drone.
    clusters.sort_by(|a, b| {
        let ca = centroid(a).xz().dist(drone_position.xz());
        let cb = centroid(b).xz().dist(drone_position.xz());
        ca.partial_cmp(&cb).unwrap()
    });
    clusters
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let mut c = crate::math::v3(0.0, 0.0, 0.0);
    for p in points {
        c = c + *p;
    }
    c * (1.0 / points.len() as f64)
}

// ---------------------------------------------------------------------------
// Change targets and the IoU merge rule
// ---------------------------------------------------------------------------

/// Accumulated detection: the point cloud, its hull prism, and the samples
/// the real-time planner must observe (all with q = 1).
#[derive(Debug, Clone)]
pub struct ChangeTarget {
    pub cloud: Vec<Vec3>,
    pub hull: HullPrism,
    pub target_samples: Vec<Sample>,
    pub explored: bool,
}

/// Outcome of merging new points into a (possibly absent) target.
#[derive(Debug, Clone)]
pub enum MergeOutcome {
    Target(ChangeTarget),
    /// Too few non-collinear points to form a hull; hold the cloud until
    /// more arrive.
    Pending(Vec<Vec3>),
}

impl ChangeTarget {
    pub fn from_cloud(cloud: Vec<Vec3>, spacing: f64) -> Result<ChangeTarget> {
        let hull = hull_prism_of(&cloud)?;
        let target_samples = sample_hull_surface(&hull, spacing);
        Ok(ChangeTarget {
            cloud,
            hull,
            target_samples,
            explored: false,
        })
    }
}

/// Merge newly detected points into the current target following the IoU
/// rule: hulls with IoU below `phi` are unioned, similar hulls replace the
/// cloud outright (`merge_always_union` ablates the replace branch).
pub fn merge_target(
    current: Option<&ChangeTarget>,
    new_points: &[Vec3],
    phi: f64,
    spacing: f64,
    merge_always_union: bool,
) -> MergeOutcome {
    assert!(!new_points.is_empty(), "merge_target requires points");
    assert!(phi > 0.0 && phi < 1.0);
    match current {
        None => match ChangeTarget::from_cloud(new_points.to_vec(), spacing) {
            Ok(t) => MergeOutcome::Target(t),
            Err(_) => MergeOutcome::Pending(new_points.to_vec()),
        },
        Some(cur) => {
            let union_cloud = || {
                let mut cloud = cur.cloud.clone();
                cloud.extend_from_slice(new_points);
                cloud
            };
            let cloud = match hull_prism_of(new_points) {
                // A degenerate update cannot be compared by IoU; grow the
                // cloud and move on.
                Err(_) => union_cloud(),
                Ok(new_hull) => {
                    let iou = iou_prism(&cur.hull, &new_hull);
                    if iou < phi || merge_always_union {
                        union_cloud()
                    } else {
                        new_points.to_vec()
                    }
                }
            };
            match ChangeTarget::from_cloud(cloud, spacing) {
                Ok(t) => MergeOutcome::Target(t),
                Err(_) => MergeOutcome::Pending(new_points.to_vec()),
            }
        }
    }
}

/// Discretize a hull prism's surface (top and walls; the top only for flat
/// hulls) into q = 1 samples for the real-time planner.
pub fn sample_hull_surface(hull: &HullPrism, spacing: f64) -> Vec<Sample> {
    let mut samples = Vec::new();
    let mut emit = |position: Vec3, normal: Vec3| {
        samples.push(Sample::new(position, normal, 1.0, SemanticLabel::Unclassified));
    };
    if hull.top_height - hull.base_height > GEOM_EPS {
        if let Ok(prism) = crate::scene::Prism::new(
            hull.footprint.clone(),
            hull.base_height.max(0.0),
            hull.top_height,
            SemanticLabel::Unclassified,
        ) {
            sample_prism_faces(&prism, spacing, &mut emit);
            return samples;
        }
    }
    // Flat hull: sample the polygon face only.
    let up = crate::math::v3(0.0, 1.0, 0.0);
    let y = hull.top_height;
    for v in &hull.footprint {
        emit(v.at_height(y), up);
    }
    let n = hull.footprint.len();
    for i in 0..n {
        let a = hull.footprint[i];
        let b = hull.footprint[(i + 1) % n];
        let m = (a.dist(b) / spacing).ceil().max(1.0) as usize;
        for j in 1..m {
            emit((a + (b - a) * (j as f64 / m as f64)).at_height(y), up);
        }
    }
    samples
}

/// Minimum distance between a point and any point of a cloud.
pub fn linkage_distance(point: Vec3, cloud: &[Vec3]) -> f64 {
    cloud
        .iter()
        .map(|c| point.dist(*c))
        .fold(f64::INFINITY, f64::min)
}

/// Plan-view footprint of `hull` dilated by `margin`, for re-detection
/// suppression tests.
pub fn dilated_footprint(hull: &HullPrism, margin: f64) -> Vec<Vec2> {
    crate::geometry::dilate_convex(&hull.footprint, margin).unwrap_or_else(|_| hull.footprint.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{v2, v3, Rect};
    use crate::scene::Prism;
    use crate::viewgen::RigSlot;

    fn square(cx: f64, cz: f64, half: f64) -> Vec<Vec2> {
        vec![
            v2(cx - half, cz - half),
            v2(cx + half, cz - half),
            v2(cx + half, cz + half),
            v2(cx - half, cz + half),
        ]
    }

    fn scene_with(prisms: Vec<Prism>) -> Scene {
        Scene::new(prisms, Rect::new(v2(0.0, 0.0), v2(200.0, 200.0))).unwrap()
    }

    fn nadir_at(id: u32, x: f64, z: f64) -> View {
        View::new(id, v3(x, 120.0, z), RigSlot::Nadir, &PlannerConfig::default())
    }

    #[test]
    fn identical_scenes_stay_silent() {
        let prism = Prism::new(square(60.0, 60.0, 15.0), 0.0, 20.0, SemanticLabel::BuildingLow)
            .unwrap();
        let scene = scene_with(vec![prism]);
        let oracle = ChangeOracle::new(&scene, &scene, 5.0).unwrap();
        let mut window = DetectionWindow::new();
        let pts = oracle.observe(&nadir_at(0, 60.0, 60.0), &mut window, &OracleNoise::NONE);
        assert!(pts.is_empty());
        assert_eq!(oracle.regions().len(), 0);
    }

    #[test]
    fn added_prism_fully_in_frustum_returns_roof_points() {
        let t1 = scene_with(Vec::new());
        let added =
            Prism::new(square(60.0, 60.0, 10.0), 0.0, 20.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = scene_with(vec![added.clone()]);
        let oracle = ChangeOracle::new(&t1, &t2, 5.0).unwrap();
        let mut window = DetectionWindow::new();
        let pts = oracle.observe(&nadir_at(0, 60.0, 60.0), &mut window, &OracleNoise::NONE);
        assert!(!pts.is_empty());
        // All roof corners present (visible from straight above).
        for corner in square(60.0, 60.0, 10.0) {
            assert!(
                pts.iter().any(|p| p.xz().dist(corner) < 1e-9 && (p.y - 20.0).abs() < 1e-9),
                "missing roof corner {corner:?}"
            );
        }
        // And nothing below the roof plane is returned for a pure nadir view
        // except wall tops (wall points at the roof height).
        assert!(pts.iter().all(|p| p.y >= -1e-9 && p.y <= 20.0 + 1e-9));
    }

    #[test]
    fn total_dropout_silences_oracle() {
        let t1 = scene_with(Vec::new());
        let added =
            Prism::new(square(60.0, 60.0, 10.0), 0.0, 20.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = scene_with(vec![added]);
        let oracle = ChangeOracle::new(&t1, &t2, 5.0).unwrap();
        let mut window = DetectionWindow::new();
        let noise = OracleNoise::new(1.0, 0.0, 5);
        let pts = oracle.observe(&nadir_at(0, 60.0, 60.0), &mut window, &noise);
        assert!(pts.is_empty());
    }

    #[test]
    fn oracle_is_deterministic() {
        let t1 = scene_with(Vec::new());
        let added =
            Prism::new(square(60.0, 60.0, 10.0), 0.0, 20.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = scene_with(vec![added]);
        let oracle = ChangeOracle::new(&t1, &t2, 5.0).unwrap();
        let noise = OracleNoise::new(0.3, 0.4, 17);
        let run = || {
            let mut window = DetectionWindow::new();
            let mut all = Vec::new();
            for (i, (x, z)) in [(50.0, 50.0), (60.0, 60.0), (70.0, 70.0)].iter().enumerate() {
                all.extend(oracle.observe(&nadir_at(i as u32, *x, *z), &mut window, &noise));
            }
            all
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn window_caps_at_eight() {
        let t1 = scene_with(Vec::new());
        let added =
            Prism::new(square(60.0, 60.0, 10.0), 0.0, 20.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = scene_with(vec![added]);
        let oracle = ChangeOracle::new(&t1, &t2, 5.0).unwrap();
        let mut window = DetectionWindow::new();
        for i in 0..12 {
            oracle.observe(&nadir_at(i, 60.0, 60.0), &mut window, &OracleNoise::NONE);
        }
        assert_eq!(window.len(), WINDOW_CAPACITY);
        assert_eq!(window.view_ids(), (4..12).collect::<Vec<u32>>());
    }

    #[test]
    fn split_orders_by_distance() {
        let near: Vec<Vec3> = (0..5).map(|i| v3(100.0 + i as f64, 0.0, 100.0)).collect();
        let far: Vec<Vec3> = (0..5).map(|i| v3(10.0 + i as f64, 0.0, 10.0)).collect();
        let mut pts = far.clone();
        pts.extend(near.clone());
        let clusters = split_targets(&pts, 30.0, v3(100.0, 120.0, 100.0));
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].len(), near.len());
        assert!(clusters[0][0].xz().dist(v2(100.0, 100.0)) < 10.0);
    }

    #[test]
    fn split_handles_empty_and_single() {
        assert!(split_targets(&[], 10.0, v3(0.0, 0.0, 0.0)).is_empty());
        let one = split_targets(&[v3(1.0, 2.0, 3.0)], 10.0, v3(0.0, 0.0, 0.0));
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn merge_initializes_then_follows_iou_rule() {
        let spacing = 2.0;
        let box_a: Vec<Vec3> = square(10.0, 10.0, 5.0)
            .iter()
            .flat_map(|c| [c.at_height(0.0), c.at_height(8.0)])
            .collect();
        let target = match merge_target(None, &box_a, 0.3, spacing, false) {
            MergeOutcome::Target(t) => t,
            MergeOutcome::Pending(_) => panic!("box cloud must form a target"),
        };
        assert!(target.target_samples.iter().all(|s| s.q == 1.0));

        // Identical new cloud: IoU = 1 >= phi, replace branch.
        let merged = merge_target(Some(&target), &box_a, 0.3, spacing, false);
        let t2 = match merged {
            MergeOutcome::Target(t) => t,
            _ => panic!(),
        };
        assert_eq!(t2.cloud.len(), box_a.len());

        // Disjoint cloud: IoU = 0 < phi, union branch grows the hull.
        let box_b: Vec<Vec3> = square(40.0, 10.0, 5.0)
            .iter()
            .flat_map(|c| [c.at_height(0.0), c.at_height(8.0)])
            .collect();
        let grown = match merge_target(Some(&target), &box_b, 0.3, spacing, false) {
            MergeOutcome::Target(t) => t,
            _ => panic!(),
        };
        assert_eq!(grown.cloud.len(), box_a.len() + box_b.len());
        assert!(grown.hull.contains_prism(&target.hull, 1e-9));
    }

    #[test]
    fn degenerate_points_held_pending() {
        let line: Vec<Vec3> = (0..5).map(|i| v3(i as f64, 0.0, 0.0)).collect();
        match merge_target(None, &line, 0.3, 2.0, false) {
            MergeOutcome::Pending(p) => assert_eq!(p.len(), 5),
            MergeOutcome::Target(_) => panic!("collinear cloud must stay pending"),
        }
    }

    #[test]
    fn target_samples_lie_on_hull() {
        let cloud: Vec<Vec3> = square(10.0, 10.0, 5.0)
            .iter()
            .flat_map(|c| [c.at_height(0.0), c.at_height(8.0)])
            .collect();
        let t = ChangeTarget::from_cloud(cloud, 2.0).unwrap();
        for s in &t.target_samples {
            assert!(t.hull.contains_point(s.position, 1e-6));
        }
    }
}
