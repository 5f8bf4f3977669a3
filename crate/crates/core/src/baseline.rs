//! Region-Division baseline: a predefined boustrophedon sweep over grid
//! cells, four tilted views per cell, with the same detection and merge
//! pipeline as the planner but no next-best-view logic.

use crate::config::{ConfigFile, PlannerConfig};
use crate::error::Result;
use crate::geometry::{point_in_convex, HullPrism};
use crate::math::{v2, Vec3};
use crate::metrics::match_targets;
use crate::oracle::{
    dilated_footprint, linkage_distance, merge_target, split_targets, ChangeOracle, ChangeTarget,
    DetectionWindow, MergeOutcome, OracleNoise,
};
use crate::prior::Trajectory;
use crate::realtime::{MissionResult, StepMode, StepRecord, TargetRecord, ViewRecord};
use crate::scene::Scene;
use crate::viewgen::{RigSlot, View};

/// Grid sweep change detection over the scene bounds. `grid_frac` scales the
/// cell side relative to the region size (the smaller bounds extent), e.g.
/// 1/2 or 1/3.
pub fn baseline_rd(
    t1: &Scene,
    t2: &Scene,
    grid_frac: f64,
    cfg: &PlannerConfig,
    noise: &OracleNoise,
    seed: u64,
) -> Result<MissionResult> {
    assert!(grid_frac > 0.0 && grid_frac <= 1.0);
    cfg.validate()?;
    let oracle = ChangeOracle::new(t1, t2, cfg.realtime_spacing_m)?;
    let bounds = t1.bounds;
    let epsilon = bounds.width().min(bounds.depth());
    let cell = grid_frac * epsilon;
    let cols = (bounds.width() / cell).ceil().max(1.0) as usize;
    let rows = (bounds.depth() / cell).ceil().max(1.0) as usize;
    let cell_w = bounds.width() / cols as f64;
    let cell_d = bounds.depth() / rows as f64;

    // Boustrophedon over cell centers.
    let mut centers = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let z = bounds.min.z + (r as f64 + 0.5) * cell_d;
        let xs: Vec<f64> = (0..cols)
            .map(|c| bounds.min.x + (c as f64 + 0.5) * cell_w)
            .collect();
        if r % 2 == 0 {
            centers.extend(xs.iter().map(|&x| v2(x, z)));
        } else {
            centers.extend(xs.iter().rev().map(|&x| v2(x, z)));
        }
    }

    let mut window = DetectionWindow::new();
    let mut tracker = TargetTracker::new(cfg);
    let mut views: Vec<ViewRecord> = Vec::new();
    let mut visited: Vec<View> = Vec::new();
    let mut steps = Vec::new();
    let mut id = 0u32;
    for center in centers {
        for slot in [RigSlot::PlusX, RigSlot::MinusX, RigSlot::PlusZ, RigSlot::MinusZ] {
            let view = View::new(id, center.at_height(cfg.h), slot, cfg);
            id += 1;
            let points = oracle.observe(&view, &mut window, noise);
            tracker.integrate(points, view.position);
            steps.push(StepRecord {
                step_index: steps.len(),
                view_id: view.id,
                mode: StepMode::Prior,
                gain: None,
                candidates_considered: 0,
                wall_time_s: 0.0,
            });
            views.push(ViewRecord::of_parts(&view));
            visited.push(view);
        }
    }

    let (finished, mut warnings) = tracker.close();
    let gt_hulls: Vec<HullPrism> = oracle
        .regions()
        .iter()
        .map(|r| HullPrism {
            footprint: r.prism.footprint.clone(),
            base_height: r.prism.base_height,
            top_height: r.prism.top_height,
        })
        .collect();
    let detected: Vec<HullPrism> = finished.iter().map(|t| t.hull.clone()).collect();
    let matches = match_targets(&detected, &gt_hulls);
    let targets: Vec<TargetRecord> = finished
        .iter()
        .zip(&matches)
        .map(|(t, (gt_region, gt_iou))| TargetRecord {
            hull: t.hull.clone(),
            cloud_points: t.cloud.len(),
            target_samples: t.target_samples.len(),
            exhausted: false,
            gt_region: *gt_region,
            gt_iou: *gt_iou,
        })
        .collect();

    let order: Vec<u32> = visited.iter().map(|v| v.id).collect();
    let position_of = |vid: u32| visited.iter().find(|v| v.id == vid).unwrap().position;
    let trajectory = Trajectory::from_order(order, position_of);
    warnings.reverse();
    Ok(MissionResult {
        seed,
        config: ConfigFile::from_config(cfg),
        prior_trajectory: trajectory.clone(),
        trajectory,
        views,
        targets,
        steps,
        warnings,
    })
}

impl ViewRecord {
    pub(crate) fn of_parts(view: &View) -> ViewRecord {
        ViewRecord {
            id: view.id,
            position: view.position,
            orientation: view.orientation,
            rig_slot: view.rig_slot,
        }
    }
}

/// Accumulates detections into targets with the IoU merge rule, without any
/// exploration logic.
struct TargetTracker<'a> {
    cfg: &'a PlannerConfig,
    open: Vec<ChangeTarget>,
    pending: Vec<Vec<Vec3>>,
}

impl<'a> TargetTracker<'a> {
    fn new(cfg: &'a PlannerConfig) -> TargetTracker<'a> {
        TargetTracker {
            cfg,
            open: Vec::new(),
            pending: Vec::new(),
        }
    }

    fn integrate(&mut self, points: Vec<Vec3>, drone: Vec3) {
        if points.is_empty() {
            return;
        }
        let clusters = split_targets(&points, self.cfg.cluster_gap_m, drone);
        'clusters: for cluster in clusters {
            for target in &mut self.open {
                let fence = dilated_footprint(&target.hull, self.cfg.cluster_gap_m);
                if cluster.iter().any(|p| point_in_convex(&fence, p.xz(), 0.0)) {
                    if let MergeOutcome::Target(t) = merge_target(
                        Some(target),
                        &cluster,
                        self.cfg.phi,
                        self.cfg.realtime_spacing_m,
                        self.cfg.merge_always_union,
                    ) {
                        *target = t;
                    }
                    continue 'clusters;
                }
            }
            for pending in &mut self.pending {
                let near = cluster
                    .iter()
                    .any(|p| linkage_distance(*p, pending) <= self.cfg.cluster_gap_m);
                if near {
                    pending.extend(cluster);
                    continue 'clusters;
                }
            }
            self.pending.push(cluster);
        }
        // Promote pendings that have become hullable.
        let mut still_pending = Vec::new();
        for cloud in self.pending.drain(..) {
            match merge_target(
                None,
                &cloud,
                self.cfg.phi,
                self.cfg.realtime_spacing_m,
                self.cfg.merge_always_union,
            ) {
                MergeOutcome::Target(t) => self.open.push(t),
                MergeOutcome::Pending(c) => still_pending.push(c),
            }
        }
        self.pending = still_pending;
    }

    fn close(mut self) -> (Vec<ChangeTarget>, Vec<String>) {
        let mut warnings = Vec::new();
        if !self.pending.is_empty() {
            warnings.push(format!(
                "{} pending detection cluster(s) stayed degenerate and were dropped",
                self.pending.len()
            ));
        }
        for t in &mut self.open {
            t.explored = true;
        }
        (self.open, warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rect;
    use crate::scene::{Prism, SemanticLabel};

    fn square(cx: f64, cz: f64, half: f64) -> Vec<crate::math::Vec2> {
        vec![
            v2(cx - half, cz - half),
            v2(cx + half, cz - half),
            v2(cx + half, cz + half),
            v2(cx - half, cz + half),
        ]
    }

    #[test]
    fn sweep_covers_every_cell_once() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(120.0, 120.0));
        let scene = Scene::new(Vec::new(), bounds).unwrap();
        let cfg = PlannerConfig::default();
        let result =
            baseline_rd(&scene, &scene, 0.5, &cfg, &OracleNoise::NONE, 0).unwrap();
        // 2x2 cells, 4 views each.
        assert_eq!(result.views.len(), 16);
        assert!(result.targets.is_empty());
        // Four distinct positions.
        let mut positions: Vec<(u64, u64)> = result
            .views
            .iter()
            .map(|v| (v.position.x.to_bits(), v.position.z.to_bits()))
            .collect();
        positions.sort_unstable();
        positions.dedup();
        assert_eq!(positions.len(), 4);
    }

    #[test]
    fn finer_grid_means_more_views_and_longer_path() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(150.0, 150.0));
        let scene = Scene::new(Vec::new(), bounds).unwrap();
        let cfg = PlannerConfig::default();
        let coarse = baseline_rd(&scene, &scene, 0.5, &cfg, &OracleNoise::NONE, 0).unwrap();
        let fine = baseline_rd(&scene, &scene, 1.0 / 3.0, &cfg, &OracleNoise::NONE, 0).unwrap();
        assert!(fine.views.len() > coarse.views.len());
        assert!(fine.trajectory.length_m > coarse.trajectory.length_m);
    }

    #[test]
    fn baseline_detects_planted_change() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(150.0, 150.0));
        let t1 = Scene::new(Vec::new(), bounds).unwrap();
        let added =
            Prism::new(square(75.0, 75.0, 12.0), 0.0, 18.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = Scene::new(vec![added], bounds).unwrap();
        let cfg = PlannerConfig::default();
        let result = baseline_rd(&t1, &t2, 1.0 / 3.0, &cfg, &OracleNoise::NONE, 0).unwrap();
        assert_eq!(result.targets.len(), 1);
        assert!(result.targets[0].gt_iou > 0.5, "IoU {}", result.targets[0].gt_iou);
    }
}
