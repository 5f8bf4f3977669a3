//! The online planning loop: follow the prior path, detect change areas,
//! explore each one with next-best-view selection, and resume the remaining
//! prior views when every known target is finished.
//!
//! One mission is one logical thread of control. The only parallel region is
//! the gain-evaluation pass over the candidate pool, which runs against an
//! immutable snapshot and reduces deterministically (stable ordering by view
//! id).

use crate::changeability::{ScoreParams, VisTable};
use crate::config::{ConfigFile, PlannerConfig};
use crate::error::{Error, Result};
use crate::geometry::{iou_prism, point_in_convex, HullPrism};
use crate::math::{mix_seed, Vec2, Vec3};
use crate::metrics::match_targets;
use crate::oracle::{
    dilated_footprint, merge_target, split_targets, ChangeOracle, ChangeTarget, DetectionWindow,
    MergeOutcome, OracleNoise,
};
use crate::prior::{plan_prior, tsp_tour, Trajectory};
use crate::scene::{Sample, Scene};
use crate::viewgen::{generate_candidates, RigSlot, View};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::time::Instant;

/// Safety valve: a single target may not consume more views than this.
/// Under heavy jitter the replace branch can keep reshaping the hull; the
/// cap turns a pathological loop into an exhaustion-closed target.
const MAX_VIEWS_PER_TARGET: usize = 128;

/// Seed streams fanned out from the mission seed.
const STREAM_REALTIME_VIEWS: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepMode {
    /// Following or resuming the prior path.
    Prior,
    /// Exploring an active change target via next-best-view.
    Explore,
}

/// Per-step bookkeeping. Wall time covers planner decision time only
/// (oracle time excluded) and is not serialized, keeping results files
/// byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub view_id: u32,
    pub mode: StepMode,
    pub gain: Option<f64>,
    pub candidates_considered: usize,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// A finished change target as serialized into results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub hull: HullPrism,
    pub cloud_points: usize,
    pub target_samples: usize,
    /// Closed because the candidate pool emptied before full observation.
    pub exhausted: bool,
    /// Matched ground-truth region index, if any.
    pub gt_region: Option<usize>,
    /// IoU against the matched region (0 when unmatched).
    pub gt_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub id: u32,
    pub position: Vec3,
    pub orientation: Vec3,
    pub rig_slot: RigSlot,
}

impl ViewRecord {
    fn of(view: &View) -> ViewRecord {
        ViewRecord {
            id: view.id,
            position: view.position,
            orientation: view.orientation,
            rig_slot: view.rig_slot,
        }
    }
}

/// Everything a mission produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionResult {
    pub seed: u64,
    pub config: ConfigFile,
    pub prior_trajectory: Trajectory,
    pub trajectory: Trajectory,
    pub views: Vec<ViewRecord>,
    pub targets: Vec<TargetRecord>,
    pub steps: Vec<StepRecord>,
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// Pure selection helpers (also exercised directly by the oracle tests)
// ---------------------------------------------------------------------------

/// Top-K by gain (ties to the lower id), then nearest to the current
/// position (ties to the lower id).
pub fn select_top_k_nearest(
    candidates: &[(u32, f64, Vec3)],
    k: usize,
    current: Vec3,
) -> Option<u32> {
    if candidates.is_empty() {
        return None;
    }
    let mut by_gain: Vec<&(u32, f64, Vec3)> = candidates.iter().collect();
    by_gain.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let top = &by_gain[..k.min(by_gain.len())];
    top.iter()
        .min_by(|a, b| {
            a.2.dist(current)
                .partial_cmp(&b.2.dist(current))
                .unwrap()
                .then(a.0.cmp(&b.0))
        })
        .map(|c| c.0)
}

/// Next-best view over an explicit pool: evaluates the cumulative
/// changeability gain of every candidate in parallel, then applies the
/// top-K/nearest rule. Returns (view id, gain, pool size).
pub fn next_best_view(
    pool: &[View],
    visited: &[View],
    samples: &[Sample],
    scene: &Scene,
    params: &ScoreParams,
    k: usize,
    current: Vec3,
) -> Result<(u32, f64, usize)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    assert!(k >= 1);
    // The visited-view term of the cumulative gain is candidate-independent.
    let mut penalty = 0.0;
    for s in samples {
        for v in visited {
            if crate::geometry::visible(s, v, scene) {
                penalty -= params.gamma;
            }
        }
    }
    let gains: Vec<(u32, f64, Vec3)> = pool
        .par_iter()
        .map(|cand| {
            let own: f64 = samples
                .iter()
                .filter(|s| crate::geometry::visible(s, cand, scene))
                .map(|s| params.omega * s.q)
                .sum();
            (cand.id, own + penalty, cand.position)
        })
        .collect();
    let chosen = select_top_k_nearest(&gains, k, current).expect("pool is non-empty");
    let gain = gains.iter().find(|g| g.0 == chosen).unwrap().1;
    Ok((chosen, gain, pool.len()))
}

/// Whether every target sample has been observed by some visited view.
pub fn target_complete(target: &ChangeTarget, visited: &[View], scene: &Scene) -> bool {
    target
        .target_samples
        .iter()
        .all(|s| visited.iter().any(|v| crate::geometry::visible(s, v, scene)))
}

// ---------------------------------------------------------------------------
// Mission runner
// ---------------------------------------------------------------------------

struct ActiveTarget {
    target: ChangeTarget,
    serial: usize,
    hull_version: usize,
    rt_views: HashMap<u32, View>,
    /// Hull the real-time views were generated for.
    views_hull: HullPrism,
    /// Per target sample: observed by some visited view.
    seen: Vec<bool>,
    /// Visibility over target samples, per view id, for the current hull
    /// version.
    masks: HashMap<u32, Box<[bool]>>,
    /// Sum over visited views of target samples they observe.
    visited_popcount: usize,
    views_spent: usize,
}

struct FinishedTarget {
    target: ChangeTarget,
    exhausted: bool,
    suppression_footprint: Vec<Vec2>,
}

struct PendingCloud {
    cloud: Vec<Vec3>,
}

struct Runner<'a> {
    cfg: &'a PlannerConfig,
    params: ScoreParams,
    scene: &'a Scene,
    oracle: &'a ChangeOracle,
    noise: OracleNoise,
    seed: u64,

    samples: Vec<Sample>,
    qs: Vec<f64>,
    vis: VisTable,
    sample_seen: Vec<bool>,

    route: VecDeque<u32>,
    prior_views: HashMap<u32, View>,
    visited: Vec<View>,
    visited_prior_popcount: usize,

    window: DetectionWindow,
    active: Option<ActiveTarget>,
    queue: Vec<PendingCloud>,
    finished: Vec<FinishedTarget>,

    next_view_id: u32,
    next_target_serial: usize,
    steps: Vec<StepRecord>,
    warnings: Vec<String>,
}

struct Selection {
    view: View,
    mode: StepMode,
    gain: Option<f64>,
    considered: usize,
    wall_time_s: f64,
}

impl<'a> Runner<'a> {
    fn current_position(&self) -> Vec3 {
        self.visited
            .last()
            .map(|v| v.position)
            .unwrap_or_else(|| self.scene.bounds.min.at_height(self.cfg.h))
    }

    fn ensure_prior_masks(&mut self, views: &[&View]) {
        self.vis.ensure(views, &self.samples, self.scene);
    }

    /// Visit a selected view: bookkeeping over prior and target samples.
    fn visit(&mut self, sel: Selection) {
        let view = sel.view.clone();
        self.ensure_prior_masks(&[&view]);
        let mask = self.vis.mask(view.id);
        let mut popcount = 0usize;
        for (i, &seen) in mask.iter().enumerate() {
            if seen {
                popcount += 1;
                self.sample_seen[i] = true;
                self.samples[i].observers.insert(view.id);
            }
        }
        self.visited_prior_popcount += popcount;

        if let Some(active) = &mut self.active {
            let mask = active
                .masks
                .entry(view.id)
                .or_insert_with(|| compute_target_mask(&view, &active.target, self.scene));
            for (i, &seen) in mask.iter().enumerate() {
                if seen {
                    active.seen[i] = true;
                    active.target.target_samples[i].observers.insert(view.id);
                    active.visited_popcount += 1;
                }
            }
            active.views_spent += 1;
        }

        self.steps.push(StepRecord {
            step_index: self.steps.len(),
            view_id: view.id,
            mode: sel.mode,
            gain: sel.gain,
            candidates_considered: sel.considered,
            wall_time_s: sel.wall_time_s,
        });
        self.visited.push(view);
    }

    /// Feed the oracle for the just-visited view and integrate detections.
    fn detect(&mut self, view: &View) {
        let points = self.oracle.observe(view, &mut self.window, &self.noise);
        if points.is_empty() {
            return;
        }
        let points = self.suppress_finished(points);
        if points.is_empty() {
            return;
        }
        let clusters = split_targets(&points, self.cfg.cluster_gap_m, view.position);
        for cluster in clusters {
            self.integrate_cluster(cluster);
        }
    }

    /// Drop points that re-detect already finished targets.
    fn suppress_finished(&self, points: Vec<Vec3>) -> Vec<Vec3> {
        if self.finished.is_empty() {
            return points;
        }
        points
            .into_iter()
            .filter(|p| {
                !self.finished.iter().any(|f| {
                    point_in_convex(&f.suppression_footprint, p.xz(), 0.0)
                })
            })
            .collect()
    }

    fn integrate_cluster(&mut self, cluster: Vec<Vec3>) {
        // Belongs to the active target?
        if let Some(active) = &self.active {
            let fence = dilated_footprint(&active.target.hull, self.cfg.cluster_gap_m);
            if cluster.iter().any(|p| point_in_convex(&fence, p.xz(), 0.0)) {
                let outcome = merge_target(
                    Some(&active.target),
                    &cluster,
                    self.cfg.phi,
                    self.cfg.realtime_spacing_m,
                    self.cfg.merge_always_union,
                );
                if let MergeOutcome::Target(t) = outcome {
                    self.update_active_target(t);
                }
                return;
            }
        }
        // Belongs to a queued pending cloud?
        for pending in &mut self.queue {
            let near = cluster.iter().any(|p| {
                crate::oracle::linkage_distance(*p, &pending.cloud) <= self.cfg.cluster_gap_m
            });
            if near {
                pending.cloud.extend(cluster);
                return;
            }
        }
        self.queue.push(PendingCloud { cloud: cluster });
    }

    /// Swap in an updated target (grown or replaced cloud), regenerating
    /// real-time views when the hull drifted and recomputing sample
    /// observation retroactively over all visited views.
    fn update_active_target(&mut self, target: ChangeTarget) {
        let cfg = self.cfg;
        let scene = self.scene;
        let visited = self.visited.clone();
        let active = self.active.as_mut().expect("active target");
        let hull_changed = iou_prism(&target.hull, &active.target.hull) < 1.0 - 1e-12;
        active.target = target;
        if !hull_changed {
            return;
        }
        active.hull_version += 1;

        if iou_prism(&active.target.hull, &active.views_hull) < cfg.hull_regen_iou {
            let seed = mix_seed(
                mix_seed(self.seed, STREAM_REALTIME_VIEWS),
                (active.serial as u64) << 16 | active.hull_version as u64,
            );
            match generate_candidates(
                &active.target.hull.footprint,
                cfg,
                cfg.realtime_radius_m,
                seed,
                self.next_view_id,
            ) {
                Ok(views) => {
                    self.next_view_id += views.len() as u32;
                    active.rt_views = views.into_iter().map(|v| (v.id, v)).collect();
                    active.views_hull = active.target.hull.clone();
                }
                Err(_) => {
                    // Degenerate hull footprint; keep the previous view set.
                }
            }
        }

        // Hull changed, so the sample set changed: rebuild masks and seen
        // flags from every visited view.
        active.masks.clear();
        active.seen = vec![false; active.target.target_samples.len()];
        active.visited_popcount = 0;
        for view in &visited {
            let mask = compute_target_mask(view, &active.target, scene);
            for (i, &seen) in mask.iter().enumerate() {
                if seen {
                    if !active.seen[i] {
                        active.seen[i] = true;
                    }
                    active.target.target_samples[i].observers.insert(view.id);
                    active.visited_popcount += 1;
                }
            }
            active.masks.insert(view.id, mask);
        }
    }

    /// Activate the nearest pending cloud that can form a hull.
    fn activate_from_queue(&mut self) {
        if self.active.is_some() || self.queue.is_empty() {
            return;
        }
        let current = self.current_position();
        // Nearest centroid first, re-evaluated now.
        let mut order: Vec<usize> = (0..self.queue.len()).collect();
        order.sort_by(|&a, &b| {
            let ca = cloud_centroid(&self.queue[a].cloud).xz().dist(current.xz());
            let cb = cloud_centroid(&self.queue[b].cloud).xz().dist(current.xz());
            ca.partial_cmp(&cb).unwrap()
        });
        for idx in order {
            let outcome = merge_target(
                None,
                &self.queue[idx].cloud,
                self.cfg.phi,
                self.cfg.realtime_spacing_m,
                self.cfg.merge_always_union,
            );
            if let MergeOutcome::Target(target) = outcome {
                self.queue.remove(idx);
                self.start_target(target);
                return;
            }
        }
    }

    fn start_target(&mut self, target: ChangeTarget) {
        let serial = self.next_target_serial;
        self.next_target_serial += 1;
        let seed = mix_seed(
            mix_seed(self.seed, STREAM_REALTIME_VIEWS),
            (serial as u64) << 16,
        );
        let rt_views = match generate_candidates(
            &target.hull.footprint,
            self.cfg,
            self.cfg.realtime_radius_m,
            seed,
            self.next_view_id,
        ) {
            Ok(views) => {
                self.next_view_id += views.len() as u32;
                views
            }
            Err(_) => Vec::new(),
        };
        let mut active = ActiveTarget {
            views_hull: target.hull.clone(),
            seen: vec![false; target.target_samples.len()],
            masks: HashMap::new(),
            visited_popcount: 0,
            rt_views: rt_views.into_iter().map(|v| (v.id, v)).collect(),
            target,
            serial,
            hull_version: 0,
            views_spent: 0,
        };
        // Samples may already be observed by earlier visited views.
        for view in &self.visited {
            let mask = compute_target_mask(view, &active.target, self.scene);
            for (i, &seen) in mask.iter().enumerate() {
                if seen {
                    active.seen[i] = true;
                    active.target.target_samples[i].observers.insert(view.id);
                    active.visited_popcount += 1;
                }
            }
            active.masks.insert(view.id, mask);
        }
        self.active = Some(active);
    }

    /// Candidate pool for the active target: unvisited prior views plus the
    /// target's real-time views, filtered to those observing at least one
    /// unobserved target sample.
    fn candidate_pool(&mut self) -> Vec<View> {
        let active = self.active.as_ref().expect("pool needs an active target");
        let mut pool: Vec<View> = self
            .prior_views
            .values()
            .chain(active.rt_views.values())
            .cloned()
            .collect();
        pool.sort_by_key(|v| v.id);

        // Make sure masks exist (in parallel) before filtering.
        let missing: Vec<View> = pool
            .iter()
            .filter(|v| !active.masks.contains_key(&v.id))
            .cloned()
            .collect();
        let scene = self.scene;
        let target = &active.target;
        let computed: Vec<(u32, Box<[bool]>)> = missing
            .par_iter()
            .map(|v| (v.id, compute_target_mask(v, target, scene)))
            .collect();
        let active = self.active.as_mut().unwrap();
        for (id, mask) in computed {
            active.masks.insert(id, mask);
        }

        let active = self.active.as_ref().unwrap();
        pool.retain(|v| {
            let mask = &active.masks[&v.id];
            mask.iter()
                .zip(&active.seen)
                .any(|(&vis, &seen)| vis && !seen)
        });
        pool
    }

    /// Gain-based selection over the pool (mask-accelerated equivalent of
    /// [`next_best_view`]).
    fn nbv(&mut self, pool: &[View]) -> (View, f64, usize) {
        let refs: Vec<&View> = pool.iter().collect();
        self.ensure_prior_masks(&refs);
        let active = self.active.as_ref().expect("active target");
        // Candidate-independent visited penalty over prior + target samples.
        let penalty = -self.params.gamma
            * (self.visited_prior_popcount + active.visited_popcount) as f64;
        let vis = &self.vis;
        let qs = &self.qs;
        let params = &self.params;
        let gains: Vec<(u32, f64, Vec3)> = pool
            .par_iter()
            .map(|cand| {
                let prior_mask = vis.mask(cand.id);
                let mut own = 0.0;
                for (i, &seen) in prior_mask.iter().enumerate() {
                    if seen {
                        own += params.omega * qs[i];
                    }
                }
                let tgt_mask = &active.masks[&cand.id];
                own += params.omega * tgt_mask.iter().filter(|&&m| m).count() as f64;
                (cand.id, own + penalty, cand.position)
            })
            .collect();
        let current = self.current_position();
        let chosen = select_top_k_nearest(&gains, self.cfg.k, current).expect("non-empty pool");
        let gain = gains.iter().find(|g| g.0 == chosen).unwrap().1;
        let view = pool.iter().find(|v| v.id == chosen).unwrap().clone();
        (view, gain, pool.len())
    }

    fn finish_active(&mut self, exhausted: bool) {
        let mut active = self.active.take().expect("active target");
        active.target.explored = true;
        if exhausted {
            self.warnings.push(format!(
                "target {} closed with {} of {} samples unobserved (pool exhausted)",
                active.serial,
                active.seen.iter().filter(|&&s| !s).count(),
                active.seen.len()
            ));
        }
        let suppression_footprint =
            dilated_footprint(&active.target.hull, self.cfg.cluster_gap_m);
        self.finished.push(FinishedTarget {
            target: active.target,
            exhausted,
            suppression_footprint,
        });
    }

    /// After a detour, reconnect the remaining informative prior views into
    /// a fresh tour starting near the drone.
    fn reroute_prior(&mut self) {
        if self.route.len() < 2 {
            return;
        }
        let route_ids: Vec<u32> = self.route.iter().copied().collect();
        let views: Vec<View> = route_ids
            .iter()
            .map(|id| self.prior_views[id].clone())
            .collect();
        let refs: Vec<&View> = views.iter().collect();
        self.ensure_prior_masks(&refs);
        // Keep only views that still observe an unseen sample.
        let informative: Vec<View> = views
            .into_iter()
            .filter(|v| {
                self.vis
                    .mask(v.id)
                    .iter()
                    .zip(&self.sample_seen)
                    .any(|(&vis, &seen)| vis && !seen)
            })
            .collect();
        for id in &route_ids {
            if !informative.iter().any(|v| v.id == *id) {
                self.prior_views.remove(id);
            }
        }
        if informative.is_empty() {
            self.route.clear();
            return;
        }
        if informative.len() == 1 {
            self.route = informative.iter().map(|v| v.id).collect();
            return;
        }
        let current = self.current_position();
        let start = informative
            .iter()
            .min_by(|a, b| {
                a.position
                    .dist(current)
                    .partial_cmp(&b.position.dist(current))
                    .unwrap()
                    .then(a.id.cmp(&b.id))
            })
            .unwrap()
            .id;
        let tour = tsp_tour(&informative, start);
        self.route = tour.ordered_views.into_iter().collect();
    }

    /// Pop prior-route views until one still observes an unseen sample.
    fn resume_prior(&mut self) -> Option<View> {
        while let Some(id) = self.route.pop_front() {
            let view = self
                .prior_views
                .remove(&id)
                .expect("route ids track prior_views");
            self.ensure_prior_masks(&[&view]);
            let informative = self
                .vis
                .mask(view.id)
                .iter()
                .zip(&self.sample_seen)
                .any(|(&vis, &seen)| vis && !seen);
            if informative {
                return Some(view);
            }
        }
        None
    }

    /// Decide the next view, finishing / activating targets as needed.
    fn select_next(&mut self) -> Option<Selection> {
        loop {
            if self.active.is_none() {
                self.activate_from_queue();
            }
            if self.active.is_some() {
                let started = Instant::now();
                let budget_spent =
                    self.active.as_ref().unwrap().views_spent >= MAX_VIEWS_PER_TARGET;
                let pool = if budget_spent {
                    Vec::new()
                } else {
                    self.candidate_pool()
                };
                if pool.is_empty() {
                    let complete = self.active.as_ref().unwrap().seen.iter().all(|&s| s);
                    self.finish_active(!complete);
                    self.reroute_prior();
                    continue;
                }
                let (view, gain, considered) = self.nbv(&pool);
                let wall_time_s = started.elapsed().as_secs_f64();
                // Remove the chosen view from its source.
                if self.prior_views.remove(&view.id).is_some() {
                    self.route.retain(|&id| id != view.id);
                } else if let Some(active) = &mut self.active {
                    active.rt_views.remove(&view.id);
                }
                return Some(Selection {
                    view,
                    mode: StepMode::Explore,
                    gain: Some(gain),
                    considered,
                    wall_time_s,
                });
            }
            let started = Instant::now();
            let view = self.resume_prior()?;
            let wall_time_s = started.elapsed().as_secs_f64();
            return Some(Selection {
                view,
                mode: StepMode::Prior,
                gain: None,
                considered: 0,
                wall_time_s,
            });
        }
    }
}

fn compute_target_mask(view: &View, target: &ChangeTarget, scene: &Scene) -> Box<[bool]> {
    target
        .target_samples
        .iter()
        .map(|s| crate::geometry::visible(s, view, scene))
        .collect::<Vec<bool>>()
        .into_boxed_slice()
}

fn cloud_centroid(cloud: &[Vec3]) -> Vec3 {
    let mut c = crate::math::v3(0.0, 0.0, 0.0);
    for p in cloud {
        c = c + *p;
    }
    c * (1.0 / cloud.len().max(1) as f64)
}

/// Execute a full mission over a T1/T2 scene pair.
pub fn run_mission(
    t1: &Scene,
    t2: &Scene,
    cfg: &PlannerConfig,
    noise: &OracleNoise,
    seed: u64,
) -> Result<MissionResult> {
    let plan = plan_prior(t1, cfg, seed)?;
    let oracle = ChangeOracle::new(t1, t2, cfg.realtime_spacing_m)?;
    run_mission_with_plan(t1, &oracle, plan, cfg, noise, seed)
}

/// Mission loop starting from an existing prior plan (lets callers plan once
/// and run several noise seeds).
pub fn run_mission_with_plan(
    t1: &Scene,
    oracle: &ChangeOracle,
    plan: crate::prior::PriorPlan,
    cfg: &PlannerConfig,
    noise: &OracleNoise,
    seed: u64,
) -> Result<MissionResult> {
    let mut warnings = Vec::new();
    if !plan.uncoverable_samples.is_empty() {
        warnings.push(format!(
            "{} samples are visible from no candidate view and were excluded from coverage",
            plan.uncoverable_samples.len()
        ));
    }
    let qs: Vec<f64> = plan.samples.iter().map(|s| s.q).collect();
    let next_view_id = plan
        .views
        .iter()
        .map(|v| v.id + 1)
        .max()
        .unwrap_or(0)
        .max(plan.candidates_generated as u32);

    let mut runner = Runner {
        cfg,
        params: ScoreParams::from_config(cfg),
        scene: t1,
        oracle,
        noise: *noise,
        seed,
        sample_seen: vec![false; plan.samples.len()],
        samples: plan.samples,
        qs,
        vis: VisTable::new(),
        route: plan.trajectory.ordered_views.iter().copied().collect(),
        prior_views: plan.views.iter().map(|v| (v.id, v.clone())).collect(),
        visited: Vec::new(),
        visited_prior_popcount: 0,
        window: DetectionWindow::new(),
        active: None,
        queue: Vec::new(),
        finished: Vec::new(),
        next_view_id,
        next_target_serial: 0,
        steps: Vec::new(),
        warnings: Vec::new(),
    };
    runner.warnings = warnings;

    let mut next = runner.select_next();
    while let Some(sel) = next {
        let view = sel.view.clone();
        runner.visit(sel);
        runner.detect(&view);
        next = runner.select_next();
    }

    // Anything still pending never accumulated enough structure to become a
    // target.
    if !runner.queue.is_empty() {
        runner.warnings.push(format!(
            "{} pending detection cluster(s) stayed degenerate and were dropped",
            runner.queue.len()
        ));
    }

    // Per-target IoU against ground truth.
    let detected: Vec<HullPrism> = runner
        .finished
        .iter()
        .map(|f| f.target.hull.clone())
        .collect();
    let gt_hulls: Vec<HullPrism> = oracle
        .regions()
        .iter()
        .map(|r| HullPrism {
            footprint: r.prism.footprint.clone(),
            base_height: r.prism.base_height,
            top_height: r.prism.top_height,
        })
        .collect();
    let matches = match_targets(&detected, &gt_hulls);

    let targets: Vec<TargetRecord> = runner
        .finished
        .iter()
        .zip(&matches)
        .map(|(f, (gt_region, gt_iou))| TargetRecord {
            hull: f.target.hull.clone(),
            cloud_points: f.target.cloud.len(),
            target_samples: f.target.target_samples.len(),
            exhausted: f.exhausted,
            gt_region: *gt_region,
            gt_iou: *gt_iou,
        })
        .collect();

    let views: Vec<ViewRecord> = runner.visited.iter().map(ViewRecord::of).collect();
    let position_of = |id: u32| {
        runner
            .visited
            .iter()
            .find(|v| v.id == id)
            .expect("trajectory ids come from visited views")
            .position
    };
    let order: Vec<u32> = runner.visited.iter().map(|v| v.id).collect();
    let trajectory = Trajectory::from_order(order, position_of);

    Ok(MissionResult {
        seed,
        config: ConfigFile::from_config(cfg),
        prior_trajectory: plan.trajectory,
        trajectory,
        views,
        targets,
        steps: runner.steps,
        warnings: runner.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{v2, v3, Rect};
    use crate::scene::{Prism, SemanticLabel};

    fn square(cx: f64, cz: f64, half: f64) -> Vec<Vec2> {
        vec![
            v2(cx - half, cz - half),
            v2(cx + half, cz - half),
            v2(cx + half, cz + half),
            v2(cx - half, cz + half),
        ]
    }

    fn small_cfg() -> PlannerConfig {
        PlannerConfig::default()
    }

    #[test]
    fn select_top_k_nearest_rules() {
        let cands = vec![
            (0, 10.0, v3(100.0, 120.0, 0.0)),
            (1, 9.0, v3(1.0, 120.0, 0.0)),
            (2, 8.0, v3(0.5, 120.0, 0.0)),
            (3, 1.0, v3(0.1, 120.0, 0.0)),
        ];
        // K=1: pure argmax.
        assert_eq!(select_top_k_nearest(&cands, 1, v3(0.0, 120.0, 0.0)), Some(0));
        // K=3: nearest among the top three gains.
        assert_eq!(select_top_k_nearest(&cands, 3, v3(0.0, 120.0, 0.0)), Some(2));
        // Equal gains tie to the lower id for the K cut, nearest wins after.
        let tied = vec![
            (5, 4.0, v3(10.0, 120.0, 0.0)),
            (6, 4.0, v3(2.0, 120.0, 0.0)),
        ];
        assert_eq!(select_top_k_nearest(&tied, 2, v3(0.0, 120.0, 0.0)), Some(6));
        assert_eq!(select_top_k_nearest(&[], 3, v3(0.0, 0.0, 0.0)), None);
    }

    #[test]
    fn nbv_errors_on_empty_pool() {
        let scene = Scene::new(Vec::new(), Rect::new(v2(0.0, 0.0), v2(50.0, 50.0))).unwrap();
        let err = next_best_view(
            &[],
            &[],
            &[],
            &scene,
            &ScoreParams::default(),
            10,
            v3(0.0, 120.0, 0.0),
        );
        assert!(matches!(err, Err(Error::EmptyPool)));
    }

    #[test]
    fn no_change_mission_reproduces_prior_plan() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(90.0, 90.0));
        let prism =
            Prism::new(square(45.0, 45.0, 12.0), 0.0, 18.0, SemanticLabel::BuildingLow).unwrap();
        let scene = Scene::new(vec![prism], bounds).unwrap();
        let cfg = small_cfg();
        let plan = plan_prior(&scene, &cfg, 5).unwrap();
        let result = run_mission(&scene, &scene, &cfg, &OracleNoise::NONE, 5).unwrap();
        assert!(result.targets.is_empty());
        assert_eq!(result.trajectory.ordered_views, plan.trajectory.ordered_views);
        assert!((result.trajectory.length_m - plan.trajectory.length_m).abs() < 1e-9);
        assert!(result.steps.iter().all(|s| s.mode == StepMode::Prior));
    }

    #[test]
    fn mission_is_deterministic() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(90.0, 90.0));
        let t1 = Scene::new(Vec::new(), bounds).unwrap();
        let added =
            Prism::new(square(45.0, 45.0, 10.0), 0.0, 15.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = Scene::new(vec![added], bounds).unwrap();
        let cfg = small_cfg();
        let noise = OracleNoise::new(0.2, 0.3, 9);
        let a = run_mission(&t1, &t2, &cfg, &noise, 9).unwrap();
        let b = run_mission(&t1, &t2, &cfg, &noise, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_added_building_is_found() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(90.0, 90.0));
        let t1 = Scene::new(Vec::new(), bounds).unwrap();
        let added =
            Prism::new(square(45.0, 45.0, 10.0), 0.0, 15.0, SemanticLabel::BuildingLow).unwrap();
        let t2 = Scene::new(vec![added], bounds).unwrap();
        let cfg = small_cfg();
        let result = run_mission(&t1, &t2, &cfg, &OracleNoise::NONE, 1).unwrap();
        assert_eq!(result.targets.len(), 1);
        let t = &result.targets[0];
        assert_eq!(t.gt_region, Some(0));
        assert!(t.gt_iou > 0.7, "IoU {}", t.gt_iou);
        // No view visited twice.
        let mut ids: Vec<u32> = result.views.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), result.views.len());
    }

    #[test]
    fn removed_building_is_found() {
        let bounds = Rect::new(v2(0.0, 0.0), v2(90.0, 90.0));
        let gone =
            Prism::new(square(45.0, 45.0, 10.0), 0.0, 15.0, SemanticLabel::BuildingLow).unwrap();
        let t1 = Scene::new(vec![gone], bounds).unwrap();
        let t2 = Scene::new(Vec::new(), bounds).unwrap();
        let cfg = small_cfg();
        let result = run_mission(&t1, &t2, &cfg, &OracleNoise::NONE, 2).unwrap();
        assert_eq!(result.targets.len(), 1);
        assert!(result.targets[0].gt_iou > 0.7, "IoU {}", result.targets[0].gt_iou);
    }
}
