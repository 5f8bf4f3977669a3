//! Prior path planning: greedy redundancy-driven view reduction under a hard
//! full-coverage constraint, then TSP trajectory construction.
//!
//! The greedy loop repeatedly removes the most redundant view (lowest
//! importance, ties to the lowest id), reverting any removal that would
//! leave a coverable sample unobserved, until no view can be removed. An
//! optional early stop (`tau_stop`) halts once the most redundant view's
//! importance exceeds `tau` times the mean importance.

use crate::changeability::{f_sample_prior, ScoreParams, VisTable};
use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::math::{mix_seed, Vec3};
use crate::scene::{sample_surface, Sample, Scene};
use crate::viewgen::{generate_candidates, View};
use serde::{Deserialize, Serialize};

/// Seed stream ids fanned out from the mission seed.
pub const STREAM_PRIOR_VIEWS: u64 = 1;

/// An ordered open tour over view ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub ordered_views: Vec<u32>,
    pub length_m: f64,
}

impl Trajectory {
    pub fn from_order(order: Vec<u32>, position_of: impl Fn(u32) -> Vec3) -> Trajectory {
        let length_m = order
            .windows(2)
            .map(|w| position_of(w[0]).dist(position_of(w[1])))
            .sum();
        Trajectory {
            ordered_views: order,
            length_m,
        }
    }
}

/// Bipartite visibility between candidate views and samples.
#[derive(Debug, Clone)]
pub struct CoverageAdjacency {
    /// Per view: indices of the samples it observes.
    pub view_samples: Vec<Vec<u32>>,
    /// Per sample: indices (into the candidate list) of its observers.
    pub sample_views: Vec<Vec<u32>>,
}

impl CoverageAdjacency {
    pub fn build(candidates: &[View], samples: &[Sample], scene: &Scene) -> CoverageAdjacency {
        let mut table = VisTable::new();
        table.ensure(&candidates.iter().collect::<Vec<_>>(), samples, scene);
        Self::from_table(&table, candidates, samples.len())
    }

    pub fn from_table(
        table: &VisTable,
        candidates: &[View],
        n_samples: usize,
    ) -> CoverageAdjacency {
        let mut view_samples = Vec::with_capacity(candidates.len());
        let mut sample_views = vec![Vec::new(); n_samples];
        for (vi, view) in candidates.iter().enumerate() {
            let mask = table.mask(view.id);
            let mut seen = Vec::new();
            for (si, &vis) in mask.iter().enumerate() {
                if vis {
                    seen.push(si as u32);
                    sample_views[si].push(vi as u32);
                }
            }
            view_samples.push(seen);
        }
        CoverageAdjacency {
            view_samples,
            sample_views,
        }
    }
}

/// Result of the greedy reduction over an adjacency.
#[derive(Debug, Clone)]
pub struct ReduceOutcome {
    /// Keep/drop flag per candidate index.
    pub retained: Vec<bool>,
    /// Candidate indices in the order they were removed.
    pub removal_order: Vec<u32>,
    /// Samples visible from no candidate at all (excluded from coverage).
    pub uncoverable_samples: Vec<u32>,
    /// Removals attempted but reverted because they would break coverage.
    pub reverted: usize,
}

/// Greedy reduction on a precomputed adjacency. `qs` are the sample scores.
pub fn reduce_views_adj(
    adj: &CoverageAdjacency,
    qs: &[f64],
    params: &ScoreParams,
    tau_stop: Option<f64>,
) -> ReduceOutcome {
    let n_views = adj.view_samples.len();
    let n_samples = adj.sample_views.len();
    debug_assert_eq!(qs.len(), n_samples);

    let mut counts: Vec<u32> = adj.sample_views.iter().map(|v| v.len() as u32).collect();
    let uncoverable_samples: Vec<u32> = (0..n_samples as u32)
        .filter(|&s| counts[s as usize] == 0)
        .collect();

    let mut alive = vec![true; n_views];
    let mut importance: Vec<f64> = (0..n_views)
        .map(|vi| {
            adj.view_samples[vi]
                .iter()
                .map(|&si| f_sample_prior(qs[si as usize], counts[si as usize] as usize, params))
                .sum()
        })
        .collect();

    let mut removal_order = Vec::new();
    let mut reverted = 0usize;
    let mut alive_count = n_views;

    loop {
        if alive_count == 0 {
            break;
        }
        // Most redundant first: ascending importance, ties to the lowest id.
        let mut order: Vec<u32> = (0..n_views as u32).filter(|&v| alive[v as usize]).collect();
        order.sort_by(|&a, &b| {
            importance[a as usize]
                .partial_cmp(&importance[b as usize])
                .unwrap()
                .then(a.cmp(&b))
        });

        if let Some(tau) = tau_stop {
            let mean = order
                .iter()
                .map(|&v| importance[v as usize])
                .sum::<f64>()
                / alive_count as f64;
            if importance[order[0] as usize] > tau * mean {
                break;
            }
        }

        let mut removed_this_pass = false;
        for &vi in &order {
            let feasible = adj.view_samples[vi as usize]
                .iter()
                .all(|&si| counts[si as usize] >= 2 || adj.sample_views[si as usize].is_empty());
            if !feasible {
                reverted += 1;
                continue;
            }
            alive[vi as usize] = false;
            alive_count -= 1;
            removal_order.push(vi);
            // Update observer counts and the importances of affected views.
            for &si in &adj.view_samples[vi as usize] {
                let c_old = counts[si as usize] as usize;
                counts[si as usize] -= 1;
                let c_new = c_old - 1;
                let delta = f_sample_prior(qs[si as usize], c_new, params)
                    - f_sample_prior(qs[si as usize], c_old, params);
                for &u in &adj.sample_views[si as usize] {
                    if alive[u as usize] {
                        importance[u as usize] += delta;
                    }
                }
            }
            removed_this_pass = true;
            break;
        }
        if !removed_this_pass {
            break;
        }
    }

    ReduceOutcome {
        retained: alive,
        removal_order,
        uncoverable_samples,
        reverted,
    }
}

/// Spec-level greedy reduction: builds the visibility adjacency and returns
/// the retained subset of `candidates`.
pub fn reduce_views(
    candidates: &[View],
    samples: &[Sample],
    scene: &Scene,
    params: &ScoreParams,
    tau_stop: Option<f64>,
) -> Vec<View> {
    let adj = CoverageAdjacency::build(candidates, samples, scene);
    let qs: Vec<f64> = samples.iter().map(|s| s.q).collect();
    let outcome = reduce_views_adj(&adj, &qs, params, tau_stop);
    candidates
        .iter()
        .zip(&outcome.retained)
        .filter_map(|(v, &keep)| keep.then(|| v.clone()))
        .collect()
}

// ---------------------------------------------------------------------------
// TSP trajectory
// ---------------------------------------------------------------------------

/// Open tour over all views starting at `start`: nearest-neighbor
/// construction improved by 2-opt until no swap helps. Deterministic; ties
/// break to the lower view id.
pub fn tsp_tour(views: &[View], start: u32) -> Trajectory {
    assert!(!views.is_empty(), "tsp_tour needs at least one view");
    let pos: Vec<Vec3> = views.iter().map(|v| v.position).collect();
    let ids: Vec<u32> = views.iter().map(|v| v.id).collect();
    let start_idx = ids
        .iter()
        .position(|&id| id == start)
        .expect("start view must be in the view set");

    // Nearest-neighbor chain.
    let n = views.len();
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; n];
    order.push(start_idx);
    used[start_idx] = true;
    while order.len() < n {
        let cur = *order.last().unwrap();
        let mut best: Option<usize> = None;
        for i in 0..n {
            if used[i] {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => {
                    let (di, db) = (pos[cur].dist(pos[i]), pos[cur].dist(pos[b]));
                    di < db - 1e-12 || ((di - db).abs() <= 1e-12 && ids[i] < ids[b])
                }
            };
            if better {
                best = Some(i);
            }
        }
        let next = best.unwrap();
        used[next] = true;
        order.push(next);
    }

    two_opt(&mut order, &pos);

    let id_order: Vec<u32> = order.iter().map(|&i| ids[i]).collect();
    let length_m = order
        .windows(2)
        .map(|w| pos[w[0]].dist(pos[w[1]]))
        .sum();
    Trajectory {
        ordered_views: id_order,
        length_m,
    }
}

/// Best-improvement 2-opt for an open path with a fixed first node.
fn two_opt(order: &mut Vec<usize>, pos: &[Vec3]) {
    let n = order.len();
    if n < 4 {
        return;
    }
    loop {
        let mut best_delta = -1e-9;
        let mut best_pair: Option<(usize, usize)> = None;
        for i in 1..n - 1 {
            for j in i + 1..n {
                // Reverse order[i..=j]; the first node never moves.
                let mut delta = pos[order[i - 1]].dist(pos[order[j]])
                    - pos[order[i - 1]].dist(pos[order[i]]);
                if j + 1 < n {
                    delta += pos[order[i]].dist(pos[order[j + 1]])
                        - pos[order[j]].dist(pos[order[j + 1]]);
                }
                if delta < best_delta {
                    best_delta = delta;
                    best_pair = Some((i, j));
                }
            }
        }
        match best_pair {
            Some((i, j)) => order[i..=j].reverse(),
            None => break,
        }
    }
}

// ---------------------------------------------------------------------------
// The composed prior plan
// ---------------------------------------------------------------------------

/// Output of prior path planning.
#[derive(Debug, Clone)]
pub struct PriorPlan {
    pub views: Vec<View>,
    pub trajectory: Trajectory,
    pub samples: Vec<Sample>,
    /// Sample indices no candidate view could observe.
    pub uncoverable_samples: Vec<u32>,
    pub candidates_generated: usize,
}

/// Plan the prior path over the T1 scene: discretize surfaces, generate
/// candidates over the padded bounds, reduce under the coverage constraint,
/// and connect the survivors with a TSP tour.
pub fn plan_prior(scene: &Scene, cfg: &PlannerConfig, seed: u64) -> Result<PriorPlan> {
    cfg.validate()?;
    if scene.max_top_height() >= cfg.h {
        return Err(Error::InvalidScene(format!(
            "scene reaches {} m, at or above the safe-height plane {} m",
            scene.max_top_height(),
            cfg.h
        )));
    }
    let samples = sample_surface(scene, cfg.sample_spacing_m, &cfg.priors)?;
    let bounds_poly = scene.bounds.corners().to_vec();
    let candidates = generate_candidates(
        &bounds_poly,
        cfg,
        cfg.prior_radius_m,
        mix_seed(seed, STREAM_PRIOR_VIEWS),
        0,
    )?;
    let params = ScoreParams::from_config(cfg);
    let adj = CoverageAdjacency::build(&candidates, &samples, scene);
    let qs: Vec<f64> = samples.iter().map(|s| s.q).collect();
    let tau_stop = cfg.tau_stop.then_some(cfg.tau);
    let outcome = reduce_views_adj(&adj, &qs, &params, tau_stop);
    let views: Vec<View> = candidates
        .iter()
        .zip(&outcome.retained)
        .filter_map(|(v, &keep)| keep.then(|| v.clone()))
        .collect();
    if views.is_empty() {
        return Err(Error::EmptyPool);
    }

    // Enter the scene at the view nearest the minimum corner of the bounds.
    let entry = scene.bounds.min.at_height(cfg.h);
    let start = views
        .iter()
        .min_by(|a, b| {
            a.position
                .dist(entry)
                .partial_cmp(&b.position.dist(entry))
                .unwrap()
                .then(a.id.cmp(&b.id))
        })
        .unwrap()
        .id;
    let trajectory = tsp_tour(&views, start);
    Ok(PriorPlan {
        views,
        trajectory,
        samples,
        uncoverable_samples: outcome.uncoverable_samples,
        candidates_generated: candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{v2, v3, Rect};
    use crate::viewgen::RigSlot;

    fn view_at(id: u32, x: f64, z: f64) -> View {
        View::new(id, v3(x, 120.0, z), RigSlot::Nadir, &PlannerConfig::default())
    }

    fn adj_from_matrix(rows: &[&[usize]], n_samples: usize) -> CoverageAdjacency {
        let mut sample_views = vec![Vec::new(); n_samples];
        let mut view_samples = Vec::new();
        for (vi, row) in rows.iter().enumerate() {
            view_samples.push(row.iter().map(|&s| s as u32).collect::<Vec<u32>>());
            for &s in *row {
                sample_views[s].push(vi as u32);
            }
        }
        CoverageAdjacency {
            view_samples,
            sample_views,
        }
    }

    #[test]
    fn forced_retention_when_each_view_is_sole_observer() {
        let adj = adj_from_matrix(&[&[0], &[1], &[2]], 3);
        let out = reduce_views_adj(&adj, &[0.5; 3], &ScoreParams::default(), None);
        assert!(out.retained.iter().all(|&k| k));
        assert!(out.removal_order.is_empty());
        assert!(out.reverted >= 3);
    }

    #[test]
    fn duplicate_views_collapse_to_one() {
        let adj = adj_from_matrix(&[&[0, 1], &[0, 1]], 2);
        let out = reduce_views_adj(&adj, &[0.5, 0.5], &ScoreParams::default(), None);
        let kept = out.retained.iter().filter(|&&k| k).count();
        assert_eq!(kept, 1);
        // Ties break to the lowest id, so view 0 is removed first.
        assert_eq!(out.removal_order, vec![0]);
    }

    #[test]
    fn uncoverable_sample_is_flagged_not_fatal() {
        let adj = adj_from_matrix(&[&[0]], 2);
        let out = reduce_views_adj(&adj, &[0.5, 0.9], &ScoreParams::default(), None);
        assert_eq!(out.uncoverable_samples, vec![1]);
        assert!(out.retained[0]);
    }

    #[test]
    fn empty_adjacency_views_are_dropped() {
        let adj = adj_from_matrix(&[&[0], &[]], 1);
        let out = reduce_views_adj(&adj, &[0.5], &ScoreParams::default(), None);
        assert!(out.retained[0]);
        assert!(!out.retained[1]);
    }

    #[test]
    fn tau_stop_halts_on_uniform_importance() {
        // With the literal tau rule enabled, equal importances stop removal
        // immediately even though one view is fully redundant.
        let adj = adj_from_matrix(&[&[0, 1], &[0, 1]], 2);
        let out = reduce_views_adj(&adj, &[0.5, 0.5], &ScoreParams::default(), Some(0.05));
        assert_eq!(out.retained.iter().filter(|&&k| k).count(), 2);
    }

    #[test]
    fn single_view_tour_is_empty_length() {
        let views = vec![view_at(7, 3.0, 4.0)];
        let t = tsp_tour(&views, 7);
        assert_eq!(t.ordered_views, vec![7]);
        assert_eq!(t.length_m, 0.0);
    }

    #[test]
    fn collinear_views_toured_monotonically() {
        let views = vec![view_at(0, 0.0, 0.0), view_at(1, 10.0, 0.0), view_at(2, 20.0, 0.0)];
        let t = tsp_tour(&views, 0);
        assert_eq!(t.ordered_views, vec![0, 1, 2]);
        assert!((t.length_m - 20.0).abs() < 1e-12);
    }

    #[test]
    fn two_opt_never_worse_than_nearest_neighbor() {
        // A layout where greedy NN is suboptimal for the open tour.
        let views = vec![
            view_at(0, 0.0, 0.0),
            view_at(1, 1.0, 10.0),
            view_at(2, 2.0, 0.5),
            view_at(3, 3.0, 10.5),
            view_at(4, 4.0, 1.0),
        ];
        let t = tsp_tour(&views, 0);
        // NN-only length from id 0.
        let pos: Vec<Vec3> = views.iter().map(|v| v.position).collect();
        let mut used = vec![false; 5];
        used[0] = true;
        let mut cur = 0usize;
        let mut nn_len = 0.0;
        for _ in 1..5 {
            let next = (0..5)
                .filter(|&i| !used[i])
                .min_by(|&a, &b| pos[cur].dist(pos[a]).partial_cmp(&pos[cur].dist(pos[b])).unwrap())
                .unwrap();
            nn_len += pos[cur].dist(pos[next]);
            used[next] = true;
            cur = next;
        }
        assert!(t.length_m <= nn_len + 1e-9);
        assert_eq!(t.ordered_views[0], 0);
        let mut sorted = t.ordered_views.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn plan_prior_covers_ground_only_scene() {
        let scene = Scene::new(Vec::new(), Rect::new(v2(0.0, 0.0), v2(60.0, 60.0))).unwrap();
        let cfg = PlannerConfig::default();
        let plan = plan_prior(&scene, &cfg, 3).unwrap();
        assert!(!plan.views.is_empty());
        assert!(plan.uncoverable_samples.is_empty());
        // Every sample visible from at least one retained view.
        let adj = CoverageAdjacency::build(&plan.views, &plan.samples, &scene);
        for (si, observers) in adj.sample_views.iter().enumerate() {
            assert!(!observers.is_empty(), "sample {si} left uncovered");
        }
    }

    #[test]
    fn plan_prior_is_deterministic() {
        let scene = Scene::new(Vec::new(), Rect::new(v2(0.0, 0.0), v2(60.0, 60.0))).unwrap();
        let cfg = PlannerConfig::default();
        let a = plan_prior(&scene, &cfg, 11).unwrap();
        let b = plan_prior(&scene, &cfg, 11).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.views.len(), b.views.len());
    }
}
