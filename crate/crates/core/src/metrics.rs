//! Evaluation metrics: hull IoU against ground truth, error percentiles,
//! completeness, and mission summaries.

use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::geometry::{iou_prism, HullPrism};
use crate::math::Vec3;
use crate::oracle::sample_hull_surface;
use crate::realtime::{MissionResult, StepMode};
use crate::scene::{diff_scenes, Scene};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Quality summary for one mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    /// (detected target index, IoU against its matched ground-truth region);
    /// unmatched detections carry IoU 0.
    pub per_target_iou: Vec<(usize, f64)>,
    /// Detections with no ground-truth overlap.
    pub false_positives: usize,
    /// Ground-truth change regions in the scene pair.
    pub gt_regions: usize,
    /// Ground-truth regions matched by some detection.
    pub gt_matched: usize,
    pub n_views: usize,
    pub path_len_m: f64,
    pub error_p85_m: Option<f64>,
    pub error_p90_m: Option<f64>,
    pub error_p95_m: Option<f64>,
    /// (threshold m, percentage of ground truth within threshold).
    pub completeness_at: Vec<(f64, f64)>,
    pub avg_nbv_time_s: f64,
}

// ---------------------------------------------------------------------------
// Point-set distances
// ---------------------------------------------------------------------------

/// Uniform 3D grid for nearest-neighbor queries.
struct GridNn {
    cell: f64,
    buckets: HashMap<(i32, i32, i32), Vec<u32>>,
    points: Vec<Vec3>,
}

impl GridNn {
    fn build(points: &[Vec3], cell_hint: f64) -> GridNn {
        let cell = cell_hint.max(1e-6);
        let mut buckets: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets
                .entry(Self::key_of(*p, cell))
                .or_default()
                .push(i as u32);
        }
        GridNn {
            cell,
            buckets,
            points: points.to_vec(),
        }
    }

    fn key_of(p: Vec3, cell: f64) -> (i32, i32, i32) {
        (
            (p.x / cell).floor() as i32,
            (p.y / cell).floor() as i32,
            (p.z / cell).floor() as i32,
        )
    }

    /// Exact nearest distance via expanding shells.
    fn nearest(&self, q: Vec3) -> f64 {
        let center = Self::key_of(q, self.cell);
        let mut best = f64::INFINITY;
        let mut ring = 0i32;
        loop {
            // Once a candidate is found, one extra ring guarantees exactness:
            // any point outside ring r is at least (r-1)*cell away.
            if best.is_finite() && (ring - 1) as f64 * self.cell > best {
                return best;
            }
            let mut any_cell = false;
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let key = (center.0 + dx, center.1 + dy, center.2 + dz);
                        if let Some(ids) = self.buckets.get(&key) {
                            any_cell = true;
                            for &i in ids {
                                best = best.min(q.dist(self.points[i as usize]));
                            }
                        }
                    }
                }
            }
            // Safety: if the grid is sparse keep expanding until something
            // is found; the bucket map is non-empty by construction.
            if ring as f64 * self.cell > 1e7 && best.is_finite() {
                return best;
            }
            let _ = any_cell;
            ring += 1;
        }
    }
}

fn nearest_distances(queries: &[Vec3], refs: &[Vec3]) -> Vec<f64> {
    // Cell size near the expected spacing keeps buckets small.
    let hint = if refs.len() > 1 {
        let bbox_vol = bbox_volume(refs).max(1.0);
        (bbox_vol / refs.len() as f64).cbrt().clamp(0.25, 50.0)
    } else {
        1.0
    };
    let grid = GridNn::build(refs, hint);
    queries.iter().map(|q| grid.nearest(*q)).collect()
}

fn bbox_volume(points: &[Vec3]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        lo.z = lo.z.min(p.z);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
        hi.z = hi.z.max(p.z);
    }
    (hi.x - lo.x).max(1e-3) * (hi.y - lo.y).max(1e-3) * (hi.z - lo.z).max(1e-3)
}

/// The `pct` error percentile: the smallest distance such that `pct` percent
/// of reconstruction points lie within it of the ground truth.
pub fn error_percentile(recon: &[Vec3], gt: &[Vec3], pct: f64) -> Result<f64> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::InvalidConfig(
            "error_percentile requires non-empty point sets".into(),
        ));
    }
    assert!(pct > 0.0 && pct <= 100.0);
    let mut dists = nearest_distances(recon, gt);
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dists.len();
    let idx = ((pct / 100.0 * n as f64).ceil() as usize).clamp(1, n) - 1;
    Ok(dists[idx])
}

/// Percentage of ground-truth points whose nearest reconstruction point is
/// closer than `d`.
pub fn completeness(recon: &[Vec3], gt: &[Vec3], d: f64) -> Result<f64> {
    if recon.is_empty() || gt.is_empty() {
        return Err(Error::InvalidConfig(
            "completeness requires non-empty point sets".into(),
        ));
    }
    assert!(d > 0.0);
    let dists = nearest_distances(gt, recon);
    let within = dists.iter().filter(|&&x| x < d).count();
    Ok(100.0 * within as f64 / gt.len() as f64)
}

// ---------------------------------------------------------------------------
// Target matching
// ---------------------------------------------------------------------------

/// Greedy matching of detected hulls to ground-truth regions by descending
/// IoU; each ground-truth region is matched at most once. Returns, per
/// detection, the matched region index and the IoU.
pub fn match_targets(detected: &[HullPrism], gt: &[HullPrism]) -> Vec<(Option<usize>, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (di, d) in detected.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            let iou = iou_prism(d, g);
            if iou > 0.0 {
                pairs.push((di, gi, iou));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let mut det_match: Vec<(Option<usize>, f64)> = vec![(None, 0.0); detected.len()];
    let mut gt_used = vec![false; gt.len()];
    for (di, gi, iou) in pairs {
        if det_match[di].0.is_some() || gt_used[gi] {
            continue;
        }
        det_match[di] = (Some(gi), iou);
        gt_used[gi] = true;
    }
    det_match
}

/// Full mission evaluation against the scene pair.
pub fn evaluate_mission(
    result: &MissionResult,
    t1: &Scene,
    t2: &Scene,
    cfg: &PlannerConfig,
) -> Result<QualityReport> {
    let gt_prisms = diff_scenes(t1, t2)?;
    let gt_hulls: Vec<HullPrism> = gt_prisms
        .iter()
        .map(|p| HullPrism {
            footprint: p.footprint.clone(),
            base_height: p.base_height,
            top_height: p.top_height,
        })
        .collect();
    let detected: Vec<HullPrism> = result.targets.iter().map(|t| t.hull.clone()).collect();
    let matches = match_targets(&detected, &gt_hulls);
    let per_target_iou: Vec<(usize, f64)> =
        matches.iter().enumerate().map(|(i, (_, iou))| (i, *iou)).collect();
    let false_positives = matches.iter().filter(|(m, _)| m.is_none()).count();
    let gt_matched = matches.iter().filter(|(m, _)| m.is_some()).count();

    // Densify both sides for error/completeness.
    let spacing = cfg.densify_spacing_m;
    let recon_pts: Vec<Vec3> = detected
        .iter()
        .flat_map(|h| sample_hull_surface(h, spacing))
        .map(|s| s.position)
        .collect();
    let gt_pts: Vec<Vec3> = gt_hulls
        .iter()
        .flat_map(|h| sample_hull_surface(h, spacing))
        .map(|s| s.position)
        .collect();

    let (error_p85_m, error_p90_m, error_p95_m, completeness_at) =
        if recon_pts.is_empty() || gt_pts.is_empty() {
            (None, None, None, Vec::new())
        } else {
            let p85 = error_percentile(&recon_pts, &gt_pts, 85.0)?;
            let p90 = error_percentile(&recon_pts, &gt_pts, 90.0)?;
            let p95 = error_percentile(&recon_pts, &gt_pts, 95.0)?;
            let mut comp = Vec::new();
            for &d in &cfg.completeness_thresholds_m {
                comp.push((d, completeness(&recon_pts, &gt_pts, d)?));
            }
            (Some(p85), Some(p90), Some(p95), comp)
        };

    let explore_steps: Vec<&crate::realtime::StepRecord> = result
        .steps
        .iter()
        .filter(|s| s.mode == StepMode::Explore)
        .collect();
    let avg_nbv_time_s = if explore_steps.is_empty() {
        0.0
    } else {
        explore_steps.iter().map(|s| s.wall_time_s).sum::<f64>() / explore_steps.len() as f64
    };

    Ok(QualityReport {
        per_target_iou,
        false_positives,
        gt_regions: gt_hulls.len(),
        gt_matched,
        n_views: result.views.len(),
        path_len_m: result.trajectory.length_m,
        error_p85_m,
        error_p90_m,
        error_p95_m,
        completeness_at,
        avg_nbv_time_s,
    })
}

impl QualityReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.3}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<26} {:>12}\n",
            "metric", "value"
        ));
        out.push_str(&format!("{:-<39}\n", ""));
        out.push_str(&format!("{:<26} {:>12}\n", "gt change regions", self.gt_regions));
        out.push_str(&format!("{:<26} {:>12}\n", "targets detected", self.per_target_iou.len()));
        out.push_str(&format!("{:<26} {:>12}\n", "gt regions matched", self.gt_matched));
        out.push_str(&format!("{:<26} {:>12}\n", "false positives", self.false_positives));
        out.push_str(&format!("{:<26} {:>12}\n", "#views", self.n_views));
        out.push_str(&format!("{:<26} {:>12.1}\n", "path len [m]", self.path_len_m));
        out.push_str(&format!("{:<26} {:>12}\n", "error 85% [m]", fmt_opt(self.error_p85_m)));
        out.push_str(&format!("{:<26} {:>12}\n", "error 90% [m]", fmt_opt(self.error_p90_m)));
        out.push_str(&format!("{:<26} {:>12}\n", "error 95% [m]", fmt_opt(self.error_p95_m)));
        for (d, pct) in &self.completeness_at {
            out.push_str(&format!("{:<26} {:>11.2}%\n", format!("comp @ {d} m"), pct));
        }
        out.push_str(&format!(
            "{:<26} {:>12.4}\n",
            "avg nbv time [s]", self.avg_nbv_time_s
        ));
        if !self.per_target_iou.is_empty() {
            out.push('\n');
            out.push_str(&format!("{:<10} {:>8}\n", "target", "IoU"));
            for (i, iou) in &self.per_target_iou {
                out.push_str(&format!("{:<10} {:>8.3}\n", format!("T{i}"), iou));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{v2, v3};

    fn cube_cloud(offset: Vec3, n: usize) -> Vec<Vec3> {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(v3(i as f64, 0.0, j as f64) + offset);
            }
        }
        pts
    }

    #[test]
    fn identical_sets_have_zero_error_full_completeness() {
        let pts = cube_cloud(v3(0.0, 0.0, 0.0), 10);
        assert_eq!(error_percentile(&pts, &pts, 85.0).unwrap(), 0.0);
        assert_eq!(error_percentile(&pts, &pts, 95.0).unwrap(), 0.0);
        assert_eq!(completeness(&pts, &pts, 0.5).unwrap(), 100.0);
    }

    #[test]
    fn uniform_shift_moves_every_percentile() {
        let gt = cube_cloud(v3(0.0, 0.0, 0.0), 8);
        let recon: Vec<Vec3> = gt.iter().map(|p| *p + v3(0.0, 0.1, 0.0)).collect();
        for pct in [50.0, 85.0, 90.0, 95.0, 100.0] {
            let e = error_percentile(&recon, &gt, pct).unwrap();
            assert!((e - 0.1).abs() < 1e-12, "pct {pct}: {e}");
        }
    }

    #[test]
    fn far_recon_scores_zero_completeness() {
        let gt = cube_cloud(v3(0.0, 0.0, 0.0), 5);
        let recon = cube_cloud(v3(1000.0, 0.0, 0.0), 5);
        assert_eq!(completeness(&recon, &gt, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn half_within_threshold() {
        // 10 gt points: 5 coincide with recon, 5 are 10 m away.
        let mut gt = Vec::new();
        for i in 0..5 {
            gt.push(v3(i as f64 * 0.1, 0.0, 0.0));
            gt.push(v3(i as f64 * 0.1, 0.0, 10.0));
        }
        let recon: Vec<Vec3> = (0..5).map(|i| v3(i as f64 * 0.1, 0.0, 0.0)).collect();
        assert_eq!(completeness(&recon, &gt, 0.5).unwrap(), 50.0);
    }

    #[test]
    fn empty_sets_are_errors() {
        let pts = cube_cloud(v3(0.0, 0.0, 0.0), 3);
        assert!(error_percentile(&[], &pts, 90.0).is_err());
        assert!(error_percentile(&pts, &[], 90.0).is_err());
        assert!(completeness(&[], &pts, 1.0).is_err());
    }

    #[test]
    fn greedy_matching_is_one_to_one() {
        let unit = |cx: f64| HullPrism {
            footprint: vec![
                v2(cx, 0.0),
                v2(cx + 10.0, 0.0),
                v2(cx + 10.0, 10.0),
                v2(cx, 10.0),
            ],
            base_height: 0.0,
            top_height: 10.0,
        };
        let gt = vec![unit(0.0), unit(100.0)];
        // Two detections over gt[0]: the better one wins, the other becomes
        // a false positive; gt[1] stays unmatched.
        let det = vec![unit(1.0), unit(0.0)];
        let m = match_targets(&det, &gt);
        assert_eq!(m[1].0, Some(0));
        assert!(m[1].1 > 0.9);
        assert_eq!(m[0].0, None);
    }
}
