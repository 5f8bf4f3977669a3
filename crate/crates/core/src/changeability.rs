//! Changeability heuristics.
//!
//! Scores samples and views for both planning stages:
//!
//! * per-sample, per-view changeability `f`: `omega * q * vis` for an
//!   unvisited view, `-gamma * vis` for a visited one (the visited branch
//!   carries no `q` factor);
//! * prior-phase sample changeability, which decays as `1/|observers|`;
//! * prior-phase view importance `g` (the negative of redundancy);
//! * real-time cumulative gain of a candidate given the visited sequence.
//!
//! All scoring is pure. Visibility is the expensive part, so it is memoized
//! per (view, sample) pair in [`VisTable`]; scores are always recomputed
//! from the memo.

use crate::config::PlannerConfig;
use crate::geometry::visible;
use crate::scene::{Sample, Scene};
use crate::viewgen::View;
use rayon::prelude::*;
use std::collections::HashMap;

/// Scaling parameters for the changeability formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreParams {
    pub omega: f64,
    pub gamma: f64,
    pub beta_prior: f64,
}

impl ScoreParams {
    pub fn from_config(cfg: &PlannerConfig) -> ScoreParams {
        ScoreParams {
            omega: cfg.omega,
            gamma: cfg.gamma,
            beta_prior: cfg.beta_prior,
        }
    }
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            omega: 3.0,
            gamma: 2.0,
            beta_prior: 3.0,
        }
    }
}

/// Changeability of a sample with respect to one view.
pub fn f_sample_view(q: f64, view_visited: bool, vis: bool, p: &ScoreParams) -> f64 {
    let delta = if vis { 1.0 } else { 0.0 };
    if view_visited {
        -p.gamma * delta
    } else {
        p.omega * q * delta
    }
}

/// Number of views observing a sample.
pub fn coverage(sample: &Sample, views: &[View], scene: &Scene) -> usize {
    views.iter().filter(|v| visible(sample, v, scene)).count()
}

/// Prior-phase changeability of a sample observed by `observer_count`
/// unvisited views: `beta * q / |observers|`, zero when unobserved.
pub fn f_sample_prior(q: f64, observer_count: usize, p: &ScoreParams) -> f64 {
    if observer_count == 0 {
        return 0.0;
    }
    p.beta_prior * q / observer_count as f64
}

/// Prior-phase importance of a view within a candidate set: the summed
/// changeability of the samples it observes, where each sample's
/// changeability is diluted by its total observer count over `views`.
pub fn g_view_prior(
    view: &View,
    views: &[View],
    samples: &[Sample],
    scene: &Scene,
    p: &ScoreParams,
) -> f64 {
    let mut total = 0.0;
    for s in samples {
        if !visible(s, view, scene) {
            continue;
        }
        let observers = coverage(s, views, scene);
        total += f_sample_prior(s.q, observers, p);
    }
    total
}

/// Real-time cumulative gain of an unvisited candidate: for every sample,
/// the candidate's own changeability plus the (non-positive) changeability
/// contributed by every already visited view.
pub fn g_view_realtime(
    candidate: &View,
    visited: &[View],
    samples: &[Sample],
    scene: &Scene,
    p: &ScoreParams,
) -> f64 {
    let mut total = 0.0;
    for s in samples {
        let own = f_sample_view(s.q, false, visible(s, candidate, scene), p);
        let mut seen = 0.0;
        for v in visited {
            seen += f_sample_view(s.q, true, visible(s, v, scene), p);
        }
        total += own + seen;
    }
    total
}

/// Memoized visibility: one boolean mask per view over a fixed sample list.
///
/// Masks are filled on demand; `ensure` computes missing masks in parallel.
/// The table never caches scores, only the geometric predicate.
#[derive(Debug, Default)]
pub struct VisTable {
    masks: HashMap<u32, Box<[bool]>>,
}

impl VisTable {
    pub fn new() -> VisTable {
        VisTable::default()
    }

    /// Compute (in parallel) any missing masks for `views`.
    pub fn ensure(&mut self, views: &[&View], samples: &[Sample], scene: &Scene) {
        let missing: Vec<&View> = views
            .iter()
            .copied()
            .filter(|v| !self.masks.contains_key(&v.id))
            .collect();
        let computed: Vec<(u32, Box<[bool]>)> = missing
            .par_iter()
            .map(|v| (v.id, compute_mask(v, samples, scene)))
            .collect();
        for (id, mask) in computed {
            self.masks.insert(id, mask);
        }
    }

    pub fn mask(&self, view_id: u32) -> &[bool] {
        &self.masks[&view_id]
    }

    pub fn get(&self, view_id: u32) -> Option<&[bool]> {
        self.masks.get(&view_id).map(|m| &m[..])
    }

    pub fn sees(&self, view_id: u32, sample_idx: usize) -> bool {
        self.masks[&view_id][sample_idx]
    }

    /// Sample indices visible from a view.
    pub fn visible_indices(&self, view_id: u32) -> Vec<usize> {
        self.mask(view_id)
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| v.then_some(i))
            .collect()
    }
}

fn compute_mask(view: &View, samples: &[Sample], scene: &Scene) -> Box<[bool]> {
    samples
        .iter()
        .map(|s| visible(s, view, scene))
        .collect::<Vec<bool>>()
        .into_boxed_slice()
}
