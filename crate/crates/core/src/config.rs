//! Planner configuration.
//!
//! One struct carries every scalar the pipeline uses. Angles are radians
//! internally; the JSON schema stores them in degrees (`alpha_deg`,
//! `beta_deg`). Any field omitted from a config file keeps its default.

use crate::error::{Error, Result};
use crate::scene::PriorTable;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Safe-height plane for all views (m).
    pub h: f64,
    /// Unvisited-view changeability scale.
    pub omega: f64,
    /// Visited-view penalty scale.
    pub gamma: f64,
    /// Prior-importance scale; plays the same role omega does and defaults
    /// to it.
    pub beta_prior: f64,
    /// IoU threshold gating union-vs-replace when merging detections.
    pub phi: f64,
    /// Top-K candidate count for next-best-view selection.
    pub k: usize,
    /// Poisson radius for prior-path view positions (m).
    pub prior_radius_m: f64,
    /// Poisson radius for real-time view positions (m).
    pub realtime_radius_m: f64,
    /// Camera tilt angle (rad).
    pub alpha: f64,
    /// Tilt plus vertical half-FOV (rad); beta - alpha is the half-FOV.
    pub beta: f64,
    /// Padding constant (m); defaults to the active sampling radius.
    pub d_pad: Option<f64>,
    /// Surface sample spacing for prior planning (m).
    pub sample_spacing_m: f64,
    /// Surface sample spacing for change targets (m).
    pub realtime_spacing_m: f64,
    /// Single-linkage distance splitting simultaneous detections (m).
    pub cluster_gap_m: f64,
    /// Early-stop threshold for greedy view removal (see `tau_stop`).
    pub tau: f64,
    /// Enable the tau early stop. Off by default: the literal rule halts
    /// removal as soon as view importances are within the same order of
    /// magnitude, which defeats redundancy elimination on uniform scenes.
    pub tau_stop: bool,
    /// Far-plane distance as a multiple of the safe height.
    pub far_factor: f64,
    /// Union detections into the target even when IoU >= phi (ablation of
    /// the replace branch).
    pub merge_always_union: bool,
    /// Regenerate a target's real-time views when its hull drifts below
    /// this IoU against the version the views were generated for.
    pub hull_regen_iou: f64,
    /// Horizontal half-FOV as a multiple of the vertical half-FOV.
    pub aspect: f64,
    /// Point spacing when densifying hulls for error/completeness (m).
    pub densify_spacing_m: f64,
    /// Completeness thresholds to report (m).
    pub completeness_thresholds_m: Vec<f64>,
    /// Mission seed; all component streams fan out from it.
    pub seed: u64,
    /// Prior change probabilities per semantic label.
    pub priors: PriorTable,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            h: 120.0,
            omega: 3.0,
            gamma: 2.0,
            beta_prior: 3.0,
            phi: 0.3,
            k: 10,
            prior_radius_m: 15.0,
            realtime_radius_m: 5.0,
            alpha: 30f64.to_radians(),
            beta: 55f64.to_radians(),
            d_pad: None,
            sample_spacing_m: 10.0,
            realtime_spacing_m: 5.0,
            cluster_gap_m: 25.0,
            tau: 0.05,
            tau_stop: false,
            far_factor: 3.0,
            merge_always_union: false,
            hull_regen_iou: 0.95,
            aspect: 1.0,
            densify_spacing_m: 1.0,
            completeness_thresholds_m: vec![0.05, 0.075, 0.5, 1.0],
            seed: 0,
            priors: PriorTable::default(),
        }
    }
}

impl PlannerConfig {
    pub fn vertical_half_angle(&self) -> f64 {
        self.beta - self.alpha
    }

    pub fn horizontal_half_angle(&self) -> f64 {
        (self.beta - self.alpha) * self.aspect
    }

    pub fn far_plane(&self) -> f64 {
        self.far_factor * self.h
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("h", self.h),
            ("omega", self.omega),
            ("gamma", self.gamma),
            ("beta_prior", self.beta_prior),
            ("prior_radius_m", self.prior_radius_m),
            ("realtime_radius_m", self.realtime_radius_m),
            ("sample_spacing_m", self.sample_spacing_m),
            ("realtime_spacing_m", self.realtime_spacing_m),
            ("cluster_gap_m", self.cluster_gap_m),
            ("tau", self.tau),
            ("far_factor", self.far_factor),
            ("aspect", self.aspect),
            ("densify_spacing_m", self.densify_spacing_m),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidConfig("phi must lie in (0,1)".into()));
        }
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha < self.beta && self.beta < std::f64::consts::FRAC_PI_2)
        {
            return Err(Error::InvalidConfig(
                "require 0 <= alpha < beta < pi/2".into(),
            ));
        }
        if let Some(d) = self.d_pad {
            if d < 0.0 {
                return Err(Error::InvalidConfig("d_pad must be non-negative".into()));
            }
        }
        self.priors.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PlannerConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ConfigFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let cfg = file.into_config();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&ConfigFile::from_config(self))
            .expect("config serialization cannot fail");
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// On-disk schema: optional fields over the defaults, angles in degrees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub h: Option<f64>,
    pub omega: Option<f64>,
    pub gamma: Option<f64>,
    pub beta_prior: Option<f64>,
    pub phi: Option<f64>,
    pub k: Option<usize>,
    pub prior_radius_m: Option<f64>,
    pub realtime_radius_m: Option<f64>,
    pub alpha_deg: Option<f64>,
    pub beta_deg: Option<f64>,
    pub d_pad: Option<f64>,
    pub sample_spacing_m: Option<f64>,
    pub realtime_spacing_m: Option<f64>,
    pub cluster_gap_m: Option<f64>,
    pub tau: Option<f64>,
    pub tau_stop: Option<bool>,
    pub far_factor: Option<f64>,
    pub merge_always_union: Option<bool>,
    pub hull_regen_iou: Option<f64>,
    pub aspect: Option<f64>,
    pub densify_spacing_m: Option<f64>,
    pub completeness_thresholds_m: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub priors: Option<PriorTable>,
}

impl ConfigFile {
    pub fn into_config(self) -> PlannerConfig {
        let mut cfg = PlannerConfig::default();
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(
            h,
            omega,
            gamma,
            beta_prior,
            phi,
            k,
            prior_radius_m,
            realtime_radius_m,
            sample_spacing_m,
            realtime_spacing_m,
            cluster_gap_m,
            tau,
            tau_stop,
            far_factor,
            merge_always_union,
            hull_regen_iou,
            aspect,
            densify_spacing_m,
            completeness_thresholds_m,
            seed,
            priors
        );
        if let Some(a) = self.alpha_deg {
            cfg.alpha = a.to_radians();
        }
        if let Some(b) = self.beta_deg {
            cfg.beta = b.to_radians();
        }
        cfg.d_pad = self.d_pad.or(cfg.d_pad);
        cfg
    }

    pub fn from_config(cfg: &PlannerConfig) -> ConfigFile {
        ConfigFile {
            h: Some(cfg.h),
            omega: Some(cfg.omega),
            gamma: Some(cfg.gamma),
            beta_prior: Some(cfg.beta_prior),
            phi: Some(cfg.phi),
            k: Some(cfg.k),
            prior_radius_m: Some(cfg.prior_radius_m),
            realtime_radius_m: Some(cfg.realtime_radius_m),
            alpha_deg: Some(cfg.alpha.to_degrees()),
            beta_deg: Some(cfg.beta.to_degrees()),
            d_pad: cfg.d_pad,
            sample_spacing_m: Some(cfg.sample_spacing_m),
            realtime_spacing_m: Some(cfg.realtime_spacing_m),
            cluster_gap_m: Some(cfg.cluster_gap_m),
            tau: Some(cfg.tau),
            tau_stop: Some(cfg.tau_stop),
            far_factor: Some(cfg.far_factor),
            merge_always_union: Some(cfg.merge_always_union),
            hull_regen_iou: Some(cfg.hull_regen_iou),
            aspect: Some(cfg.aspect),
            densify_spacing_m: Some(cfg.densify_spacing_m),
            completeness_thresholds_m: Some(cfg.completeness_thresholds_m.clone()),
            seed: Some(cfg.seed),
            priors: Some(cfg.priors.clone()),
        }
    }
}
