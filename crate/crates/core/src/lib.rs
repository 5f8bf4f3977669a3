//! Aerial path planning for urban scene updating.
//!
//! Plans a changeability-weighted *prior path* over a previously
//! reconstructed 2.5D scene, then simulates the flight against a hidden
//! second epoch: a geometric change oracle stands in for the image-matching
//! and multi-view-stereo stack, detected change areas trigger a real-time
//! next-best-view loop, and the mission emits the convex hulls of every
//! explored change area.
//!
//! Modules follow the pipeline:
//!
//! * [`scene`] — labeled prism scenes, surface sampling, epoch diffing
//! * [`geometry`] — hulls, clipping, prism IoU, frustum/occlusion visibility
//! * [`poisson`] / [`viewgen`] — candidate views on the safe-height plane
//! * [`changeability`] — the scoring heuristics
//! * [`prior`] — greedy view reduction and the TSP trajectory
//! * [`oracle`] — ground-truth change detection with optional noise
//! * [`realtime`] — the online mission loop
//! * [`baseline`] — the Region-Division grid sweep
//! * [`metrics`] / [`io`] / [`render`] — evaluation and artifacts

pub mod baseline;
pub mod changeability;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod poisson;
pub mod prior;
pub mod realtime;
pub mod render;
pub mod scene;
pub mod viewgen;

pub use config::PlannerConfig;
pub use error::{Error, Result};
pub use realtime::{run_mission, MissionResult};
pub use scene::{load_scene, Scene};
