//! Candidate view generation on the safe-height plane.
//!
//! View positions are Poisson disk samples of the target footprint dilated
//! by the padding margin; each position carries a five-camera rig (one nadir
//! view plus four views tilted 30 degrees from vertical toward the +x, -x,
//! +z and -z axes).

use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::geometry::{dilate_convex, Frustum};
use crate::math::{v3, Vec2, Vec3};
use crate::poisson::poisson_disk;
use serde::{Deserialize, Serialize};

/// Tilt of the four oblique rig cameras, from vertical.
pub const RIG_TILT: f64 = 30.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RigSlot {
    Nadir,
    PlusX,
    MinusX,
    PlusZ,
    MinusZ,
}

pub const RIG_SLOTS: [RigSlot; 5] = [
    RigSlot::Nadir,
    RigSlot::PlusX,
    RigSlot::MinusX,
    RigSlot::PlusZ,
    RigSlot::MinusZ,
];

impl RigSlot {
    /// Camera direction for this slot: straight down, or tilted 30 degrees
    /// from vertical toward the slot's axis.
    pub fn direction(self) -> Vec3 {
        let (s, c) = (RIG_TILT.sin(), RIG_TILT.cos());
        match self {
            RigSlot::Nadir => v3(0.0, -1.0, 0.0),
            RigSlot::PlusX => v3(s, -c, 0.0),
            RigSlot::MinusX => v3(-s, -c, 0.0),
            RigSlot::PlusZ => v3(0.0, -c, s),
            RigSlot::MinusZ => v3(0.0, -c, -s),
        }
    }
}

/// A 6-DoF candidate view: position on the safe-height plane plus one rig
/// orientation. Visited/unvisited status is tracked by the planners.
#[derive(Debug, Clone)]
pub struct View {
    pub id: u32,
    pub position: Vec3,
    pub orientation: Vec3,
    pub rig_slot: RigSlot,
    pub frustum: Frustum,
}

impl View {
    pub fn new(id: u32, position: Vec3, slot: RigSlot, cfg: &PlannerConfig) -> View {
        let orientation = slot.direction();
        let frustum = Frustum::new(
            position,
            orientation,
            cfg.horizontal_half_angle(),
            cfg.vertical_half_angle(),
            cfg.far_plane(),
        );
        View {
            id,
            position,
            orientation,
            rig_slot: slot,
            frustum,
        }
    }
}

/// Padding margin for candidate-view generation: `h * tan(beta - alpha) + d`.
pub fn padding(h: f64, alpha: f64, beta: f64, d: f64) -> Result<f64> {
    if beta <= alpha {
        return Err(Error::InvalidConfig(format!(
            "padding requires beta > alpha (got alpha {alpha}, beta {beta})"
        )));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&alpha)
        || beta >= std::f64::consts::FRAC_PI_2
        || d < 0.0
    {
        return Err(Error::InvalidConfig(
            "padding angles must satisfy 0 <= alpha < beta < pi/2 and d >= 0".into(),
        ));
    }
    Ok(h * (beta - alpha).tan() + d)
}

/// Generate the candidate view set over a target footprint: Poisson disk
/// positions (minimum separation `radius`) over the footprint dilated by the
/// padding margin, five rig views per position. Ids are assigned
/// sequentially from `id_start` and the result is deterministic for a fixed
/// seed.
pub fn generate_candidates(
    target_footprint: &[Vec2],
    cfg: &PlannerConfig,
    radius: f64,
    seed: u64,
    id_start: u32,
) -> Result<Vec<View>> {
    if target_footprint.len() < 3 {
        return Err(Error::DegenerateTarget);
    }
    let pad = padding(cfg.h, cfg.alpha, cfg.beta, cfg.d_pad.unwrap_or(radius))?;
    let region = dilate_convex(target_footprint, pad)?;
    let positions = poisson_disk(&region, radius, seed);
    let mut views = Vec::with_capacity(positions.len() * RIG_SLOTS.len());
    let mut id = id_start;
    for pos in positions {
        for slot in RIG_SLOTS {
            views.push(View::new(id, pos.at_height(cfg.h), slot, cfg));
            id += 1;
        }
    }
    Ok(views)
}
