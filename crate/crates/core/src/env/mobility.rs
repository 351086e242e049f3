use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::topology::{HomeRegion, NetworkTopology, Point};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityParams {
    /// Constant user speed, m/s.
    pub speed: f64,
    /// Probability of drawing a fresh heading at the start of each slot.
    pub turn_probability: f64,
    /// Radius of each user's home circle, meters.
    pub region_radius: f64,
}

impl Default for MobilityParams {
    fn default() -> Self {
        MobilityParams {
            speed: 20.0,
            turn_probability: 0.3,
            region_radius: 250.0,
        }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(SimError::config("mobility.speed", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return Err(SimError::config(
                "mobility.turn_probability",
                "must lie in [0, 1]",
            ));
        }
        if !(self.region_radius.is_finite() && self.region_radius >= 0.0) {
            return Err(SimError::config(
                "mobility.region_radius",
                "must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Moves every user `speed * slot` meters, reflecting off its home circle.
///
/// Returns how many users drew a new heading this slot. Associations are
/// never touched.
pub fn step_mobility<R: Rng>(
    rng: &mut R,
    topology: &mut NetworkTopology,
    params: &MobilityParams,
    slot: f64,
) -> usize {
    let mut turns = 0;
    let step = params.speed * slot;
    for k in 0..topology.n_users() {
        // Always consume the same draws so the stream does not depend on outcomes.
        let turn = rng.random::<f64>() < params.turn_probability;
        let fresh = rng.random::<f64>() * TAU;
        if turn {
            topology.headings[k] = fresh;
            turns += 1;
        }
        if step > 0.0 {
            let (p, heading) = reflect_walk(
                topology.user_positions[k],
                topology.headings[k],
                step,
                &topology.home[k],
            );
            topology.user_positions[k] = p;
            topology.headings[k] = heading;
        }
    }
    turns
}

/// Walks `distance` meters from `start` along `heading`, specularly reflecting
/// at the boundary of `region`. Returns the end point and final heading.
pub fn reflect_walk(
    start: Point,
    heading: f64,
    distance: f64,
    region: &HomeRegion,
) -> (Point, f64) {
    let r = region.radius;
    if r <= 0.0 {
        return (start, heading);
    }
    let c = region.center;
    let (mut px, mut py) = (start.x - c.x, start.y - c.y);
    let (mut ux, mut uy) = (heading.cos(), heading.sin());
    let mut left = distance;
    for _ in 0..64 {
        let b = px * ux + py * uy;
        let cc = (px * px + py * py - r * r).min(0.0);
        let hit = -b + (b * b - cc).sqrt();
        if hit >= left {
            px += left * ux;
            py += left * uy;
            left = 0.0;
            break;
        }
        px += hit * ux;
        py += hit * uy;
        left -= hit;
        let (nx, ny) = (px / r, py / r);
        let dot = ux * nx + uy * ny;
        ux -= 2.0 * dot * nx;
        uy -= 2.0 * dot * ny;
    }
    if left > 0.0 {
        // Degenerate grazing chain; stop on the boundary.
        left = 0.0;
    }
    debug_assert_eq!(left, 0.0);
    let norm = px.hypot(py);
    if norm > r {
        px *= r / norm;
        py *= r / norm;
    }
    (Point::new(c.x + px, c.y + py), uy.atan2(ux))
}
