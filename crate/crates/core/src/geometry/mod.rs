//! Exact event-driven billiard dynamics in the plane.
//!
//! Balls are non-interacting point particles that move in straight lines
//! between collisions and reflect specularly off the outer boundary and off
//! disk scatterers. Collision times are solved in closed form (linear for
//! straight walls, quadratic for caps and disks), so speed is conserved to
//! rounding error and there is no time step.

mod arena;
mod dynamics;
mod vec2;

use thiserror::Error;

pub use arena::{
    place_obstacles, place_obstacles_with_budget, Arena, Obstacle, Shape, Surface, Wall,
    DEFAULT_PLACEMENT_BUDGET,
};
pub use dynamics::{advance, apply_impact, next_event, reflect, step, Ball, Impact, EPS_EVENT};
pub use vec2::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no future collision for ball {ball} at t={time}: arena geometry is corrupt")]
    NoEventFound { ball: u32, time: f64 },
    #[error("advance of {requested_dt} skips a collision due after {event_dt}")]
    EventSkipped { event_dt: f64, requested_dt: f64 },
    #[error(
        "could not place {requested} obstacles of radius {radius} ({placed} placed after {attempts} attempts)"
    )]
    PlacementInfeasible { requested: usize, placed: usize, radius: f64, attempts: usize },
    #[error("invalid arena: {0}")]
    InvalidArena(String),
}
