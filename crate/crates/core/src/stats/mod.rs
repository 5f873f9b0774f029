//! Collision-time statistics and the goodness-of-fit machinery behind them.

mod collision;
mod gof;

pub use collision::*;
pub use gof::*;
