//! Chaos diagnostics: Lyapunov exponent, mean free time, and the
//! entropy/free-time relation for a single-scatterer square.
//!
//! The Lyapunov exponent comes from a reference trajectory and a twin
//! started `delta0` away in phase space `(x, y, θ)`. The pair is compared
//! once per reference collision, in the middle of the following free
//! flight; when the separation passes `delta_max` (or a window grows past
//! `window_max` without doing so) the window's growth rate is recorded and
//! the twin is pulled back to `delta0` along the current separation.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{next_event, step, Arena, Ball, GeometryError, Shape, Surface, Vec2};
use crate::par::{map_trials, Execution};
use crate::stats::random_ball;

pub const DEFAULT_DELTA0: f64 = 1e-9;
pub const DEFAULT_DELTA_MAX: f64 = 1e-3;
pub const MIN_RENORMALIZATIONS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChaosError {
    #[error("only {got} renormalizations before the horizon, need {MIN_RENORMALIZATIONS}")]
    HorizonTooShort { got: usize },
    #[error("arena has no obstacles")]
    NoObstacles,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub delta0: f64,
    pub delta_max: f64,
    /// Longest window before a forced renormalization, in units of
    /// `sqrt(area) / speed`.
    pub window_max_lengths: f64,
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self { delta0: DEFAULT_DELTA0, delta_max: DEFAULT_DELTA_MAX, window_max_lengths: 1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Mean of `per_window_rates` weighted by `window_durations`, i.e. total
    /// log-growth over total window time.
    pub lambda_hat: f64,
    pub horizon: f64,
    pub renormalization_count: usize,
    pub per_window_rates: Vec<f64>,
    pub window_durations: Vec<f64>,
    /// Collisions of the reference trajectory with obstacles.
    pub obstacle_hits: usize,
    /// Windows abandoned because the pair hit different surfaces.
    pub split_windows: usize,
}

#[derive(Debug, Clone, Copy)]
struct Deviation {
    dx: Vec2,
    dtheta: f64,
}

impl Deviation {
    fn norm(&self) -> f64 {
        (self.dx.norm_sq() + self.dtheta * self.dtheta).sqrt()
    }

    fn scaled(&self, k: f64) -> Deviation {
        Deviation { dx: self.dx * k, dtheta: self.dtheta * k }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

fn displaced(base: &Ball, d: Deviation) -> Ball {
    let speed = base.speed();
    let theta = base.velocity.angle() + d.dtheta;
    Ball {
        position: base.position + d.dx,
        velocity: Vec2::from_angle(theta) * speed,
        ..*base
    }
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R) -> Deviation {
    // Uniform on the unit sphere in (x, y, θ).
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let s = (1.0 - z * z).sqrt();
    Deviation { dx: Vec2::new(s * phi.cos(), s * phi.sin()), dtheta: z }
}

/// Paired-trajectory Lyapunov estimate over `horizon` simulated time.
pub fn estimate_lyapunov<R: Rng + ?Sized>(
    arena: &Arena,
    initial: &Ball,
    params: LyapunovParams,
    horizon: f64,
    rng: &mut R,
) -> Result<LyapunovEstimate, ChaosError> {
    let LyapunovParams { delta0, delta_max, window_max_lengths } = params;
    if !(delta0 > 0.0 && delta_max > delta0) || !(horizon > 0.0) {
        return Err(ChaosError::InvalidParameter(format!(
            "delta0={delta0}, delta_max={delta_max}, horizon={horizon}"
        )));
    }
    let speed = initial.speed();
    if !(speed > 0.0) {
        return Err(ChaosError::InvalidParameter("zero speed".into()));
    }
    let window_max = window_max_lengths * arena.area().sqrt() / speed;
    let t_end = initial.time + horizon;

    let mut reference = *initial;
    let mut direction = random_direction(rng);
    let mut twin = displaced(&reference, direction.scaled(delta0));
    let mut window_start = reference.time;
    let mut rates = Vec::new();
    let mut durations = Vec::new();
    let mut obstacle_hits = 0usize;
    let mut split_windows = 0usize;

    loop {
        let hit = step(&mut reference, arena)?;
        if reference.time >= t_end {
            break;
        }
        if matches!(hit.surface, Surface::Obstacle(_)) {
            obstacle_hits += 1;
        }
        step(&mut twin, arena)?;

        let leg = next_event(&reference, arena)?.dt;
        let check_time = reference.time + 0.5 * leg;
        let ref_mid = reference.drift(0.5 * leg);

        if twin.last_hit != reference.last_hit {
            // The pair left the linear regime through a different surface;
            // drop this window and restart the twin from the reference.
            split_windows += 1;
            twin = Ball { last_hit: reference.last_hit, ..displaced(&ref_mid, direction.scaled(delta0)) };
            window_start = check_time;
            continue;
        }

        let dev = Deviation {
            dx: twin.position_at(check_time) - ref_mid.position,
            dtheta: wrap_angle(twin.velocity.angle() - ref_mid.velocity.angle()),
        };
        let sep = dev.norm();
        let elapsed = check_time - window_start;
        if sep > delta_max || elapsed >= window_max {
            if elapsed > 0.0 && sep > 0.0 {
                rates.push((sep / delta0).ln() / elapsed);
                durations.push(elapsed);
            }
            if sep > 0.0 {
                direction = dev.scaled(1.0 / sep);
            }
            twin = Ball { last_hit: reference.last_hit, ..displaced(&ref_mid, direction.scaled(delta0)) };
            window_start = check_time;
        }
    }

    if rates.len() < MIN_RENORMALIZATIONS {
        return Err(ChaosError::HorizonTooShort { got: rates.len() });
    }
    let lambda_hat = duration_weighted_mean(&rates, &durations);
    Ok(LyapunovEstimate {
        lambda_hat,
        horizon,
        renormalization_count: rates.len(),
        per_window_rates: rates,
        window_durations: durations,
        obstacle_hits,
        split_windows,
    })
}

/// `sum(rate * duration) / sum(duration)`.
pub fn duration_weighted_mean(rates: &[f64], durations: &[f64]) -> f64 {
    let growth: f64 = rates.iter().zip(durations).map(|(r, d)| r * d).sum();
    growth / durations.iter().sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFreeTime {
    pub tau_hat: f64,
    pub sample_count: usize,
    pub tau_predicted: f64,
    /// Trials that never completed their intervals before the cap.
    pub censored_trials: usize,
}

/// `A / (2 r n |v|)`: mean time between obstacle hits for `n` disks of
/// radius `r` in free area `A` at speed `|v|`.
pub fn predicted_mean_free_time(area: f64, radius: f64, n: usize, speed: f64) -> f64 {
    area / (2.0 * radius * n as f64 * speed)
}

/// Intervals recorded per trajectory.
pub const INTERVALS_PER_TRIAL: usize = 10;

/// Mean time between successive obstacle hits (walls are reflectors
/// only), from `trials` trajectories started uniformly in phase space.
/// The flight before the first hit is discarded.
pub fn measure_mean_free_time<R: Rng + ?Sized>(
    arena: &Arena,
    speed: f64,
    trials: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<MeanFreeTime, ChaosError> {
    let obstacles = arena.obstacles();
    let Some(first) = obstacles.first() else {
        return Err(ChaosError::NoObstacles);
    };
    let radius = first.radius;
    if obstacles.iter().any(|o| o.radius != radius) {
        return Err(ChaosError::InvalidParameter("obstacle radii differ".into()));
    }
    let tau_predicted = predicted_mean_free_time(arena.area(), radius, obstacles.len(), speed);
    let cap = 1000.0 * tau_predicted * INTERVALS_PER_TRIAL as f64;
    let seed: u64 = rng.random();
    let per_trial = map_trials(exec, seed, trials, |i, trng| -> Result<Option<Vec<f64>>, GeometryError> {
        let mut ball = random_ball(arena, i as u32, speed, trng);
        let start = ball.time;
        let mut last_hit: Option<f64> = None;
        let mut intervals = Vec::with_capacity(INTERVALS_PER_TRIAL);
        while intervals.len() < INTERVALS_PER_TRIAL {
            let hit = step(&mut ball, arena)?;
            if ball.time - start > cap {
                return Ok(None);
            }
            if let Surface::Obstacle(_) = hit.surface {
                if let Some(prev) = last_hit {
                    intervals.push(ball.time - prev);
                }
                last_hit = Some(ball.time);
            }
        }
        Ok(Some(intervals))
    });
    let mut all = Vec::new();
    let mut censored_trials = 0;
    for r in per_trial {
        match r? {
            Some(v) => all.extend(v),
            None => censored_trials += 1,
        }
    }
    if all.is_empty() {
        return Err(ChaosError::InvalidParameter("no completed intervals".into()));
    }
    Ok(MeanFreeTime {
        tau_hat: all.iter().sum::<f64>() / all.len() as f64,
        sample_count: all.len(),
        tau_predicted,
        censored_trials,
    })
}

/// Both sides of `<τ> h = -2 ln R` for a single central disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRelation {
    pub disk_radius: f64,
    pub tau_hat: f64,
    pub lambda_hat: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub relative_gap: f64,
}

/// `-2 ln R`.
pub fn entropy_relation_rhs(disk_radius: f64) -> f64 {
    -2.0 * disk_radius.ln()
}

/// Measure `<τ> λ` in a unit Sinai square of central radius `disk_radius`
/// from one long trajectory of length `horizon` and compare with
/// `-2 ln R`. `<τ>` is the reference trajectory's time per disk hit.
pub fn ks_entropy_relation<R: Rng + ?Sized>(
    disk_radius: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<EntropyRelation, ChaosError> {
    if !(disk_radius > 0.0 && disk_radius < 0.25) {
        return Err(ChaosError::InvalidParameter(format!(
            "relation needs 0 < R < 0.25, got {disk_radius}"
        )));
    }
    let arena = Arena::new(Shape::sinai(disk_radius))?;
    let ball = random_ball(&arena, 0, 1.0, rng);
    let est = estimate_lyapunov(&arena, &ball, LyapunovParams::default(), horizon, rng)?;
    if est.obstacle_hits == 0 {
        return Err(ChaosError::NoObstacles);
    }
    let tau_hat = horizon / est.obstacle_hits as f64;
    let lhs = tau_hat * est.lambda_hat;
    let rhs = entropy_relation_rhs(disk_radius);
    Ok(EntropyRelation {
        disk_radius,
        tau_hat,
        lambda_hat: est.lambda_hat,
        lhs,
        rhs,
        relative_gap: (lhs - rhs).abs() / rhs,
    })
}

/// Mean Lyapunov estimate over `seeds` independent random tables of
/// `count` disks of radius `radius`, each with a random start.
pub fn mean_lyapunov_over_layouts(
    shape: Shape,
    count: usize,
    radius: f64,
    horizon: f64,
    seeds: usize,
    base_seed: u64,
    exec: Execution,
) -> Result<f64, ChaosError> {
    let runs = map_trials(exec, base_seed, seeds, |_, rng| -> Result<f64, ChaosError> {
        let arena = crate::geometry::place_obstacles(shape, count, radius, rng)?;
        let ball = random_ball(&arena, 0, 1.0, rng);
        Ok(estimate_lyapunov(&arena, &ball, LyapunovParams::default(), horizon, rng)?.lambda_hat)
    });
    let values: Vec<f64> = runs.into_iter().collect::<Result<_, _>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
