//! First-collision time experiments and the closed-form laws they test.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gof::{self, ChiSquareReport};
use crate::geometry::{place_obstacles, step, Arena, Ball, GeometryError, Shape, Surface, Vec2};
use crate::par::{map_trials, Execution};

/// Minimum completed trials for a fit.
pub const MIN_SAMPLE: usize = 1_000;

/// Largest censored fraction tolerated by the acceptance statistics.
pub const MAX_CENSORED_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} completed samples, have {have}")]
    InsufficientSample { needed: usize, have: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Predicted collision rate with one disk of radius `r` for a ball of
/// speed `speed` in free area `area`.
pub fn predicted_rate(r: f64, speed: f64, area: f64) -> f64 {
    2.0 * r * speed / area
}

/// `(1 - e^{-λt})^n`: probability that `n` independent exponential
/// clocks of rate `λ` have all fired by `t`.
pub fn all_collide_cdf(lambda: f64, n: u32, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (-(-lambda * t).exp_m1()).powi(n as i32)
}

/// Density of [`all_collide_cdf`] in `t`.
pub fn all_collide_pdf(lambda: f64, n: u32, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let e = (-lambda * t).exp();
    n as f64 * lambda * e * (1.0 - e).powi(n as i32 - 1)
}

/// Mean of the maximum of `n` iid Exp(λ): `H_n / λ`.
pub fn expected_max_time(lambda: f64, n: u32) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum::<f64>() / lambda
}

/// Table layout for a first-collision experiment.
#[derive(Debug, Clone)]
pub enum Layout {
    /// One fixed table; the given obstacle ids are the targets.
    Fixed { arena: Arena, targets: Vec<u32> },
    /// A fresh random table per trial with `count` disks of `radius`;
    /// the first `targets` placed disks are the targets.
    Random { shape: Shape, count: usize, radius: f64, targets: usize },
}

impl Layout {
    fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Arena, Vec<u32>), GeometryError> {
        match self {
            Layout::Fixed { arena, targets } => Ok((arena.clone(), targets.clone())),
            Layout::Random { shape, count, radius, targets } => {
                let arena = place_obstacles(*shape, *count, *radius, rng)?;
                let first = matches!(shape, Shape::Sinai { .. }) as u32;
                Ok((arena, (first..first + *targets as u32).collect()))
            }
        }
    }

    /// Reference free area used for the rate prediction.
    fn reference_area(&self) -> Result<f64, GeometryError> {
        match self {
            Layout::Fixed { arena, .. } => Ok(arena.area()),
            Layout::Random { shape, count, radius, .. } => {
                let builtin = match *shape {
                    Shape::Sinai { disk_radius, .. } => std::f64::consts::PI * disk_radius * disk_radius,
                    _ => 0.0,
                };
                Ok(shape.boundary_area()
                    - builtin
                    - *count as f64 * std::f64::consts::PI * radius * radius)
            }
        }
    }

    fn target_radius(&self) -> f64 {
        match self {
            Layout::Fixed { arena, targets } => targets
                .first()
                .and_then(|&t| arena.obstacle(t))
                .map_or(0.0, |o| o.radius),
            Layout::Random { radius, targets, .. } => {
                if *targets == 0 {
                    0.0
                } else {
                    *radius
                }
            }
        }
    }

    fn obstacle_count(&self) -> usize {
        match self {
            Layout::Fixed { arena, .. } => arena.obstacles().len(),
            Layout::Random { shape, count, .. } => count + matches!(shape, Shape::Sinai { .. }) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub radius: f64,
    pub obstacles: usize,
    pub speed: f64,
    pub area: f64,
}

/// First-collision times, one per completed trial. For multi-target
/// layouts each time is the latest of the per-ball first hits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionSample {
    pub times: Vec<f64>,
    /// Per-trial record in trial order: `None` for a censored trial.
    pub trials: Vec<Option<f64>>,
    pub censored: usize,
    pub config: SampleConfig,
    pub lambda_predicted: f64,
    pub time_cap: f64,
    pub seed: u64,
}

impl CollisionSample {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.trials.len().max(1) as f64
    }

    pub fn mean(&self) -> f64 {
        gof::mean(&self.times)
    }
}

/// Time for a ball started at `ball` to hit `target`, or `None` if it
/// has not by `cap`.
pub fn first_hit_time(
    arena: &Arena,
    mut ball: Ball,
    target: u32,
    cap: f64,
) -> Result<Option<f64>, GeometryError> {
    let start = ball.time;
    loop {
        let impact = step(&mut ball, arena)?;
        if ball.time - start > cap {
            return Ok(None);
        }
        if impact.surface == Surface::Obstacle(target) {
            return Ok(Some(ball.time - start));
        }
    }
}

/// Uniform position over the free region and uniform direction.
pub fn random_ball<R: Rng + ?Sized>(arena: &Arena, id: u32, speed: f64, rng: &mut R) -> Ball {
    let p = arena.random_free_point(rng);
    let theta = rng.random_range(0.0..std::f64::consts::TAU);
    Ball::new(id, p, Vec2::from_angle(theta) * speed)
}

/// Run `trials` independent first-collision experiments. Each trial uses
/// one ball per target; the trial's time is the last of those first hits.
pub fn sample_first_collision<R: Rng + ?Sized>(
    layout: &Layout,
    speed: f64,
    trials: usize,
    time_cap: f64,
    exec: Execution,
    rng: &mut R,
) -> Result<CollisionSample, StatsError> {
    if !(speed > 0.0) || !(time_cap > 0.0) {
        return Err(StatsError::InvalidParameter(format!("speed {speed}, cap {time_cap}")));
    }
    let seed: u64 = rng.random();
    let area = layout.reference_area()?;
    let results = map_trials(exec, seed, trials, |_, trng| -> Result<Option<f64>, GeometryError> {
        let (arena, targets) = layout.build(trng)?;
        let mut worst: f64 = 0.0;
        for (i, &target) in targets.iter().enumerate() {
            let ball = random_ball(&arena, i as u32, speed, trng);
            if arena.obstacle(target).is_none() {
                return Ok(None);
            }
            match first_hit_time(&arena, ball, target, time_cap)? {
                Some(t) => worst = worst.max(t),
                None => return Ok(None),
            }
        }
        Ok(if targets.is_empty() { None } else { Some(worst) })
    });
    let trials: Vec<Option<f64>> = results.into_iter().collect::<Result<_, _>>()?;
    let times: Vec<f64> = trials.iter().flatten().copied().collect();
    let r = layout.target_radius();
    Ok(CollisionSample {
        censored: trials.len() - times.len(),
        times,
        trials,
        config: SampleConfig { radius: r, obstacles: layout.obstacle_count(), speed, area },
        lambda_predicted: predicted_rate(r, speed, area),
        time_cap,
        seed,
    })
}

/// Maximum-likelihood exponential fit with a KS check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub lambda_hat: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub sample_size: usize,
    pub passed: bool,
}

/// Fit `Exp(λ̂)` with `λ̂ = 1 / mean` and test the fit by KS at 5%, with
/// the critical value shrunk for the estimated parameter.
pub fn fit_exponential(times: &[f64]) -> Result<FitReport, StatsError> {
    if times.len() < MIN_SAMPLE {
        return Err(StatsError::InsufficientSample { needed: MIN_SAMPLE, have: times.len() });
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lambda_hat = 1.0 / gof::mean(&sorted);
    let ks_statistic = gof::ks_statistic(&sorted, |t| -(-lambda_hat * t.max(0.0)).exp_m1());
    let ks_critical = gof::ks_critical_estimated(sorted.len());
    Ok(FitReport {
        lambda_hat,
        ks_statistic,
        ks_critical,
        sample_size: sorted.len(),
        passed: ks_statistic < ks_critical,
    })
}

/// Discrete-to-continuous limit check for Bernoulli trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricLimitReport {
    pub p: f64,
    pub trials: usize,
    /// Observed frequency of success on the first step.
    pub first_step_frequency: f64,
    pub geometric: ChiSquareReport,
    /// Exponential fit of the first-success times spread uniformly over
    /// their unit step.
    pub exponential: FitReport,
}

/// `(1-p)^{k-1} p`.
pub fn geometric_pmf(p: f64, k: u64) -> f64 {
    (1.0 - p).powi((k - 1) as i32) * p
}

/// Simulate Bernoulli(`p`) step sequences until first success; test the
/// step counts against the geometric law (chi-square) and the continuous
/// times `k - U` against an exponential (KS).
pub fn geometric_limit_check<R: Rng + ?Sized>(
    p: f64,
    trials: usize,
    exec: Execution,
    rng: &mut R,
) -> Result<GeometricLimitReport, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidParameter(format!("p = {p}")));
    }
    if trials < MIN_SAMPLE {
        return Err(StatsError::InsufficientSample { needed: MIN_SAMPLE, have: trials });
    }
    let seed: u64 = rng.random();
    let draws: Vec<(u64, f64)> = map_trials(exec, seed, trials, |_, trng| {
        let mut k = 1u64;
        while !trng.random_bool(p) {
            k += 1;
        }
        (k, trng.random::<f64>())
    });

    // Bins 1..=K with expected count >= 5, then a tail bin.
    let n = trials as f64;
    let mut expected = Vec::new();
    let mut k = 1u64;
    let mut tail = 1.0;
    while n * geometric_pmf(p, k) >= 5.0 && n * (tail - geometric_pmf(p, k)) >= 5.0 {
        expected.push(n * geometric_pmf(p, k));
        tail -= geometric_pmf(p, k);
        k += 1;
    }
    let last = expected.len() as u64;
    expected.push(n * tail);
    let mut observed = vec![0u64; expected.len()];
    for &(k, _) in &draws {
        observed[(k.min(last + 1) - 1) as usize] += 1;
    }
    let geometric = gof::chi_square(&observed, &expected, 0, gof::ALPHA);

    let times: Vec<f64> = draws.iter().map(|&(k, u)| k as f64 - u).collect();
    let exponential = fit_exponential(&times)?;
    let first = draws.iter().filter(|&&(k, _)| k == 1).count() as f64 / n;
    Ok(GeometricLimitReport { p, trials, first_step_frequency: first, geometric, exponential })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exp_sample(rate: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln() / rate).collect()
    }

    #[test]
    fn cdf_examples() {
        let lambda = 0.3;
        for t in [0.0, 0.5, 2.0, 10.0] {
            assert!((all_collide_cdf(lambda, 1, t) - (1.0 - (-lambda * t).exp())).abs() < 1e-15);
        }
        assert!((all_collide_cdf(1.0, 2, std::f64::consts::LN_2) - 0.25).abs() < 1e-15);
        assert_eq!(all_collide_cdf(1.0, 3, 0.0), 0.0);
        assert!((all_collide_cdf(1.0, 3, 60.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cdf_monotonicity() {
        let ts: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        for w in ts.windows(2) {
            assert!(all_collide_cdf(0.7, 4, w[0]) <= all_collide_cdf(0.7, 4, w[1]));
        }
        assert!(all_collide_cdf(0.5, 4, 3.0) < all_collide_cdf(0.6, 4, 3.0));
        assert!(all_collide_cdf(0.5, 5, 3.0) < all_collide_cdf(0.5, 4, 3.0));
    }

    #[test]
    fn density_integrates_to_cdf() {
        // Composite Simpson on [0, 10].
        for n in [1u32, 2, 5] {
            let m = 20_000;
            let h = 10.0 / m as f64;
            let mut s = all_collide_pdf(1.0, n, 0.0) + all_collide_pdf(1.0, n, 10.0);
            for i in 1..m {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * all_collide_pdf(1.0, n, i as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!((integral - all_collide_cdf(1.0, n, 10.0)).abs() < 1e-6, "n={n}");
        }
    }

    #[test]
    fn harmonic_mean_matches_quadrature() {
        // E[max] = ∫ (1 - F(t)) dt, trapezoid to t = 400.
        let (lambda, n) = (0.1, 8);
        let h = 1e-3;
        let m = 400_000;
        let mut s = 0.0;
        for i in 0..=m {
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            s += w * (1.0 - all_collide_cdf(lambda, n, i as f64 * h));
        }
        assert!((s * h - expected_max_time(lambda, n)).abs() < 1e-6);
    }

    #[test]
    fn fit_accepts_exponential_rejects_uniform() {
        let xs = exp_sample(0.1, 10_000, 11);
        let fit = fit_exponential(&xs).unwrap();
        assert!(fit.passed, "{fit:?}");
        assert!((fit.lambda_hat - 0.1).abs() < 0.005);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let us: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..20.0)).collect();
        assert!(!fit_exponential(&us).unwrap().passed);

        assert!(matches!(
            fit_exponential(&xs[..999]),
            Err(StatsError::InsufficientSample { .. })
        ));
    }

    #[test]
    fn fit_report_passed_iff_below_critical() {
        for seed in 0..5 {
            let f = fit_exponential(&exp_sample(2.0, 2_000, seed)).unwrap();
            assert_eq!(f.passed, f.ks_statistic < f.ks_critical);
        }
    }

    #[test]
    fn geometric_small_p() {
        assert_eq!(geometric_pmf(0.01, 1), 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let r = geometric_limit_check(0.01, 100_000, Execution::Parallel, &mut rng).unwrap();
        assert!(r.geometric.passed, "{r:?}");
        assert!(r.exponential.passed, "{r:?}");
        assert!((r.first_step_frequency - 0.01).abs() < 0.002);
    }

    #[test]
    fn geometric_large_p_breaks_the_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let r = geometric_limit_check(0.5, 100_000, Execution::Parallel, &mut rng).unwrap();
        assert!(r.geometric.passed);
        assert!(!r.exponential.passed, "{r:?}");
    }

    #[test]
    fn removed_target_censors_everything() {
        let arena = Arena::new(Shape::unit_square()).unwrap();
        let layout = Layout::Fixed { arena, targets: vec![0] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_first_collision(&layout, 1.0, 50, 20.0, Execution::Sequential, &mut rng)
            .unwrap();
        assert_eq!(s.censored, 50);
        assert!(s.times.is_empty());
    }
}
