use dache::geometry::Shape;
use dache::par::Execution;
use dache::stats::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean_first_hit(shape: Shape, speed: f64, seed: u64) -> (f64, CollisionSample) {
    let layout = Layout::Random { shape, count: 1, radius: 0.05, targets: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sample_first_collision(&layout, speed, 10_000, 5000.0, Execution::Parallel, &mut rng).unwrap();
    (s.mean(), s)
}

#[test]
fn predicted_rate_examples() {
    assert_eq!(predicted_rate(0.05, 2.0, 1.0), 0.2);
    assert!((1.0 / predicted_rate(0.05, 2.0, 1.0) - 5.0).abs() < 1e-12);
    let (_, s) = mean_first_hit(Shape::unit_square(), 2.0, 0);
    let free = 1.0 - std::f64::consts::PI * 0.05 * 0.05;
    assert!((s.lambda_predicted - 0.2 / free).abs() < 1e-12);
    assert_eq!(s.trials.len(), 10_000);
    assert_eq!(s.times.len() + s.censored, 10_000);
}

#[test]
fn doubling_speed_halves_the_mean() {
    let (slow, _) = mean_first_hit(Shape::unit_square(), 1.0, 1);
    let (fast, _) = mean_first_hit(Shape::unit_square(), 2.0, 2);
    assert!((fast / slow - 0.5).abs() < 0.05, "{slow} {fast}");
}

#[test]
fn doubling_area_doubles_the_mean() {
    let side = std::f64::consts::SQRT_2;
    let (small, _) = mean_first_hit(Shape::unit_square(), 1.0, 3);
    let (large, _) = mean_first_hit(Shape::Rectangle { width: side, height: side }, 1.0, 4);
    assert!((large / small - 2.0).abs() < 0.2, "{small} {large}");
}

#[test]
fn all_collide_cdf_is_monotone() {
    for &n in &[1u32, 2, 5, 8] {
        let mut prev = 0.0;
        for k in 0..200 {
            let t = k as f64 * 0.25;
            let c = all_collide_cdf(0.3, n, t);
            assert!(c >= prev);
            assert!(all_collide_cdf(0.4, n, t) >= c);
            assert!(all_collide_cdf(0.3, n + 1, t) <= c);
            prev = c;
        }
        assert_eq!(all_collide_cdf(0.3, n, 0.0), 0.0);
        assert!(all_collide_cdf(0.3, n, 500.0) > 1.0 - 1e-12);
    }
}

#[test]
fn fitting_exponential_draws() {
    // Inverse-transform draws from Exp(0.5) should pass in most seeds.
    use rand::Rng;
    let mut passes = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let xs: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln() / 0.5).collect();
        let fit = fit_exponential(&xs).unwrap();
        assert!((fit.lambda_hat - 0.5).abs() < 0.03);
        passes += usize::from(fit.passed);
    }
    assert!(passes >= 17, "{passes}/20");
}
