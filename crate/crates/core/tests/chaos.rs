use dache::chaos::*;
use dache::geometry::*;
use dache::par::Execution;
use dache::stats::random_ball;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lyapunov(arena: &Arena, ball: &Ball, horizon: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    estimate_lyapunov(arena, ball, LyapunovParams::default(), horizon, &mut rng).unwrap().lambda_hat
}

fn rotated(ball: &Ball, angle: f64) -> Ball {
    Ball { velocity: Vec2::from_angle(ball.velocity.angle() + angle) * ball.speed(), ..*ball }
}

#[test]
fn rectangle_is_far_below_sinai() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sinai = Arena::new(Shape::sinai(0.1)).unwrap();
    let chaotic = lyapunov(&sinai, &random_ball(&sinai, 0, 1.0, &mut rng), 2e4, 2);
    let rect = Arena::new(Shape::unit_square()).unwrap();
    let flat = lyapunov(&rect, &Ball::new(0, Vec2::new(0.3, 0.4), Vec2::new(1.0, 0.0)), 2e4, 3);
    let oblique = lyapunov(&rect, &random_ball(&rect, 0, 1.0, &mut rng), 2e4, 4);
    assert!(chaotic > 0.5, "sinai {chaotic}");
    assert!(flat.abs() < 0.05 * chaotic, "axis-aligned {flat} vs {chaotic}");
    assert!(oblique.abs() < 0.05 * chaotic, "oblique {oblique} vs {chaotic}");
}

#[test]
fn rotation_of_the_initial_velocity_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for arena in [Arena::new(Shape::default_stadium()).unwrap(), Arena::new(Shape::sinai(0.15)).unwrap()] {
        let ball = random_ball(&arena, 0, 1.0, &mut rng);
        let base = lyapunov(&arena, &ball, 1e5, 6);
        for (k, angle) in [0.7, 2.1, 4.0].into_iter().enumerate() {
            let other = lyapunov(&arena, &rotated(&ball, angle), 1e5, 7 + k as u64);
            assert!((other - base).abs() < 0.1 * base, "{:?}: {base} vs {other}", arena.shape());
        }
    }
}

#[test]
fn doubling_speed_doubles_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arena = Arena::new(Shape::sinai(0.1)).unwrap();
    let slow = random_ball(&arena, 0, 1.0, &mut rng);
    let fast = Ball { velocity: slow.velocity * 2.0, ..slow };
    // Independent perturbation streams, so this is not a pure time rescaling
    // of one run.
    let a = lyapunov(&arena, &slow, 5e4, 9);
    let b = lyapunov(&arena, &fast, 5e4, 10);
    assert!((b / a - 2.0).abs() < 0.2, "{a} -> {b}");
}

#[test]
fn mean_free_time_scales_inversely_with_speed() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let arena = place_obstacles(Shape::unit_square(), 3, 0.05, &mut rng).unwrap();
    let slow = measure_mean_free_time(&arena, 1.0, 2000, Execution::Parallel, &mut rng).unwrap();
    let fast = measure_mean_free_time(&arena, 2.0, 2000, Execution::Parallel, &mut rng).unwrap();
    assert!((fast.tau_hat / slow.tau_hat - 0.5).abs() < 0.05, "{} {}", slow.tau_hat, fast.tau_hat);
    assert!((slow.tau_hat / slow.tau_predicted - 1.0).abs() < 0.1, "{slow:?}");
    assert_eq!(slow.censored_trials, 0);
}

#[test]
fn chaotic_tables_have_positive_exponents() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for shape in [Shape::default_stadium(), Shape::sinai(0.1), Shape::sinai(0.25)] {
        let arena = Arena::new(shape).unwrap();
        let l = lyapunov(&arena, &random_ball(&arena, 0, 1.0, &mut rng), 2e4, 13);
        assert!(l > 0.1, "{shape:?}: {l}");
    }
}

#[test]
fn entropy_relation_holds_loosely() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for r in [0.05, 0.1] {
        let rel = ks_entropy_relation(r, 5e4, &mut rng).unwrap();
        assert!(rel.relative_gap < 0.25, "{rel:?}");
        assert_eq!(rel.rhs, -2.0 * f64::ln(r));
    }
}
