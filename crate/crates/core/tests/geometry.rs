use dache::geometry::*;
use dache::stats::random_ball;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_arena(rng: &mut ChaCha8Rng) -> Arena {
    let shape = match rng.random_range(0..3) {
        0 => Shape::Rectangle { width: rng.random_range(0.5..2.0), height: rng.random_range(0.5..2.0) },
        1 => Shape::Stadium { length: rng.random_range(0.2..2.0), cap_radius: rng.random_range(0.3..0.8) },
        _ => Shape::sinai(rng.random_range(0.05..0.3)),
    };
    let count = rng.random_range(0..5);
    place_obstacles(shape, count, rng.random_range(0.02..0.1), rng).unwrap()
}

/// Which surface a point that has just left the free region crossed,
/// worked out from the shape's defining inequalities.
fn crossed(arena: &Arena, p: Vec2) -> Vec<Surface> {
    let mut out: Vec<Surface> = arena
        .obstacles()
        .iter()
        .filter(|o| (p.x - o.center.x).hypot(p.y - o.center.y) < o.radius)
        .map(|o| Surface::Obstacle(o.id))
        .collect();
    let rect = |w: f64, h: f64, out: &mut Vec<Surface>| {
        for (outside, id) in [(p.y < 0.0, 0), (p.x > w, 1), (p.y > h, 2), (p.x < 0.0, 3)] {
            if outside {
                out.push(Surface::Wall(id));
            }
        }
    };
    match *arena.shape() {
        Shape::Rectangle { width, height } => rect(width, height, &mut out),
        Shape::Sinai { side, .. } => rect(side, side, &mut out),
        Shape::Stadium { length, cap_radius: r } => {
            if p.x < r {
                if (p.x - r).hypot(p.y - r) > r {
                    out.push(Surface::Wall(3));
                }
            } else if p.x > r + length {
                if (p.x - r - length).hypot(p.y - r) > r {
                    out.push(Surface::Wall(1));
                }
            } else if p.y < 0.0 {
                out.push(Surface::Wall(0));
            } else if p.y > 2.0 * r {
                out.push(Surface::Wall(2));
            }
        }
    }
    out
}

#[test]
fn first_hit_matches_time_stepping() {
    const DT: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let arena = random_arena(&mut rng);
        let ball = random_ball(&arena, 0, rng.random_range(0.5..2.0), &mut rng);
        let impact = next_event(&ball, &arena).unwrap();
        let mut k = 1u64;
        let hit = loop {
            let p = ball.position + ball.velocity * (k as f64 * DT);
            let surfaces = crossed(&arena, p);
            if !surfaces.is_empty() {
                break surfaces;
            }
            k += 1;
        };
        let t = k as f64 * DT;
        assert!(hit.contains(&impact.surface), "case {case}: solver {:?}, stepping {hit:?}", impact.surface);
        assert!((impact.dt - t).abs() <= 1e-4, "case {case}: solver {}, stepping {t}", impact.dt);
    }
}

#[test]
fn impact_points_lie_on_their_surface() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let arena = random_arena(&mut rng);
        let mut ball = random_ball(&arena, 0, 1.0, &mut rng);
        for _ in 0..50 {
            let impact = next_event(&ball, &arena).unwrap();
            let p = ball.position + ball.velocity * impact.dt;
            let residual = match impact.surface {
                Surface::Obstacle(id) => {
                    let o = arena.obstacle(id).unwrap();
                    ((p - o.center).norm() - o.radius).abs()
                }
                Surface::Wall(_) => arena.shape().boundary_penetration(p).max(min_wall_gap(arena.shape(), p)),
            };
            assert!(residual <= 1e-9, "{impact:?} residual {residual}");
            apply_impact(&mut ball, &arena, &impact);
        }
    }
}

/// Distance from an interior point to the nearest outer wall.
fn min_wall_gap(shape: &Shape, p: Vec2) -> f64 {
    match *shape {
        Shape::Rectangle { width, height } => p.x.min(width - p.x).min(p.y).min(height - p.y).abs(),
        Shape::Sinai { side, .. } => p.x.min(side - p.x).min(p.y).min(side - p.y).abs(),
        Shape::Stadium { length, cap_radius: r } => {
            let x = p.x.clamp(r, r + length);
            (r - (p.x - x).hypot(p.y - r)).abs()
        }
    }
}

#[test]
fn long_trajectories_conserve_speed_and_stay_inside() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for shape in [Shape::default_stadium(), Shape::sinai(0.2), Shape::unit_square()] {
        let arena = place_obstacles(shape, 3, 0.05, &mut rng).unwrap();
        let mut ball = random_ball(&arena, 0, 1.0, &mut rng);
        let v0 = ball.speed();
        let mut drift: f64 = 0.0;
        let mut worst: f64 = 0.0;
        let mut last = ball.time;
        for _ in 0..20_000 {
            let impact = next_event(&ball, &arena).unwrap();
            // Sample the interior of the flight segment as well as its end.
            let mid = ball.position + ball.velocity * (impact.dt * rng.random::<f64>());
            worst = worst.max(arena.penetration(mid));
            apply_impact(&mut ball, &arena, &impact);
            assert!(ball.time > last, "event times must increase");
            last = ball.time;
            worst = worst.max(arena.penetration(ball.position));
            drift = drift.max((ball.speed() - v0).abs() / v0);
        }
        assert!(drift <= 1e-9, "{shape:?}: speed drift {drift}");
        assert!(worst <= 1e-9, "{shape:?}: penetration {worst}");
    }
}

#[test]
fn trajectories_are_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let arena = place_obstacles(Shape::default_stadium(), 4, 0.08, &mut rng).unwrap();
        let mut ball = random_ball(&arena, 0, 1.3, &mut rng);
        (0..5000)
            .map(|_| {
                let i = step(&mut ball, &arena).unwrap();
                (ball.time.to_bits(), i.surface, ball.position.x.to_bits(), ball.velocity.y.to_bits())
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

fn unit() -> impl Strategy<Value = Vec2> {
    (0.0..std::f64::consts::TAU).prop_map(Vec2::from_angle)
}

proptest! {
    #[test]
    fn reflect_is_an_isometric_involution(theta in 0.0..std::f64::consts::TAU, speed in 1e-3..1e3, n in unit()) {
        let v = Vec2::from_angle(theta) * speed;
        let r = reflect(v, n);
        prop_assert!((r.norm() - v.norm()).abs() <= 1e-12 * v.norm());
        let back = reflect(r, n);
        prop_assert!((back - v).norm() <= 1e-12 * v.norm());
        prop_assert!((r.dot(n) + v.dot(n)).abs() <= 1e-12 * v.norm());
    }

    #[test]
    fn advance_composes(seed in any::<u64>(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arena = random_arena(&mut rng);
        let ball = random_ball(&arena, 0, 1.0, &mut rng);
        let free = next_event(&ball, &arena).unwrap().dt;
        let (t1, t2) = (a * free / 2.0, b * free / 2.0);
        let once = advance(&ball, &arena, t1 + t2).unwrap();
        let twice = advance(&advance(&ball, &arena, t1).unwrap(), &arena, t2).unwrap();
        prop_assert!((once.position - twice.position).norm() <= 1e-12);
        prop_assert_eq!(once.velocity, ball.velocity);
        prop_assert_eq!(advance(&ball, &arena, 0.0).unwrap(), ball);
        let too_far = advance(&ball, &arena, free * 1.5);
        prop_assert!(
            matches!(too_far, Err(GeometryError::EventSkipped { .. })),
            "expected EventSkipped, got {:?}",
            too_far
        );
    }

    #[test]
    fn placed_arenas_satisfy_invariants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arena = random_arena(&mut rng);
        let obs = arena.obstacles();
        for (i, o) in obs.iter().enumerate() {
            prop_assert!(o.radius > 0.0);
            prop_assert!(arena.shape().admits_disk(o.center, o.radius));
            for q in &obs[i + 1..] {
                prop_assert!((o.center - q.center).norm() > o.radius + q.radius);
            }
        }
        let disks: f64 = obs.iter().map(|o| std::f64::consts::PI * o.radius * o.radius).sum();
        prop_assert!((arena.area() - (arena.shape().boundary_area() - disks)).abs() <= 1e-12);
        prop_assert!(arena.area() > 0.0);
    }
}
