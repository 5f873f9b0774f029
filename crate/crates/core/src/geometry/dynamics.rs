use serde::{Deserialize, Serialize};

use super::arena::{Arena, Surface, Wall};
use super::vec2::Vec2;
use super::GeometryError;

/// Roots at or below this time are discarded as re-detections.
pub const EPS_EVENT: f64 = 1e-12;

/// Two walls hit within this time of each other are treated as one corner
/// event.
const CORNER_WINDOW: f64 = 1e-12;

/// Kinematic state of a point particle at simulated time `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub time: f64,
    /// Surface touched by the last reflection, excluded from the next
    /// root search (except concave caps, see `next_event`).
    pub last_hit: Option<Surface>,
}

impl Ball {
    pub fn new(id: u32, position: Vec2, velocity: Vec2) -> Self {
        Self { id, position, velocity, time: 0.0, last_hit: None }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Free flight by `dt`, ignoring the table.
    #[inline]
    pub fn drift(&self, dt: f64) -> Ball {
        Ball { position: self.position + self.velocity * dt, time: self.time + dt, ..*self }
    }

    /// Position at absolute time `t` assuming no event since `self.time`.
    #[inline]
    pub fn position_at(&self, t: f64) -> Vec2 {
        self.position + self.velocity * (t - self.time)
    }
}

/// The next collision of a ball: when, with what, and the unit normal(s)
/// to reflect against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impact {
    /// Time from the ball's current state until contact.
    pub dt: f64,
    pub surface: Surface,
    pub normal: Vec2,
    /// Second wall hit at the same instant (corner).
    pub corner: Option<(Surface, Vec2)>,
}

/// Specular reflection `v - 2 (v·n) n`.
#[inline]
pub fn reflect(v: Vec2, n: Vec2) -> Vec2 {
    v - n * (2.0 * v.dot(n))
}

/// Earliest future collision of `ball` with the boundary or any obstacle.
pub fn next_event(ball: &Ball, arena: &Arena) -> Result<Impact, GeometryError> {
    let p = ball.position;
    let v = ball.velocity;
    let a = v.norm_sq();
    if !(a > 0.0) || !p.is_finite() {
        return Err(GeometryError::NoEventFound { ball: ball.id, time: ball.time });
    }

    let mut best: Option<(f64, Surface, Vec2)> = None;
    let mut consider = |t: f64, s: Surface, n: Vec2| {
        if t > EPS_EVENT && best.is_none_or(|(bt, bs, _)| t < bt || (t == bt && s < bs)) {
            best = Some((t, s, n));
        }
    };

    let mut wall_hits: [Option<(f64, Surface, Vec2)>; 4] = [None; 4];
    for (i, wall) in arena.walls().iter().enumerate() {
        let s = Surface::Wall(i as u32);
        let hit = match *wall {
            Wall::Segment { a: w0, b: w1, normal } => {
                if ball.last_hit == Some(s) {
                    continue;
                }
                segment_hit(p, v, w0, w1, normal)
            }
            Wall::Arc { center, radius, side } => arc_hit(p, v, a, center, radius, side),
        };
        if let Some((t, n)) = hit {
            if let Some(slot) = wall_hits.get_mut(i) {
                *slot = Some((t, s, n));
            }
            consider(t, s, n);
        }
    }

    for o in arena.obstacles() {
        let s = Surface::Obstacle(o.id);
        if ball.last_hit == Some(s) {
            continue;
        }
        if let Some(t) = disk_hit(p, v, a, o.center, o.radius) {
            let n = (p + v * t - o.center).normalized();
            consider(t, s, n);
        }
    }

    let (dt, surface, normal) =
        best.ok_or(GeometryError::NoEventFound { ball: ball.id, time: ball.time })?;

    // A corner is two walls with non-parallel normals hit together; the
    // smooth segment/cap junction of a stadium has parallel normals there.
    let corner = match surface {
        Surface::Wall(_) => wall_hits.iter().flatten().find_map(|&(t, s, n)| {
            (s != surface && (t - dt).abs() <= CORNER_WINDOW * dt.max(1.0) && n.dot(normal).abs() < 0.5)
                .then_some((s, n))
        }),
        Surface::Obstacle(_) => None,
    };

    Ok(Impact { dt, surface, normal, corner })
}

/// Straight wall with inward normal `normal`. Only approaching motion
/// counts; a ball marginally outside and still leaving is sent back at once.
fn segment_hit(p: Vec2, v: Vec2, w0: Vec2, w1: Vec2, normal: Vec2) -> Option<(f64, Vec2)> {
    let vn = v.dot(normal);
    if vn >= 0.0 {
        return None;
    }
    let dist = (p - w0).dot(normal);
    let t = (dist / -vn).max(2.0 * EPS_EVENT);
    let hit = p + v * t;
    let seg = w1 - w0;
    let u = (hit - w0).dot(seg) / seg.norm_sq();
    const TOL: f64 = 1e-9;
    (-TOL..=1.0 + TOL).contains(&u).then_some((t, normal))
}

/// Concave cap: the ball is inside the circle, so the exit is the larger
/// root. After a reflection off the same cap the small root is ~0 and is
/// skipped by construction.
fn arc_hit(p: Vec2, v: Vec2, a: f64, center: Vec2, radius: f64, side: f64) -> Option<(f64, Vec2)> {
    let d = p - center;
    let b = d.dot(v);
    let c = d.norm_sq() - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = if b <= 0.0 { (-b + sq) / a } else { -c / (b + sq) };
    // Marginally outside and moving out: reflect now.
    let t = if c > 0.0 && b > 0.0 { 2.0 * EPS_EVENT } else { t };
    if !(t > EPS_EVENT) {
        return None;
    }
    let hit = p + v * t;
    if side * (hit.x - center.x) < -1e-9 {
        return None;
    }
    Some((t, (center - hit).normalized()))
}

/// Convex disk seen from outside: the smaller root, in the cancellation-free
/// form `c / (-b + sqrt(disc))`.
fn disk_hit(p: Vec2, v: Vec2, a: f64, center: Vec2, radius: f64) -> Option<f64> {
    let d = p - center;
    let b = d.dot(v);
    if b >= 0.0 {
        return None;
    }
    let c = d.norm_sq() - radius * radius;
    if c <= 0.0 {
        // Marginally inside and still approaching the center: reflect now.
        return Some(2.0 * EPS_EVENT);
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    Some(c / (-b + disc.sqrt()))
}

/// Free flight by `dt`, refusing to skip over a collision.
pub fn advance(ball: &Ball, arena: &Arena, dt: f64) -> Result<Ball, GeometryError> {
    if !(dt >= 0.0) {
        return Err(GeometryError::InvalidArena(format!("negative advance {dt}")));
    }
    if dt == 0.0 {
        return Ok(*ball);
    }
    let impact = next_event(ball, arena)?;
    if impact.dt < dt {
        return Err(GeometryError::EventSkipped { event_dt: impact.dt, requested_dt: dt });
    }
    Ok(ball.drift(dt))
}

/// Move `ball` to its next collision and reflect it there.
pub fn step(ball: &mut Ball, arena: &Arena) -> Result<Impact, GeometryError> {
    let impact = next_event(ball, arena)?;
    apply_impact(ball, arena, &impact);
    Ok(impact)
}

/// Advance to the contact point of `impact`, snap onto the surface, and
/// reflect.
pub fn apply_impact(ball: &mut Ball, arena: &Arena, impact: &Impact) {
    let mut pos = ball.position + ball.velocity * impact.dt;
    let mut normal = impact.normal;
    match impact.surface {
        Surface::Obstacle(id) => {
            if let Some(o) = arena.obstacle(id) {
                normal = (pos - o.center).normalized();
                pos = o.center + normal * o.radius;
            }
        }
        Surface::Wall(id) => {
            if let Some(w) = arena.walls().get(id as usize) {
                match *w {
                    Wall::Segment { a, normal: n, .. } => pos = pos - n * (pos - a).dot(n),
                    Wall::Arc { center, radius, .. } => {
                        normal = (center - pos).normalized();
                        pos = center - normal * radius;
                    }
                }
            }
        }
    }
    let mut v = reflect(ball.velocity, normal);
    if let Some((_, n2)) = impact.corner {
        v = reflect(v, n2);
    }
    ball.position = pos;
    ball.velocity = v;
    ball.time += impact.dt;
    ball.last_hit = Some(impact.surface);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn square() -> Arena {
        Arena::new(Shape::unit_square()).unwrap()
    }

    #[test]
    fn straight_to_right_wall() {
        let b = Ball::new(0, Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0));
        let hit = next_event(&b, &square()).unwrap();
        assert!((hit.dt - 0.5).abs() < 1e-15);
        assert_eq!(hit.surface, Surface::Wall(1));
    }

    #[test]
    fn straight_to_obstacle() {
        let arena =
            Arena::with_obstacles(Shape::unit_square(), [(Vec2::new(0.5, 0.5), 0.1)]).unwrap();
        let b = Ball::new(0, Vec2::new(0.2, 0.5), Vec2::new(1.0, 0.0));
        let hit = next_event(&b, &arena).unwrap();
        assert!((hit.dt - 0.2).abs() < 1e-12);
        assert_eq!(hit.surface, Surface::Obstacle(0));
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0)), Vec2::new(-1.0, 0.0));
        let v = reflect(Vec2::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2), Vec2::new(0.0, -1.0));
        assert!((v.x - FRAC_1_SQRT_2).abs() < 1e-15 && (v.y + FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn advance_examples() {
        let b = Ball::new(0, Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
        assert_eq!(b.drift(0.5).position, Vec2::new(0.5, 1.0));
        assert_eq!(b.drift(0.0), b);

        let arena = square();
        let b = Ball::new(0, Vec2::new(0.5, 0.5), Vec2::new(0.3, 0.1));
        assert_eq!(advance(&b, &arena, 0.0).unwrap(), b);
        let once = advance(&b, &arena, 1.0).unwrap();
        let twice = advance(&advance(&b, &arena, 0.4).unwrap(), &arena, 0.6).unwrap();
        assert!((once.position - twice.position).norm() < 1e-15);
        assert!(matches!(
            advance(&b, &arena, 2.0),
            Err(GeometryError::EventSkipped { .. })
        ));
    }

    #[test]
    fn corner_hit_reverses_both_components() {
        let mut b = Ball::new(0, Vec2::new(0.5, 0.5), Vec2::new(1.0, 1.0));
        let arena = square();
        let hit = step(&mut b, &arena).unwrap();
        assert!(hit.corner.is_some());
        assert!((b.velocity - Vec2::new(-1.0, -1.0)).norm() < 1e-15);
        let hit = step(&mut b, &arena).unwrap();
        assert!((hit.dt - 1.0).abs() < 1e-12);
        assert!(arena.penetration(b.position) < 1e-12);
    }

    #[test]
    fn stadium_cap_whispering_gallery_stays_inside() {
        // Skims along the right cap; consecutive hits on the same arc.
        let arena = Arena::new(Shape::default_stadium()).unwrap();
        let mut b = Ball::new(0, Vec2::new(2.5, 0.02), Vec2::new(1.0, 0.05));
        let mut same_cap_repeats = 0;
        let mut last = None;
        for _ in 0..10_000 {
            let hit = step(&mut b, &arena).unwrap();
            if last == Some(hit.surface) && hit.surface == Surface::Wall(1) {
                same_cap_repeats += 1;
            }
            last = Some(hit.surface);
            assert!(arena.penetration(b.position) < 1e-9);
        }
        assert!(same_cap_repeats > 0);
    }

    #[test]
    fn segment_cap_junction_is_smooth() {
        let arena = Arena::new(Shape::default_stadium()).unwrap();
        // Aim straight down at the junction x = 0.5 on the bottom wall.
        let mut b = Ball::new(0, Vec2::new(0.5, 0.5), Vec2::new(0.0, -1.0));
        let hit = step(&mut b, &arena).unwrap();
        assert!(hit.corner.is_none());
        assert!((b.velocity - Vec2::new(0.0, 1.0)).norm() < 1e-12);
    }
}
