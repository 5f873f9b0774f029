use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vec2::Vec2;
use super::GeometryError;
use crate::crypto::KeyId;

/// Rejections allowed before obstacle placement gives up.
pub const DEFAULT_PLACEMENT_BUDGET: usize = 100_000;

/// Boundary geometry of a billiard table.
///
/// Coordinates put the lower-left corner of the bounding box at the origin.
/// A stadium of straight length `L` and cap radius `ρ` spans
/// `[0, L + 2ρ] × [0, 2ρ]`, with cap centers at `(ρ, ρ)` and `(ρ + L, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rectangle { width: f64, height: f64 },
    Stadium { length: f64, cap_radius: f64 },
    /// Square of side `side` with a fixed, keyless central scatterer.
    Sinai { side: f64, disk_radius: f64 },
}

impl Default for Shape {
    fn default() -> Self {
        Shape::unit_square()
    }
}

impl Shape {
    pub const fn unit_square() -> Self {
        Shape::Rectangle { width: 1.0, height: 1.0 }
    }

    /// 2×1 straight section with caps of radius 0.5.
    pub const fn default_stadium() -> Self {
        Shape::Stadium { length: 2.0, cap_radius: 0.5 }
    }

    pub const fn sinai(disk_radius: f64) -> Self {
        Shape::Sinai { side: 1.0, disk_radius }
    }

    /// Area enclosed by the outer boundary, scatterers not subtracted.
    pub fn boundary_area(&self) -> f64 {
        match *self {
            Shape::Rectangle { width, height } => width * height,
            Shape::Stadium { length, cap_radius } => {
                2.0 * cap_radius * length + PI * cap_radius * cap_radius
            }
            Shape::Sinai { side, .. } => side * side,
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match *self {
            Shape::Rectangle { width, height } => (Vec2::ZERO, Vec2::new(width, height)),
            Shape::Stadium { length, cap_radius } => (
                Vec2::ZERO,
                Vec2::new(length + 2.0 * cap_radius, 2.0 * cap_radius),
            ),
            Shape::Sinai { side, .. } => (Vec2::ZERO, Vec2::new(side, side)),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Shape::Rectangle { width, height } if ok(width) && ok(height) => Ok(()),
            Shape::Stadium { length, cap_radius } if ok(length) && ok(cap_radius) => Ok(()),
            Shape::Sinai { side, disk_radius } if ok(side) && ok(disk_radius) => {
                if 2.0 * disk_radius >= side {
                    Err(GeometryError::InvalidArena(format!(
                        "central disk radius {disk_radius} does not fit in side {side}"
                    )))
                } else {
                    Ok(())
                }
            }
            _ => Err(GeometryError::InvalidArena(format!(
                "non-positive or non-finite dimension in {self:?}"
            ))),
        }
    }

    /// Whether a disk of radius `r` centred at `c` lies inside the outer
    /// boundary (touching allowed).
    pub fn admits_disk(&self, c: Vec2, r: f64) -> bool {
        match *self {
            Shape::Rectangle { width, height } => {
                c.x >= r && c.x <= width - r && c.y >= r && c.y <= height - r
            }
            Shape::Sinai { side, .. } => c.x >= r && c.x <= side - r && c.y >= r && c.y <= side - r,
            Shape::Stadium { length, cap_radius } => {
                stadium_core_distance(c, length, cap_radius) + r <= cap_radius
            }
        }
    }

    /// How far `p` lies outside the outer boundary (0 when inside).
    pub fn boundary_penetration(&self, p: Vec2) -> f64 {
        match *self {
            Shape::Rectangle { width, height } => rect_penetration(p, width, height),
            Shape::Sinai { side, .. } => rect_penetration(p, side, side),
            Shape::Stadium { length, cap_radius } => {
                (stadium_core_distance(p, length, cap_radius) - cap_radius).max(0.0)
            }
        }
    }

    fn walls(&self) -> Vec<Wall> {
        match *self {
            Shape::Rectangle { width, height } => rect_walls(width, height),
            Shape::Sinai { side, .. } => rect_walls(side, side),
            Shape::Stadium { length, cap_radius: rho } => vec![
                Wall::Segment {
                    a: Vec2::new(rho, 0.0),
                    b: Vec2::new(rho + length, 0.0),
                    normal: Vec2::new(0.0, 1.0),
                },
                Wall::Arc { center: Vec2::new(rho + length, rho), radius: rho, side: 1.0 },
                Wall::Segment {
                    a: Vec2::new(rho + length, 2.0 * rho),
                    b: Vec2::new(rho, 2.0 * rho),
                    normal: Vec2::new(0.0, -1.0),
                },
                Wall::Arc { center: Vec2::new(rho, rho), radius: rho, side: -1.0 },
            ],
        }
    }
}

fn rect_penetration(p: Vec2, w: f64, h: f64) -> f64 {
    (-p.x).max(p.x - w).max(-p.y).max(p.y - h).max(0.0)
}

fn stadium_core_distance(p: Vec2, length: f64, rho: f64) -> f64 {
    let x = p.x.clamp(rho, rho + length);
    (p - Vec2::new(x, rho)).norm()
}

fn rect_walls(w: f64, h: f64) -> Vec<Wall> {
    vec![
        Wall::Segment { a: Vec2::new(0.0, 0.0), b: Vec2::new(w, 0.0), normal: Vec2::new(0.0, 1.0) },
        Wall::Segment { a: Vec2::new(w, 0.0), b: Vec2::new(w, h), normal: Vec2::new(-1.0, 0.0) },
        Wall::Segment { a: Vec2::new(w, h), b: Vec2::new(0.0, h), normal: Vec2::new(0.0, -1.0) },
        Wall::Segment { a: Vec2::new(0.0, h), b: Vec2::new(0.0, 0.0), normal: Vec2::new(1.0, 0.0) },
    ]
}

/// A piece of the outer boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wall {
    /// Straight wall from `a` to `b`; `normal` points into the table.
    Segment { a: Vec2, b: Vec2, normal: Vec2 },
    /// Circular cap seen from inside. Only the half with
    /// `side * (x - center.x) >= 0` belongs to the boundary.
    Arc { center: Vec2, radius: f64, side: f64 },
}

/// Which surface an event touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Surface {
    Wall(u32),
    Obstacle(u32),
}

impl Surface {
    pub fn kind(&self) -> &'static str {
        match self {
            Surface::Wall(_) => "wall",
            Surface::Obstacle(_) => "obstacle",
        }
    }

    pub fn id(&self) -> u32 {
        match *self {
            Surface::Wall(id) | Surface::Obstacle(id) => id,
        }
    }
}

/// Disk scatterer. Holds the keys it can open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub center: Vec2,
    pub radius: f64,
    pub key_ring: BTreeSet<KeyId>,
}

impl Obstacle {
    pub fn new(id: u32, center: Vec2, radius: f64) -> Self {
        Self { id, center, radius, key_ring: BTreeSet::new() }
    }

    pub fn holds(&self, key: KeyId) -> bool {
        self.key_ring.contains(&key)
    }
}

/// Billiard table: outer boundary plus disk scatterers.
///
/// Immutable once built (apart from key-ring installation during epoch
/// setup), so a single arena can be shared across concurrent trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Arena {
    shape: Shape,
    walls: Vec<Wall>,
    obstacles: Vec<Obstacle>,
    area: f64,
}

impl Arena {
    /// Bare table. A Sinai shape comes with its central disk as obstacle 0.
    pub fn new(shape: Shape) -> Result<Self, GeometryError> {
        Self::with_obstacles(shape, Vec::<(Vec2, f64)>::new())
    }

    /// Table with the given extra disks, ids assigned in order after any
    /// built-in scatterer. Fails if a disk crosses the boundary or overlaps
    /// another disk.
    pub fn with_obstacles<I>(shape: Shape, disks: I) -> Result<Self, GeometryError>
    where
        I: IntoIterator<Item = (Vec2, f64)>,
    {
        shape.validate()?;
        let mut obstacles = builtin_obstacles(&shape);
        for (center, radius) in disks {
            let id = obstacles.len() as u32;
            if !(radius.is_finite() && radius > 0.0) || !center.is_finite() {
                return Err(GeometryError::InvalidArena(format!(
                    "obstacle {id}: bad center {center:?} or radius {radius}"
                )));
            }
            if !shape.admits_disk(center, radius) {
                return Err(GeometryError::InvalidArena(format!(
                    "obstacle {id} at {center:?} (r={radius}) crosses the boundary"
                )));
            }
            if let Some(o) = obstacles.iter().find(|o| overlaps(o, center, radius)) {
                return Err(GeometryError::InvalidArena(format!(
                    "obstacle {id} overlaps obstacle {}",
                    o.id
                )));
            }
            obstacles.push(Obstacle::new(id, center, radius));
        }
        let area = shape.boundary_area()
            - obstacles.iter().map(|o| PI * o.radius * o.radius).sum::<f64>();
        if area <= 0.0 {
            return Err(GeometryError::InvalidArena("no free area left".into()));
        }
        Ok(Self { walls: shape.walls(), shape, obstacles, area })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn obstacle(&self, id: u32) -> Option<&Obstacle> {
        self.obstacles.get(id as usize)
    }

    /// Free area: boundary area minus all scatterer disks.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// Replace every key ring with the one `ring_of` returns for that id.
    pub fn install_key_rings(&mut self, mut ring_of: impl FnMut(u32) -> BTreeSet<KeyId>) {
        for o in &mut self.obstacles {
            o.key_ring = ring_of(o.id);
        }
    }

    /// Largest distance by which `p` sits outside the free region.
    pub fn penetration(&self, p: Vec2) -> f64 {
        self.obstacles
            .iter()
            .map(|o| (o.radius - (p - o.center).norm()).max(0.0))
            .fold(self.shape.boundary_penetration(p), f64::max)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.penetration(p) == 0.0
    }

    /// Point drawn uniformly from the free region. Requires the free
    /// region to be non-negligible (guaranteed by construction).
    pub fn random_free_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let (lo, hi) = self.shape.bounding_box();
        loop {
            let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
            if self.shape.boundary_penetration(p) == 0.0
                && self.obstacles.iter().all(|o| (p - o.center).norm() > o.radius)
            {
                return p;
            }
        }
    }
}

fn builtin_obstacles(shape: &Shape) -> Vec<Obstacle> {
    match *shape {
        Shape::Sinai { side, disk_radius } => {
            vec![Obstacle::new(0, Vec2::new(side / 2.0, side / 2.0), disk_radius)]
        }
        _ => Vec::new(),
    }
}

fn overlaps(o: &Obstacle, center: Vec2, radius: f64) -> bool {
    (o.center - center).norm() <= o.radius + radius
}

/// Rejection-sample `count` disks of radius `radius` inside `shape`.
///
/// Each center is uniform over the admissible centers given the disks
/// already placed.
pub fn place_obstacles<R: Rng + ?Sized>(
    shape: Shape,
    count: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Arena, GeometryError> {
    place_obstacles_with_budget(shape, count, radius, rng, DEFAULT_PLACEMENT_BUDGET)
}

pub fn place_obstacles_with_budget<R: Rng + ?Sized>(
    shape: Shape,
    count: usize,
    radius: f64,
    rng: &mut R,
    budget: usize,
) -> Result<Arena, GeometryError> {
    shape.validate()?;
    if count == 0 {
        return Arena::new(shape);
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(GeometryError::InvalidArena(format!("obstacle radius {radius}")));
    }
    let infeasible = |placed: usize, attempts: usize| GeometryError::PlacementInfeasible {
        requested: count,
        placed,
        radius,
        attempts,
    };
    let builtin = builtin_obstacles(&shape);
    let taken: f64 = builtin.iter().map(|o| PI * o.radius * o.radius).sum();
    if taken + count as f64 * PI * radius * radius >= shape.boundary_area() {
        return Err(infeasible(0, 0));
    }
    let (lo, hi) = shape.bounding_box();
    let (lo, hi) = (lo + Vec2::new(radius, radius), hi - Vec2::new(radius, radius));
    if lo.x > hi.x || lo.y > hi.y {
        return Err(infeasible(0, 0));
    }

    let mut all = builtin;
    let mut rejections = 0usize;
    let mut attempts = 0usize;
    while all.len() < count + builtin_len(&shape) {
        attempts += 1;
        let c = Vec2::new(sample(rng, lo.x, hi.x), sample(rng, lo.y, hi.y));
        if shape.admits_disk(c, radius) && !all.iter().any(|o| overlaps(o, c, radius)) {
            let id = all.len() as u32;
            all.push(Obstacle::new(id, c, radius));
        } else {
            rejections += 1;
            if rejections >= budget {
                return Err(infeasible(all.len() - builtin_len(&shape), attempts));
            }
        }
    }
    let extra: Vec<_> = all
        .into_iter()
        .skip(builtin_len(&shape))
        .map(|o| (o.center, o.radius))
        .collect();
    Arena::with_obstacles(shape, extra)
}

fn builtin_len(shape: &Shape) -> usize {
    matches!(shape, Shape::Sinai { .. }) as usize
}

fn sample<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn free_area_matches_closed_form() {
        let a = Arena::new(Shape::unit_square()).unwrap();
        assert_eq!(a.area(), 1.0);

        let s = Arena::new(Shape::default_stadium()).unwrap();
        assert!((s.area() - (2.0 + PI * 0.25)).abs() < 1e-12);

        let sinai = Arena::new(Shape::sinai(0.1)).unwrap();
        assert_eq!(sinai.obstacles().len(), 1);
        assert!(sinai.obstacles()[0].key_ring.is_empty());
        assert!((sinai.area() - (1.0 - PI * 0.01)).abs() < 1e-12);

        let two = Arena::with_obstacles(
            Shape::unit_square(),
            [(Vec2::new(0.25, 0.25), 0.1), (Vec2::new(0.75, 0.75), 0.05)],
        )
        .unwrap();
        assert!((two.area() - (1.0 - PI * (0.01 + 0.0025))).abs() < 1e-12);
    }

    #[test]
    fn rejects_overlap_and_wall_crossing() {
        let err = Arena::with_obstacles(
            Shape::unit_square(),
            [(Vec2::new(0.5, 0.5), 0.1), (Vec2::new(0.6, 0.5), 0.1)],
        );
        assert!(matches!(err, Err(GeometryError::InvalidArena(_))));
        let err = Arena::with_obstacles(Shape::unit_square(), [(Vec2::new(0.05, 0.5), 0.1)]);
        assert!(matches!(err, Err(GeometryError::InvalidArena(_))));
        let err = Arena::with_obstacles(Shape::sinai(0.1), [(Vec2::new(0.5, 0.62), 0.05)]);
        assert!(matches!(err, Err(GeometryError::InvalidArena(_))));
    }

    #[test]
    fn zero_obstacles_keeps_full_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = place_obstacles(Shape::unit_square(), 0, 0.1, &mut rng).unwrap();
        assert!(a.obstacles().is_empty());
        assert_eq!(a.area(), Shape::unit_square().boundary_area());
    }

    #[test]
    fn overdense_placement_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = place_obstacles(Shape::unit_square(), 50, 0.2, &mut rng);
        assert!(matches!(err, Err(GeometryError::PlacementInfeasible { .. })));
    }

    #[test]
    fn tight_but_not_overfull_placement_exhausts_budget() {
        // 20 disks of radius 0.12 cover 0.9 of the square: the area check
        // passes but random sequential packing cannot reach it.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = place_obstacles_with_budget(Shape::unit_square(), 20, 0.12, &mut rng, 2_000);
        match err {
            Err(GeometryError::PlacementInfeasible { attempts, .. }) => assert!(attempts > 0),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn placements_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for shape in [Shape::unit_square(), Shape::default_stadium(), Shape::sinai(0.1)] {
            for _ in 0..20 {
                let a = place_obstacles(shape, 6, 0.05, &mut rng).unwrap();
                let obs = a.obstacles();
                for (i, o) in obs.iter().enumerate() {
                    assert!(shape.admits_disk(o.center, o.radius));
                    for p in &obs[i + 1..] {
                        assert!((o.center - p.center).norm() > o.radius + p.radius);
                    }
                }
            }
        }
    }

    #[test]
    fn single_disk_center_is_uniform() {
        // Chi-square over a 4×4 grid of the admissible square [0.1, 0.9]².
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0u64; 16];
        let n = 10_000;
        for _ in 0..n {
            let a = place_obstacles(Shape::unit_square(), 1, 0.1, &mut rng).unwrap();
            let c = a.obstacles()[0].center;
            assert!((0.1..=0.9).contains(&c.x) && (0.1..=0.9).contains(&c.y));
            let ix = (((c.x - 0.1) / 0.2) as usize).min(3);
            let iy = (((c.y - 0.1) / 0.2) as usize).min(3);
            counts[iy * 4 + ix] += 1;
        }
        let report = crate::stats::chi_square_uniform(&counts, 0.05);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn random_free_points_avoid_obstacles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Arena::new(Shape::sinai(0.3)).unwrap();
        for _ in 0..1000 {
            assert!(a.contains(a.random_free_point(&mut rng)));
        }
        let s = Arena::new(Shape::default_stadium()).unwrap();
        for _ in 0..1000 {
            assert!(s.contains(s.random_free_point(&mut rng)));
        }
    }
}
