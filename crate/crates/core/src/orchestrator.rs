//! The epoch lifecycle: shard and encrypt a database, launch one ball per
//! shard (plus decoys), let them fly until every shard has hit the
//! obstacle holding its key, and reduce the partial results at the Master.
//!
//! The event loop is a priority queue of each ball's next collision, ordered
//! by time and then ball id, so a seed fixes the whole run.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{
    assign_keys, decrypt_shard, encrypt_shard, open_partial, seal_partial, shard_database, ChaChaPoly,
    CryptoError, EncryptedShard, KeyId, KeyRegistry,
};
use crate::geometry::{apply_impact, next_event, place_obstacles, Arena, Ball, GeometryError, Impact, Shape, Surface};
use crate::par::trial_rng;
use crate::query::{map_shard, onfly_execute, reduce, PartialResult, QueryError, QueryPlan, QueryResult};
use crate::stats::{predicted_rate, random_ball};
use crate::table::{Database, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    /// The matched obstacle decrypts the shard and runs the map step.
    #[default]
    AtObstacle,
    /// The map step runs on the ball's shard when the query arrives; the
    /// matched obstacle only verifies the key and forwards the result.
    OnTheFly,
}

/// `T_max = (factor / λ_pair) · (ln N + offset)` after query arrival, with
/// `λ_pair = 2 r |v| / A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmaxPolicy {
    pub factor: f64,
    pub offset: f64,
}

impl Default for TmaxPolicy {
    fn default() -> Self {
        Self { factor: 20.0, offset: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// N
    pub shards: usize,
    /// M, at least N. Balls beyond N are decoys.
    pub balls: usize,
    /// P. With a Sinai table the central disk is one of them.
    pub obstacles: usize,
    pub obstacle_radius: f64,
    pub speed: f64,
    pub arena: Shape,
    pub seed: u64,
    #[serde(default)]
    pub map_mode: MapMode,
    #[serde(default)]
    pub tmax: TmaxPolicy,
    /// Simulated time at which the query is issued.
    #[serde(default)]
    pub query_arrival: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            shards: 4,
            balls: 4,
            obstacles: 4,
            obstacle_radius: 0.05,
            speed: 1.0,
            arena: Shape::unit_square(),
            seed: 0,
            map_mode: MapMode::AtObstacle,
            tmax: TmaxPolicy::default(),
            query_arrival: 0.0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let bad = |m: String| Err(OrchestratorError::Config(m));
        if self.shards < 1 {
            return bad("shards must be at least 1".into());
        }
        if self.balls < self.shards {
            return bad(format!("balls ({}) must be at least shards ({})", self.balls, self.shards));
        }
        if self.obstacles < 1 {
            return bad("obstacles must be at least 1".into());
        }
        if !(self.obstacle_radius.is_finite() && self.obstacle_radius > 0.0) {
            return bad(format!("obstacle_radius must be positive, got {}", self.obstacle_radius));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return bad(format!("speed must be positive, got {}", self.speed));
        }
        if !(self.tmax.factor > 0.0 && self.tmax.offset.is_finite()) {
            return bad(format!("invalid tmax policy {:?}", self.tmax));
        }
        if !(self.query_arrival.is_finite() && self.query_arrival >= 0.0) {
            return bad(format!("query_arrival must be non-negative, got {}", self.query_arrival));
        }
        self.arena.validate().map_err(|e| OrchestratorError::Config(e.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("no convergence by t={deadline}: delivered {delivered:?}, undelivered {undelivered:?}")]
    ConvergenceTimeout { deadline: f64, delivered: Vec<u32>, undelivered: Vec<u32> },
    #[error("obstacle {obstacle} holds the key of shard {shard} but ball {ball}'s payload failed authentication")]
    AuthFailureOnClaimedMatch { ball: u32, obstacle: u32, shard: u32 },
    #[error("operation needs phase {expected:?}, epoch is {found:?}")]
    WrongPhase { expected: Phase, found: Phase },
    #[error("query arrival {arrival} is before the current time {now}")]
    ArrivalInPast { arrival: f64, now: f64 },
    #[error("replay diverged at event {index}: logged {logged:?}, simulated {simulated:?}")]
    ReplayMismatch { index: usize, logged: Box<Option<CollisionEvent>>, simulated: Box<Option<CollisionEvent>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Setup,
    InMotion,
    Converged,
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub epoch: u64,
    pub sim_time: f64,
    pub ball_id: u32,
    pub surface: Surface,
    /// The ball's key is held by the obstacle it hit.
    pub matched: bool,
}

impl CollisionEvent {
    fn same_as(&self, other: &CollisionEvent) -> bool {
        self.epoch == other.epoch
            && self.sim_time.to_bits() == other.sim_time.to_bits()
            && self.ball_id == other.ball_id
            && self.surface == other.surface
            && self.matched == other.matched
    }
}

/// What a ball carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Shard(EncryptedShard),
    /// Random bytes shaped like a shard envelope under a key nobody holds.
    Decoy { key_id: KeyId, ciphertext: Vec<u8> },
}

impl Payload {
    pub fn key_id(&self) -> KeyId {
        match self {
            Payload::Shard(e) => e.key_id,
            Payload::Decoy { key_id, .. } => *key_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Carrier {
    pub ball: Ball,
    pub payload: Payload,
    pub delivered: bool,
    /// On-the-fly partial, sealed under the shard key.
    pub sealed_partial: Option<EncryptedShard>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecryptSite {
    MatchedObstacle,
    OnTheFly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecryptRecord {
    pub site: DecryptSite,
    pub shard_id: u32,
    pub ball_id: u32,
    /// Obstacle that performed the decryption, if any.
    pub obstacle: Option<u32>,
    pub sim_time: f64,
}

/// Partials received by the Master, one per shard.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MasterAccumulator {
    partials: BTreeMap<u32, PartialResult>,
}

impl MasterAccumulator {
    pub fn receive(&mut self, partial: PartialResult) -> Result<(), QueryError> {
        let id = partial.shard_id;
        if self.partials.contains_key(&id) {
            return Err(QueryError::DuplicateShard(id));
        }
        self.partials.insert(id, partial);
        Ok(())
    }

    pub fn shard_ids(&self) -> Vec<u32> {
        self.partials.keys().copied().collect()
    }

    pub fn is_complete(&self, shard_count: u32) -> bool {
        self.partials.len() == shard_count as usize
    }

    fn take(&mut self) -> Vec<PartialResult> {
        std::mem::take(&mut self.partials).into_values().collect()
    }
}

/// Comparable summary of an epoch, used by determinism and replay checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSnapshot {
    pub id: u64,
    pub phase: Phase,
    pub now: f64,
    pub carriers: Vec<Carrier>,
    pub obstacles: Vec<(f64, f64, f64)>,
    pub delivered: Vec<u32>,
    pub events: usize,
    pub master: Vec<u32>,
}

/// Outcome of a converged query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRun {
    pub result: QueryResult,
    pub arrival: f64,
    /// Time from query arrival to the last delivery.
    pub convergence_time: f64,
    pub deadline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EventKey {
    time: f64,
    ball: u32,
}

impl Eq for EventKey {}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.ball.cmp(&other.ball))
    }
}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct Epoch {
    id: u64,
    phase: Phase,
    config: SimulationConfig,
    arena: Arena,
    registry: KeyRegistry,
    catalog: BTreeMap<String, Schema>,
    carriers: Vec<Carrier>,
    pending_impacts: Vec<Impact>,
    queue: BinaryHeap<Reverse<EventKey>>,
    now: f64,
    delivered: BTreeSet<u32>,
    pending_query: Option<QueryPlan>,
    log: Vec<CollisionEvent>,
    master: MasterAccumulator,
    audit: Vec<DecryptRecord>,
    rng: ChaCha8Rng,
}

/// Shard, key and launch epoch `epoch_id` of `config` over `db`.
///
/// All randomness comes from the stream `(config.seed, epoch_id)`, so the
/// same arguments always yield the same epoch.
pub fn setup_epoch(config: &SimulationConfig, db: &Database, epoch_id: u64) -> Result<Epoch, OrchestratorError> {
    config.validate()?;
    let mut rng = trial_rng(config.seed, epoch_id);
    let builtin = usize::from(matches!(config.arena, Shape::Sinai { .. }));
    let extra = config.obstacles.saturating_sub(builtin);
    let mut arena = place_obstacles(config.arena, extra, config.obstacle_radius, &mut rng)?;
    let obstacle_count = arena.obstacles().len();

    let shards = shard_database(db.values(), config.shards)?;
    let registry = assign_keys(&shards, config.balls, obstacle_count, &mut rng)?;
    arena.install_key_rings(|o| registry.key_ring(o));

    let cipher = ChaChaPoly;
    let mut payloads: Vec<Option<Payload>> = vec![None; config.balls];
    for shard in &shards.shards {
        let key_id = registry.shard_key(shard.shard_id).expect("registry covers every shard");
        let key = registry.key(key_id).expect("registered");
        let envelope = encrypt_shard(shard, key_id, key, &cipher, &mut rng)?;
        let ball = registry.ball_of_shard(shard.shard_id).expect("matched") as usize;
        payloads[ball] = Some(Payload::Shard(envelope));
    }
    let typical_len = payloads
        .iter()
        .flatten()
        .map(|p| match p {
            Payload::Shard(e) => e.ciphertext.len(),
            Payload::Decoy { .. } => 0,
        })
        .sum::<usize>()
        / config.shards;
    for slot in payloads.iter_mut().filter(|p| p.is_none()) {
        let key_id = loop {
            let k = KeyId(rng.next_u64());
            if registry.key(k).is_none() {
                break k;
            }
        };
        let mut ciphertext = vec![0u8; typical_len];
        rng.fill_bytes(&mut ciphertext);
        *slot = Some(Payload::Decoy { key_id, ciphertext });
    }

    let carriers: Vec<Carrier> = payloads
        .into_iter()
        .enumerate()
        .map(|(i, payload)| Carrier {
            ball: random_ball(&arena, i as u32, config.speed, &mut rng),
            payload: payload.expect("every ball has a payload"),
            delivered: false,
            sealed_partial: None,
        })
        .collect();

    let mut epoch = Epoch {
        id: epoch_id,
        phase: Phase::Setup,
        config: config.clone(),
        arena,
        registry,
        catalog: db.iter().map(|(k, t)| (k.clone(), t.schema.clone())).collect(),
        carriers,
        pending_impacts: Vec::new(),
        queue: BinaryHeap::new(),
        now: 0.0,
        delivered: BTreeSet::new(),
        pending_query: None,
        log: Vec::new(),
        master: MasterAccumulator::default(),
        audit: Vec::new(),
        rng,
    };
    for i in 0..epoch.carriers.len() {
        let impact = next_event(&epoch.carriers[i].ball, &epoch.arena)?;
        epoch.pending_impacts.push(impact);
        epoch.queue.push(Reverse(EventKey { time: epoch.carriers[i].ball.time + impact.dt, ball: i as u32 }));
    }
    epoch.phase = Phase::InMotion;
    Ok(epoch)
}

impl Epoch {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn carriers(&self) -> &[Carrier] {
        &self.carriers
    }

    pub fn delivered(&self) -> &BTreeSet<u32> {
        &self.delivered
    }

    pub fn event_log(&self) -> &[CollisionEvent] {
        &self.log
    }

    pub fn decryption_audit(&self) -> &[DecryptRecord] {
        &self.audit
    }

    pub fn master(&self) -> &MasterAccumulator {
        &self.master
    }

    pub fn shard_count(&self) -> u32 {
        self.registry.shard_count() as u32
    }

    /// Collision rate of one ball with its own obstacle, `2 r |v| / A`.
    pub fn pair_rate(&self) -> f64 {
        predicted_rate(self.config.obstacle_radius, self.config.speed, self.arena.area())
    }

    /// Time budget after query arrival.
    pub fn tmax(&self) -> f64 {
        let n = self.config.shards as f64;
        self.config.tmax.factor / self.pair_rate() * (n.ln() + self.config.tmax.offset)
    }

    pub fn snapshot(&self) -> EpochSnapshot {
        EpochSnapshot {
            id: self.id,
            phase: self.phase,
            now: self.now,
            carriers: self.carriers.clone(),
            obstacles: self.arena.obstacles().iter().map(|o| (o.center.x, o.center.y, o.radius)).collect(),
            delivered: self.delivered.iter().copied().collect(),
            events: self.log.len(),
            master: self.master.shard_ids(),
        }
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), OrchestratorError> {
        if self.phase != expected {
            return Err(OrchestratorError::WrongPhase { expected, found: self.phase });
        }
        Ok(())
    }

    fn next_time(&self) -> Option<f64> {
        self.queue.peek().map(|Reverse(k)| k.time)
    }

    /// Pop and apply the earliest collision, then let `handle_collision`
    /// react to it.
    fn process_next(&mut self) -> Result<CollisionEvent, OrchestratorError> {
        let Reverse(key) = self.queue.pop().expect("every ball always has a next event");
        let i = key.ball as usize;
        let impact = self.pending_impacts[i];
        apply_impact(&mut self.carriers[i].ball, &self.arena, &impact);
        self.now = self.carriers[i].ball.time;
        let event = self.handle_collision(key.ball, impact.surface)?;
        let next = next_event(&self.carriers[i].ball, &self.arena)?;
        self.pending_impacts[i] = next;
        self.queue.push(Reverse(EventKey { time: self.carriers[i].ball.time + next.dt, ball: key.ball }));
        Ok(event)
    }

    /// React to ball `ball_id` touching `surface` at the current time. Wall
    /// hits and non-matching obstacles are pure reflections (already
    /// applied by the dynamics). A matching obstacle, while a query is
    /// pending, decrypts, maps and delivers to the Master.
    pub fn handle_collision(&mut self, ball_id: u32, surface: Surface) -> Result<CollisionEvent, OrchestratorError> {
        let i = ball_id as usize;
        let key_id = self.carriers[i].payload.key_id();
        let matched = match surface {
            Surface::Obstacle(o) => self.arena.obstacle(o).is_some_and(|ob| ob.holds(key_id)),
            Surface::Wall(_) => false,
        };
        let event = CollisionEvent { epoch: self.id, sim_time: self.now, ball_id, surface, matched };
        self.log.push(event);

        if matched && self.pending_query.is_some() && !self.carriers[i].delivered {
            let obstacle = surface.id();
            let partial = self.map_at_obstacle(ball_id, obstacle)?;
            let shard_id = partial.shard_id;
            self.master.receive(partial)?;
            self.delivered.insert(shard_id);
            self.carriers[i].delivered = true;
            if self.delivered.len() == self.shard_count() as usize {
                self.phase = Phase::Converged;
            }
        }
        Ok(event)
    }

    fn map_at_obstacle(&mut self, ball_id: u32, obstacle: u32) -> Result<PartialResult, OrchestratorError> {
        let carrier = &self.carriers[ball_id as usize];
        let Payload::Shard(envelope) = &carrier.payload else {
            unreachable!("decoy keys are never registered, so decoys never match");
        };
        let shard = envelope.shard_id;
        let auth_failure = OrchestratorError::AuthFailureOnClaimedMatch { ball: ball_id, obstacle, shard };
        let key = self.registry.key(envelope.key_id).ok_or(auth_failure.clone())?;
        let cipher = ChaChaPoly;
        let partial = match (&carrier.sealed_partial, self.config.map_mode) {
            (Some(sealed), MapMode::OnTheFly) => {
                // The obstacle proves key possession by opening the sealed
                // partial, then forwards it unchanged.
                let bytes = open_partial(sealed, key, &cipher).map_err(|_| auth_failure.clone())?;
                PartialResult::from_bytes(&bytes)?
            }
            _ => {
                let plaintext = decrypt_shard(envelope, key, &cipher).map_err(|_| auth_failure.clone())?;
                self.audit.push(DecryptRecord {
                    site: DecryptSite::MatchedObstacle,
                    shard_id: shard,
                    ball_id,
                    obstacle: Some(obstacle),
                    sim_time: self.now,
                });
                let plan = self.pending_query.as_ref().expect("checked by caller");
                map_shard(plan, &plaintext)?
            }
        };
        Ok(partial)
    }

    fn prepare_onfly(&mut self) -> Result<(), OrchestratorError> {
        let plan = self.pending_query.clone().expect("set before preparing");
        let cipher = ChaChaPoly;
        for i in 0..self.carriers.len() {
            let c = &self.carriers[i];
            let Payload::Shard(envelope) = &c.payload else { continue };
            if c.delivered {
                continue;
            }
            let key = self.registry.key(envelope.key_id).expect("registered shard key");
            let shard = decrypt_shard(envelope, key, &cipher)?;
            self.audit.push(DecryptRecord {
                site: DecryptSite::OnTheFly,
                shard_id: envelope.shard_id,
                ball_id: i as u32,
                obstacle: None,
                sim_time: self.now,
            });
            let partial = onfly_execute(&plan, &shard)?;
            let sealed =
                seal_partial(envelope.shard_id, envelope.key_id, key, &partial.to_bytes(), &cipher, &mut self.rng);
            self.carriers[i].sealed_partial = Some(sealed);
        }
        Ok(())
    }

    /// Issue `plan` at simulated time `arrival`, run until every shard has
    /// been delivered (or `T_max` passes), then reduce at the Master.
    ///
    /// Collisions before `arrival` are logged but deliver nothing.
    pub fn run_query(&mut self, plan: &QueryPlan, arrival: f64) -> Result<QueryRun, OrchestratorError> {
        self.run_query_checked(plan, arrival, None)
    }

    fn run_query_checked(
        &mut self,
        plan: &QueryPlan,
        arrival: f64,
        expected: Option<&[CollisionEvent]>,
    ) -> Result<QueryRun, OrchestratorError> {
        self.expect_phase(Phase::InMotion)?;
        if arrival < self.now {
            return Err(OrchestratorError::ArrivalInPast { arrival, now: self.now });
        }
        plan.validate(&self.catalog)?;

        let mut cursor = 0usize;
        let mut check = |ev: &CollisionEvent| -> Result<(), OrchestratorError> {
            if let Some(log) = expected {
                let logged = log.get(cursor);
                if !logged.is_some_and(|l| l.same_as(ev)) {
                    return Err(OrchestratorError::ReplayMismatch {
                        index: cursor,
                        logged: Box::new(logged.copied()),
                        simulated: Box::new(Some(*ev)),
                    });
                }
            }
            cursor += 1;
            Ok(())
        };

        while self.next_time().is_some_and(|t| t <= arrival) {
            let ev = self.process_next()?;
            check(&ev)?;
        }
        self.now = arrival;
        self.pending_query = Some(plan.clone());
        if self.config.map_mode == MapMode::OnTheFly {
            self.prepare_onfly()?;
        }

        let deadline = arrival + self.tmax();
        let mut last_delivery = arrival;
        while self.phase == Phase::InMotion {
            if !self.next_time().is_some_and(|t| t <= deadline) {
                let delivered: Vec<u32> = self.delivered.iter().copied().collect();
                let undelivered = (0..self.shard_count()).filter(|s| !self.delivered.contains(s)).collect();
                return Err(OrchestratorError::ConvergenceTimeout { deadline, delivered, undelivered });
            }
            let before = self.delivered.len();
            let ev = self.process_next()?;
            check(&ev)?;
            if self.delivered.len() > before {
                last_delivery = ev.sim_time;
            }
        }
        if let Some(log) = expected {
            if cursor != log.len() {
                return Err(OrchestratorError::ReplayMismatch {
                    index: cursor,
                    logged: Box::new(log.get(cursor).copied()),
                    simulated: Box::new(None),
                });
            }
        }

        let partials = self.master.take();
        let result = reduce(plan, &self.catalog, partials, self.shard_count(), self.id)?;
        self.pending_query = None;
        self.phase = Phase::Reduced;
        Ok(QueryRun { result, arrival, convergence_time: last_delivery - arrival, deadline })
    }

    /// Start the following epoch with fresh obstacles, keys and matching.
    pub fn next_epoch(&self, db: &Database) -> Result<Epoch, OrchestratorError> {
        self.expect_phase(Phase::Reduced)?;
        setup_epoch(&self.config, db, self.id + 1)
    }

    /// Plaintext only ever existed inside the obstacle holding the shard's
    /// key, or on the ball itself in on-the-fly mode at query arrival.
    pub fn audit_is_clean(&self) -> bool {
        self.audit.iter().all(|r| {
            let key = self.registry.shard_key(r.shard_id);
            let owner = self.registry.ball_of_shard(r.shard_id);
            owner == Some(r.ball_id)
                && match r.site {
                    DecryptSite::MatchedObstacle => {
                        r.obstacle.is_some() && key.and_then(|k| self.registry.obstacle_of(k)) == r.obstacle
                    }
                    DecryptSite::OnTheFly => self.config.map_mode == MapMode::OnTheFly && r.obstacle.is_none(),
                }
        })
    }
}

/// Re-run epoch `epoch_id` from its seed, checking each simulated event
/// against `log`, and return the resulting epoch.
pub fn replay(
    config: &SimulationConfig,
    db: &Database,
    epoch_id: u64,
    plan: &QueryPlan,
    arrival: f64,
    log: &[CollisionEvent],
) -> Result<Epoch, OrchestratorError> {
    let mut epoch = setup_epoch(config, db, epoch_id)?;
    epoch.run_query_checked(plan, arrival, Some(log))?;
    Ok(epoch)
}

/// Write events as CSV with columns
/// `epoch,sim_time,ball_id,surface_kind,surface_id,matched`.
pub fn write_event_log<W: std::io::Write>(events: &[CollisionEvent], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "sim_time", "ball_id", "surface_kind", "surface_id", "matched"])?;
    for e in events {
        w.write_record([
            e.epoch.to_string(),
            format!("{:?}", e.sim_time),
            e.ball_id.to_string(),
            e.surface.kind().to_string(),
            e.surface.id().to_string(),
            e.matched.to_string(),
        ])?;
    }
    w.flush()
}

/// Convergence time of one fresh epoch, for Monte-Carlo studies.
pub fn convergence_time(config: &SimulationConfig, db: &Database, plan: &QueryPlan) -> Result<f64, OrchestratorError> {
    let mut epoch = setup_epoch(config, db, 0)?;
    Ok(epoch.run_query(plan, config.query_arrival)?.convergence_time)
}
