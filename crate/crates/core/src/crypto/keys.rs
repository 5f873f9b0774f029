use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::cipher::{SymmetricKey, KEY_LEN};
use super::{CryptoError, ShardSet};

/// Public routing tag for a key. Balls carry it in the clear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyId(pub u64);

impl std::fmt::Display for KeyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Per-epoch key material and the shard → ball → key → obstacle matching.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRegistry {
    keys: BTreeMap<KeyId, SymmetricKey>,
    obstacle_of: BTreeMap<KeyId, u32>,
    shard_key: Vec<KeyId>,
    shard_ball: Vec<u32>,
    obstacle_count: u32,
}

impl KeyRegistry {
    pub fn key(&self, id: KeyId) -> Option<&SymmetricKey> {
        self.keys.get(&id)
    }

    pub fn obstacle_of(&self, id: KeyId) -> Option<u32> {
        self.obstacle_of.get(&id).copied()
    }

    pub fn shard_key(&self, shard_id: u32) -> Option<KeyId> {
        self.shard_key.get(shard_id as usize).copied()
    }

    pub fn ball_of_shard(&self, shard_id: u32) -> Option<u32> {
        self.shard_ball.get(shard_id as usize).copied()
    }

    pub fn shard_count(&self) -> usize {
        self.shard_key.len()
    }

    pub fn key_ids(&self) -> impl Iterator<Item = KeyId> + '_ {
        self.keys.keys().copied()
    }

    /// Keys held by obstacle `obstacle`.
    pub fn key_ring(&self, obstacle: u32) -> BTreeSet<KeyId> {
        self.obstacle_of.iter().filter(|&(_, &o)| o == obstacle).map(|(&k, _)| k).collect()
    }

    pub fn key_ring_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.obstacle_count as usize];
        for &o in self.obstacle_of.values() {
            sizes[o as usize] += 1;
        }
        sizes
    }

    /// Every shard's key is registered, assigned to exactly one obstacle,
    /// and carried by a distinct ball.
    pub fn check_invariants(&self, ball_count: usize) -> bool {
        let balls: BTreeSet<u32> = self.shard_ball.iter().copied().collect();
        balls.len() == self.shard_ball.len()
            && balls.iter().all(|&b| (b as usize) < ball_count)
            && self.shard_key.iter().all(|k| self.keys.contains_key(k) && self.obstacle_of.contains_key(k))
            && self.keys.len() == self.shard_key.len()
            && self.obstacle_of.values().all(|&o| o < self.obstacle_count)
    }
}

/// Match each shard to a distinct uniformly chosen ball, generate one fresh
/// 256-bit key per shard, and hand each key to a uniformly chosen obstacle
/// (with replacement, so an obstacle may hold several keys).
///
/// Key bytes come from a ChaCha20 stream seeded from `rng`, which keeps
/// whole runs reproducible from one seed.
pub fn assign_keys<R: Rng + ?Sized>(
    shards: &ShardSet,
    ball_count: usize,
    obstacle_count: usize,
    rng: &mut R,
) -> Result<KeyRegistry, CryptoError> {
    let n = shards.len();
    if n == 0 {
        return Err(CryptoError::InvalidShardCount(0));
    }
    if ball_count < n {
        return Err(CryptoError::NotEnoughBalls { shards: n, balls: ball_count });
    }
    if obstacle_count == 0 {
        return Err(CryptoError::NoObstacles);
    }
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let mut key_rng = ChaCha20Rng::from_seed(seed);
    let shard_ball: Vec<u32> =
        rand::seq::index::sample(rng, ball_count, n).into_iter().map(|b| b as u32).collect();
    let mut keys = BTreeMap::new();
    let mut obstacle_of = BTreeMap::new();
    let mut shard_key = Vec::with_capacity(n);
    for _ in 0..n {
        let id = loop {
            let id = KeyId(key_rng.next_u64());
            if !keys.contains_key(&id) {
                break id;
            }
        };
        let mut bytes = [0u8; KEY_LEN];
        key_rng.fill_bytes(&mut bytes);
        keys.insert(id, SymmetricKey(bytes));
        obstacle_of.insert(id, rng.random_range(0..obstacle_count as u32));
        shard_key.push(id);
    }
    Ok(KeyRegistry { keys, obstacle_of, shard_key, shard_ball, obstacle_count: obstacle_count as u32 })
}
