//! Sharding, canonical shard encoding, authenticated encryption and the
//! per-epoch key registry.

mod cipher;
mod keys;
mod shard;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cipher::{AeadCipher, ChaChaPoly, SymmetricKey, KEY_LEN, NONCE_LEN, TAG_LEN};
pub use keys::{assign_keys, KeyId, KeyRegistry};
pub use shard::{deserialize_shard, serialize_shard, shard_database, shard_table, Shard, ShardSet, TableSlice};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error("shard count must be at least 1, got {0}")]
    InvalidShardCount(usize),
    #[error("serialization failure: {0}")]
    Serialization(String),
    #[error("authentication failed")]
    Authentication,
    #[error("{shards} shards need at least as many balls, got {balls}")]
    NotEnoughBalls { shards: usize, balls: usize },
    #[error("at least one obstacle is required")]
    NoObstacles,
    #[error("decrypted shard id {found} does not match envelope id {expected}")]
    ShardIdMismatch { expected: u32, found: u32 },
}

/// Authenticated ciphertext plus the public header needed to open it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedShard {
    pub shard_id: u32,
    pub key_id: KeyId,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub auth_tag: [u8; TAG_LEN],
}

#[derive(Debug, Clone, Copy)]
enum Domain {
    Shard,
    Partial,
}

// The header is bound as associated data so that it cannot be swapped
// between envelopes.
fn aad(domain: Domain, shard_id: u32, key_id: KeyId) -> [u8; 13] {
    let mut out = [0u8; 13];
    out[0] = match domain {
        Domain::Shard => 0,
        Domain::Partial => 1,
    };
    out[1..5].copy_from_slice(&shard_id.to_le_bytes());
    out[5..13].copy_from_slice(&key_id.0.to_le_bytes());
    out
}

fn seal<R: Rng + ?Sized>(
    domain: Domain,
    shard_id: u32,
    key_id: KeyId,
    key: &SymmetricKey,
    plaintext: &[u8],
    cipher: &dyn AeadCipher,
    rng: &mut R,
) -> EncryptedShard {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let (ciphertext, auth_tag) = cipher.seal(key, &nonce, &aad(domain, shard_id, key_id), plaintext);
    EncryptedShard { shard_id, key_id, nonce, ciphertext, auth_tag }
}

fn open(
    domain: Domain,
    envelope: &EncryptedShard,
    key: &SymmetricKey,
    cipher: &dyn AeadCipher,
) -> Result<Vec<u8>, CryptoError> {
    cipher.open(
        key,
        &envelope.nonce,
        &aad(domain, envelope.shard_id, envelope.key_id),
        &envelope.ciphertext,
        &envelope.auth_tag,
    )
}

/// Encrypt the canonical encoding of `shard` under `key` with a fresh nonce.
pub fn encrypt_shard<R: Rng + ?Sized>(
    shard: &Shard,
    key_id: KeyId,
    key: &SymmetricKey,
    cipher: &dyn AeadCipher,
    rng: &mut R,
) -> Result<EncryptedShard, CryptoError> {
    let bytes = serialize_shard(shard)?;
    Ok(seal(Domain::Shard, shard.shard_id, key_id, key, &bytes, cipher, rng))
}

/// Authenticated decryption back to the exact canonical bytes.
pub fn decrypt_shard_bytes(
    envelope: &EncryptedShard,
    key: &SymmetricKey,
    cipher: &dyn AeadCipher,
) -> Result<Vec<u8>, CryptoError> {
    open(Domain::Shard, envelope, key, cipher)
}

pub fn decrypt_shard(
    envelope: &EncryptedShard,
    key: &SymmetricKey,
    cipher: &dyn AeadCipher,
) -> Result<Shard, CryptoError> {
    let shard = deserialize_shard(&decrypt_shard_bytes(envelope, key, cipher)?)?;
    if shard.shard_id != envelope.shard_id {
        return Err(CryptoError::ShardIdMismatch { expected: envelope.shard_id, found: shard.shard_id });
    }
    Ok(shard)
}

/// Seal an arbitrary payload (an on-the-fly partial result) for `shard_id`.
/// Shard and partial envelopes use distinct associated data, so one can
/// never be opened as the other.
pub fn seal_partial<R: Rng + ?Sized>(
    shard_id: u32,
    key_id: KeyId,
    key: &SymmetricKey,
    payload: &[u8],
    cipher: &dyn AeadCipher,
    rng: &mut R,
) -> EncryptedShard {
    seal(Domain::Partial, shard_id, key_id, key, payload, cipher, rng)
}

pub fn open_partial(
    envelope: &EncryptedShard,
    key: &SymmetricKey,
    cipher: &dyn AeadCipher,
) -> Result<Vec<u8>, CryptoError> {
    open(Domain::Partial, envelope, key, cipher)
}
