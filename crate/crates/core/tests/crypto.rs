use std::collections::BTreeMap;

use dache::crypto::*;
use dache::table::{Column, ColumnType, Row, Schema, Table, Value};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn arb_value(ty: ColumnType) -> BoxedStrategy<Value> {
    match ty {
        ColumnType::Integer => any::<i64>().prop_map(Value::Integer).boxed(),
        ColumnType::Float => any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(Value::Float).boxed(),
        ColumnType::Text => "[a-z\\u{e9}\\u{4e2d} ,\"]{0,12}".prop_map(Value::Text).boxed(),
    }
}

fn arb_table() -> impl Strategy<Value = Table> {
    let ty = prop_oneof![Just(ColumnType::Integer), Just(ColumnType::Float), Just(ColumnType::Text)];
    prop::collection::vec(ty, 1..4)
        .prop_flat_map(|types| {
            let row = types.iter().map(|&t| arb_value(t)).collect::<Vec<_>>();
            (Just(types), prop::collection::vec(row, 0..40))
        })
        .prop_map(|(types, rows)| {
            let schema = Schema::new(types.iter().enumerate().map(|(i, &t)| Column::new(format!("c{i}"), t)).collect());
            Table::new("t", schema, rows).unwrap()
        })
}

fn multiset(rows: impl IntoIterator<Item = Row>) -> BTreeMap<Row, usize> {
    let mut m = BTreeMap::new();
    for r in rows {
        *m.entry(r).or_insert(0) += 1;
    }
    m
}

proptest! {
    #[test]
    fn sharding_is_lossless_disjoint_and_balanced(table in arb_table(), n in 1usize..9) {
        let set = shard_table(&table, n).unwrap();
        prop_assert_eq!(set.len(), n);
        let sizes: Vec<usize> = set.shards.iter().map(|s| s.row_count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(sizes.iter().sum::<usize>(), table.len());

        let union = set.shards.iter().flat_map(|s| s.slice("t").unwrap().rows.clone());
        prop_assert_eq!(multiset(union), multiset(table.rows.clone()));

        // Each row index lands in exactly one shard.
        for (i, row) in table.rows.iter().enumerate() {
            let owner = &set.shards[i % n];
            prop_assert_eq!(&owner.slice("t").unwrap().rows[i / n], row);
        }
    }

    #[test]
    fn encryption_round_trips_exact_bytes(table in arb_table(), n in 1usize..5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = shard_table(&table, n).unwrap();
        let reg = assign_keys(&set, n, 3, &mut rng).unwrap();
        for shard in &set.shards {
            let id = reg.shard_key(shard.shard_id).unwrap();
            let env = encrypt_shard(shard, id, reg.key(id).unwrap(), &ChaChaPoly, &mut rng).unwrap();
            let bytes = decrypt_shard_bytes(&env, reg.key(id).unwrap(), &ChaChaPoly).unwrap();
            prop_assert_eq!(&bytes, &serialize_shard(shard).unwrap());
            prop_assert_eq!(&decrypt_shard(&env, reg.key(id).unwrap(), &ChaChaPoly).unwrap(), shard);
        }
    }

    #[test]
    fn any_single_bit_flip_is_detected(table in arb_table(), seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = shard_table(&table, 1).unwrap();
        let reg = assign_keys(&set, 1, 1, &mut rng).unwrap();
        let id = reg.shard_key(0).unwrap();
        let key = reg.key(id).unwrap();
        let env = encrypt_shard(&set.shards[0], id, key, &ChaChaPoly, &mut rng).unwrap();
        let total_bits = 8 * (env.ciphertext.len() + TAG_LEN + NONCE_LEN);
        let bit = pick.index(total_bits);
        let mut bad = env.clone();
        let (byte, mask) = (bit / 8, 1u8 << (bit % 8));
        if byte < env.ciphertext.len() {
            bad.ciphertext[byte] ^= mask;
        } else if byte < env.ciphertext.len() + TAG_LEN {
            bad.auth_tag[byte - env.ciphertext.len()] ^= mask;
        } else {
            bad.nonce[byte - env.ciphertext.len() - TAG_LEN] ^= mask;
        }
        prop_assert_eq!(decrypt_shard_bytes(&bad, key, &ChaChaPoly), Err(CryptoError::Authentication));
    }
}

#[test]
fn every_mismatched_key_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let schema = Schema::new(vec![Column::new("v", ColumnType::Integer)]);
    let table = Table::new("t", schema, (0..50).map(|i| vec![Value::Integer(i)]).collect()).unwrap();
    let set = shard_table(&table, 8).unwrap();
    let reg = assign_keys(&set, 10, 4, &mut rng).unwrap();
    let ids: Vec<KeyId> = reg.key_ids().collect();
    let mut attempts = 0;
    for shard in &set.shards {
        let own = reg.shard_key(shard.shard_id).unwrap();
        let env = encrypt_shard(shard, own, reg.key(own).unwrap(), &ChaChaPoly, &mut rng).unwrap();
        for &other in ids.iter().filter(|&&k| k != own) {
            attempts += 1;
            assert_eq!(decrypt_shard(&env, reg.key(other).unwrap(), &ChaChaPoly), Err(CryptoError::Authentication));
        }
    }
    assert_eq!(attempts, 8 * 7);
}

#[test]
fn same_shard_encrypts_differently() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let schema = Schema::new(vec![Column::new("v", ColumnType::Text)]);
    let table = Table::new("t", schema, vec![vec![Value::Text("same".into())]]).unwrap();
    let set = shard_table(&table, 1).unwrap();
    let reg = assign_keys(&set, 1, 1, &mut rng).unwrap();
    let id = reg.shard_key(0).unwrap();
    let a = encrypt_shard(&set.shards[0], id, reg.key(id).unwrap(), &ChaChaPoly, &mut rng).unwrap();
    let b = encrypt_shard(&set.shards[0], id, reg.key(id).unwrap(), &ChaChaPoly, &mut rng).unwrap();
    assert_ne!(a.nonce, b.nonce);
    assert_ne!(a.ciphertext, b.ciphertext);
}

#[test]
fn keys_spread_uniformly_over_obstacles() {
    let schema = Schema::new(vec![Column::new("v", ColumnType::Integer)]);
    let table = Table::new("t", schema, vec![vec![Value::Integer(0)]]).unwrap();
    let set = shard_table(&table, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let trials = 10_000;
    let mut counts = [0usize; 4];
    for _ in 0..trials {
        let reg = assign_keys(&set, 1, 4, &mut rng).unwrap();
        assert!(reg.check_invariants(1));
        assert_eq!(reg.key_ring_sizes().iter().sum::<usize>(), 1);
        counts[reg.obstacle_of(reg.shard_key(0).unwrap()).unwrap() as usize] += 1;
    }
    let expected = trials as f64 / 4.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.95);
    assert!(stat < critical, "chi-square {stat} >= {critical}, counts {counts:?}");
}

#[test]
fn balls_are_matched_uniformly() {
    let schema = Schema::new(vec![Column::new("v", ColumnType::Integer)]);
    let table = Table::new("t", schema, vec![vec![Value::Integer(0)]]).unwrap();
    let set = shard_table(&table, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut counts = [0usize; 5];
    for _ in 0..10_000 {
        counts[assign_keys(&set, 5, 2, &mut rng).unwrap().ball_of_shard(0).unwrap() as usize] += 1;
    }
    let stat: f64 = counts.iter().map(|&c| (c as f64 - 2000.0).powi(2) / 2000.0).sum();
    assert!(stat < ChiSquared::new(4.0).unwrap().inverse_cdf(0.95), "{counts:?}");
}
