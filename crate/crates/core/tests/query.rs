use dache::crypto::{shard_database, Shard};
use dache::query::gen::{random_database, random_plan};
use dache::query::*;
use dache::table::{database, Column, ColumnType, Schema, Table, Value};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run_sharded(plan: &QueryPlan, db: &dache::table::Database, n: usize) -> Result<QueryResult, QueryError> {
    let shards = shard_database(db.values(), n).unwrap();
    let partials = shards.shards.iter().map(|s| map_shard(plan, s)).collect::<Result<Vec<_>, _>>()?;
    reduce(plan, db, partials, n as u32, 1)
}

fn single(name: &str, col: ColumnType, values: Vec<Value>) -> dache::table::Database {
    let schema = Schema::new(vec![Column::new("v", col)]);
    database([Table::new(name, schema, values.into_iter().map(|v| vec![v]).collect()).unwrap()])
}

#[test]
fn sharded_execution_matches_oracle_on_random_plans() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonempty = 0;
    for case in 0..200 {
        let db = random_database(&mut rng, 120);
        let plan = random_plan(&mut rng);
        let expected = execute_oracle(&plan, &db).unwrap_or_else(|e| panic!("case {case}: {e}\n{plan:#?}"));
        nonempty += usize::from(!expected.rows.is_empty());
        for n in [1, 3, 7] {
            let got = run_sharded(&plan, &db, n).unwrap();
            assert!(got.same_answer(&expected), "case {case}, N={n}\nplan {plan:#?}\ngot {:?}\nwant {:?}", got.rows, expected.rows);
            assert_eq!(got.provenance, (0..n as u32).collect::<Vec<_>>());
        }
    }
    assert!(nonempty > 120, "generator produced too many empty answers: {nonempty}");
}

#[test]
fn reduce_ignores_partial_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..40 {
        let db = random_database(&mut rng, 80);
        let plan = random_plan(&mut rng);
        let shards = shard_database(db.values(), 5).unwrap();
        let mut partials: Vec<_> = shards.shards.iter().map(|s| map_shard(&plan, s).unwrap()).collect();
        let a = reduce(&plan, &db, partials.clone(), 5, 0).unwrap();
        partials.shuffle(&mut rng);
        let b = reduce(&plan, &db, partials, 5, 0).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn reduce_checks_shard_coverage() {
    let db = single("t", ColumnType::Integer, (0..10).map(Value::Integer).collect());
    let plan = QueryPlan::count_all("t");
    let shards = shard_database(db.values(), 3).unwrap();
    let p: Vec<_> = shards.shards.iter().map(|s| map_shard(&plan, s).unwrap()).collect();
    assert_eq!(reduce(&plan, &db, p[..2].to_vec(), 3, 0), Err(QueryError::MissingShard(2)));
    let dup = vec![p[0].clone(), p[1].clone(), p[1].clone(), p[2].clone()];
    assert_eq!(reduce(&plan, &db, dup, 3, 0), Err(QueryError::DuplicateShard(1)));
}

#[test]
fn count_examples() {
    let db = single("t", ColumnType::Integer, (0..10).map(Value::Integer).collect());
    let plan = QueryPlan::count_all("t");
    assert_eq!(execute_oracle(&plan, &db).unwrap().rows, vec![vec![Value::Integer(10)]]);

    // COUNT(*) with a tautology on a 4-row shard.
    let mut p = plan.clone();
    p.selection = Some(Predicate::cmp(Operand::Value(Value::Integer(1)), CmpOp::Eq, Operand::Value(Value::Integer(1))));
    let shards = shard_database(db.values(), 3).unwrap();
    let partial = map_shard(&p, &shards.shards[0]).unwrap();
    let PartialBody::AggState(groups) = &partial.body else { panic!("{partial:?}") };
    assert_eq!(groups[0].accs[0].count, 4);

    // Partials of 4 and 3 merge to 7.
    let mut a = AggAcc::default();
    let mut b = AggAcc::default();
    (0..4).for_each(|_| a.push(None));
    (0..3).for_each(|_| b.push(None));
    a.merge(&b);
    assert_eq!(a.count, 7);
}

#[test]
fn avg_is_finalized_once() {
    let db = single("t", ColumnType::Integer, vec![Value::Integer(2), Value::Integer(4), Value::Integer(6)]);
    let plan = QueryPlan {
        aggregates: vec![Aggregate { func: AggFn::Avg, column: Some("v".into()) }],
        ..QueryPlan::scan("t")
    };
    // Shard 0 gets {2, 6}, shard 1 gets {4}: states carry (sum, count).
    let shards = shard_database(db.values(), 2).unwrap();
    let partials: Vec<_> = shards.shards.iter().map(|s| map_shard(&plan, s).unwrap()).collect();
    let PartialBody::AggState(g) = &partials[0].body else { panic!() };
    assert_eq!((g[0].accs[0].int_sum, g[0].accs[0].count), (8, 2));
    let r = reduce(&plan, &db, partials, 2, 0).unwrap();
    assert_eq!(r.rows, vec![vec![Value::Float(4.0)]]);
}

#[test]
fn empty_inputs() {
    let db = single("t", ColumnType::Float, vec![]);
    let shard = &shard_database(db.values(), 1).unwrap().shards[0];
    let sel = QueryPlan {
        selection: Some(Predicate::cmp(Operand::Column("v".into()), CmpOp::Gt, Operand::Value(Value::Float(0.0)))),
        ..QueryPlan::scan("t")
    };
    assert_eq!(map_shard(&sel, shard).unwrap().body, PartialBody::RowSet(vec![]));

    let sum = QueryPlan {
        aggregates: vec![
            Aggregate { func: AggFn::Count, column: None },
            Aggregate { func: AggFn::Sum, column: Some("v".into()) },
        ],
        ..QueryPlan::scan("t")
    };
    let want = vec![vec![Value::Integer(0), Value::Null]];
    assert_eq!(execute_oracle(&sum, &db).unwrap().rows, want);
    assert_eq!(run_sharded(&sum, &db, 3).unwrap().rows, want);
}

#[test]
fn difference_with_itself_is_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let db = random_database(&mut rng, 50);
    let base = QueryPlan::scan("t");
    let plan = QueryPlan {
        set_op: Some(SetOperation { op: SetOp::Difference, plan: Box::new(base.clone()) }),
        ..base
    };
    assert!(execute_oracle(&plan, &db).unwrap().rows.is_empty());
    assert!(run_sharded(&plan, &db, 3).unwrap().rows.is_empty());
}

#[test]
fn type_errors_are_reported() {
    let db = single("t", ColumnType::Text, vec![Value::Text("a".into())]);
    let bad_cmp = QueryPlan {
        selection: Some(Predicate::cmp(Operand::Column("v".into()), CmpOp::Lt, Operand::Value(Value::Integer(3)))),
        ..QueryPlan::scan("t")
    };
    assert!(matches!(execute_oracle(&bad_cmp, &db), Err(QueryError::TypeMismatch(_))));
    let shard = &shard_database(db.values(), 1).unwrap().shards[0];
    assert!(matches!(map_shard(&bad_cmp, shard), Err(QueryError::TypeMismatch(_))));
    let bad_sum = QueryPlan {
        aggregates: vec![Aggregate { func: AggFn::Sum, column: Some("v".into()) }],
        ..QueryPlan::scan("t")
    };
    assert!(matches!(bad_sum.validate(&db), Err(QueryError::NonNumericAggregate(_))));
    assert!(matches!(QueryPlan::scan("nope").validate(&db), Err(QueryError::UnknownTable(_))));
}

#[test]
fn onfly_matches_map_byte_for_byte() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let db = random_database(&mut rng, 60);
        let plan = random_plan(&mut rng);
        for s in &shard_database(db.values(), 3).unwrap().shards {
            assert_eq!(onfly_execute(&plan, s).unwrap().to_bytes(), map_shard(&plan, s).unwrap().to_bytes());
        }
    }
}

#[test]
fn partials_survive_encoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let db = random_database(&mut rng, 60);
        let plan = random_plan(&mut rng);
        let shard: &Shard = &shard_database(db.values(), 2).unwrap().shards[0];
        let p = map_shard(&plan, shard).unwrap();
        assert_eq!(PartialResult::from_bytes(&p.to_bytes()).unwrap(), p);
    }
    let acc = AggAcc { int_sum: i128::from(i64::MAX) * 4, ..Default::default() };
    let p = PartialResult { shard_id: 0, body: PartialBody::AggState(vec![GroupState { key: vec![], accs: vec![acc] }]) };
    assert_eq!(PartialResult::from_bytes(&p.to_bytes()).unwrap(), p);
}

fn arb_acc() -> impl Strategy<Value = AggAcc> {
    prop::collection::vec(prop_oneof![(-1e6f64..1e6).prop_map(Value::Float), (-1e300f64..1e300).prop_map(Value::Float)], 0..8)
        .prop_map(|vs| {
            let mut a = AggAcc::default();
            vs.iter().for_each(|v| a.push(Some(v)));
            a
        })
}

fn finalized(a: &AggAcc) -> (u64, u64, Option<Value>, Option<Value>) {
    let mut s = ExactSum::new();
    s.merge(&a.float_sum);
    (a.count, s.value().to_bits(), a.min.clone(), a.max.clone())
}

proptest! {
    #[test]
    fn acc_merge_is_a_commutative_monoid(a in arb_acc(), b in arb_acc(), c in arb_acc()) {
        let mut ab = a.clone(); ab.merge(&b);
        let mut ba = b.clone(); ba.merge(&a);
        prop_assert_eq!(finalized(&ab), finalized(&ba));

        let mut ab_c = ab.clone(); ab_c.merge(&c);
        let mut bc = b.clone(); bc.merge(&c);
        let mut a_bc = a.clone(); a_bc.merge(&bc);
        prop_assert_eq!(finalized(&ab_c), finalized(&a_bc));

        let mut with_id = a.clone(); with_id.merge(&AggAcc::default());
        prop_assert_eq!(finalized(&with_id), finalized(&a));
    }

    #[test]
    fn exact_sum_agrees_with_oracle(xs in prop::collection::vec(prop_oneof![
        -1e3f64..1e3, -1e300f64..1e300, -1e-300f64..1e-300, (-20i32..20).prop_map(|k| k as f64 * 0.1)
    ], 0..40)) {
        let db = single("t", ColumnType::Float, xs.iter().map(|&x| Value::Float(x)).collect());
        let plan = QueryPlan { aggregates: vec![Aggregate { func: AggFn::Sum, column: Some("v".into()) }], ..QueryPlan::scan("t") };
        let oracle = execute_oracle(&plan, &db).unwrap();
        let mut s = ExactSum::new();
        xs.iter().for_each(|&x| s.add(x));
        let want = if xs.is_empty() { Value::Null } else { Value::Float(s.value()) };
        prop_assert_eq!(&oracle.rows[0][0], &want);
        // Any split into two halves merges to the same bits.
        let mut left = ExactSum::new();
        let mut right = ExactSum::new();
        for (i, &x) in xs.iter().enumerate() { if i % 2 == 0 { left.add(x) } else { right.add(x) } }
        right.merge(&left);
        prop_assert_eq!(right.value().to_bits(), s.value().to_bits());
    }
}
