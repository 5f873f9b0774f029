//! Random tables and valid plans for equivalence testing.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::plan::{AggFn, Aggregate, CmpOp, JoinSpec, Operand, Predicate, Projection, SetOp, SetOperation};
use super::QueryPlan;
use crate::table::{database, Column, ColumnType, Database, Schema, Table, Value};

const WORDS: [&str; 8] = ["ash", "birch", "cedar", "elm", "fir", "oak", "pine", "yew"];

pub fn random_schema() -> Schema {
    Schema::new(vec![
        Column::new("id", ColumnType::Integer),
        Column::new("g", ColumnType::Integer),
        Column::new("x", ColumnType::Float),
        Column::new("s", ColumnType::Text),
    ])
}

fn random_float<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        // Short binary fractions collide often, which exercises grouping.
        0 => rng.random_range(-40..40) as f64 / 4.0,
        1 => rng.random_range(-1.0e6..1.0e6),
        2 => rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-12..12)),
        _ => rng.random_range(-100.0..100.0),
    }
}

fn random_row<R: Rng + ?Sized>(rng: &mut R, id: i64) -> Vec<Value> {
    vec![
        Value::Integer(id),
        Value::Integer(rng.random_range(-3..7)),
        Value::Float(random_float(rng)),
        Value::Text(WORDS.choose(rng).expect("non-empty").to_string()),
    ]
}

/// Two tables `t` and `u` with the same schema and up to `max_rows` rows
/// each. About a third of `u` copies rows of `t`, so set operations have
/// non-trivial overlap.
pub fn random_database<R: Rng + ?Sized>(rng: &mut R, max_rows: usize) -> Database {
    let nt = rng.random_range(0..=max_rows);
    let nu = rng.random_range(0..=max_rows);
    let t_rows: Vec<_> = (0..nt).map(|i| random_row(rng, i as i64)).collect();
    let u_rows: Vec<_> = (0..nu)
        .map(|i| match t_rows.choose(rng) {
            Some(r) if rng.random_bool(0.35) => r.clone(),
            _ => random_row(rng, i as i64),
        })
        .collect();
    database([
        Table::new("t", random_schema(), t_rows).expect("generated rows match schema"),
        Table::new("u", random_schema(), u_rows).expect("generated rows match schema"),
    ])
}

fn random_literal<R: Rng + ?Sized>(rng: &mut R, ty: ColumnType) -> Value {
    match ty {
        ColumnType::Integer if rng.random_bool(0.2) => Value::Float(rng.random_range(-40..40) as f64 / 8.0),
        ColumnType::Integer => Value::Integer(rng.random_range(-4..8)),
        ColumnType::Float if rng.random_bool(0.2) => Value::Integer(rng.random_range(-10..10)),
        ColumnType::Float => Value::Float(random_float(rng)),
        ColumnType::Text => {
            let w = WORDS.choose(rng).expect("non-empty");
            // Occasionally a prefix, which sorts between words.
            Value::Text(if rng.random_bool(0.2) { w[..2].to_string() } else { w.to_string() })
        }
    }
}

fn random_predicate<R: Rng + ?Sized>(rng: &mut R, schema: &Schema, depth: u32) -> Predicate {
    let leaf = depth == 0 || rng.random_bool(0.5);
    if leaf {
        let col = schema.columns.choose(rng).expect("non-empty");
        let op = *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge].choose(rng).expect("non-empty");
        let other = if rng.random_bool(0.15) {
            // Column against column of a compatible type.
            let peers: Vec<&Column> =
                schema.columns.iter().filter(|c| c.ty.is_numeric() == col.ty.is_numeric()).collect();
            Operand::Column(peers.choose(rng).expect("col itself qualifies").name.clone())
        } else {
            Operand::Value(random_literal(rng, col.ty))
        };
        let (l, r) = (Operand::Column(col.name.clone()), other);
        return if rng.random_bool(0.5) { Predicate::cmp(l, op, r) } else { Predicate::cmp(r, op, l) };
    }
    let n = rng.random_range(0..=3);
    let kids = (0..n).map(|_| random_predicate(rng, schema, depth - 1)).collect();
    match rng.random_range(0..3) {
        0 => Predicate::And(kids),
        1 => Predicate::Or(kids),
        _ => Predicate::Not(Box::new(random_predicate(rng, schema, depth - 1))),
    }
}

fn subset<R: Rng + ?Sized>(rng: &mut R, names: &[String], min: usize) -> Vec<String> {
    let k = rng.random_range(min..=names.len().min(3).max(min));
    names.choose_multiple(rng, k).cloned().collect()
}

/// A random plan that validates against a database from [`random_database`].
pub fn random_plan<R: Rng + ?Sized>(rng: &mut R) -> QueryPlan {
    let schema = random_schema();
    let source = if rng.random_bool(0.5) { "t" } else { "u" };
    let mut plan = QueryPlan::scan(source);
    if rng.random_bool(0.8) {
        plan.selection = Some(random_predicate(rng, &schema, 2));
    }
    let mut working: Vec<Column> = schema.columns.clone();
    if rng.random_bool(0.2) {
        let other = if source == "t" { "u" } else { "t" };
        let key = if rng.random_bool(0.5) { "g" } else { "s" };
        plan.join = Some(JoinSpec { table: other.into(), left_column: key.into(), right_column: key.into() });
        working.extend(schema.columns.iter().map(|c| Column::new(format!("{other}.{}", c.name), c.ty)));
    }
    let names: Vec<String> = working.iter().map(|c| c.name.clone()).collect();
    let numeric: Vec<String> = working.iter().filter(|c| c.ty.is_numeric()).map(|c| c.name.clone()).collect();

    match rng.random_range(0..3) {
        0 => {
            if rng.random_bool(0.6) {
                plan.projection = Projection::Columns(subset(rng, &names, 1));
            }
        }
        mode => {
            if mode == 2 {
                let groupable: Vec<String> =
                    names.iter().filter(|n| !n.ends_with('x') && !n.ends_with("id")).cloned().collect();
                plan.group_by = subset(rng, &groupable, 1);
                if rng.random_bool(0.3) {
                    plan.projection = Projection::Columns(subset(rng, &plan.group_by, 0));
                }
            }
            let n_aggs = rng.random_range(if plan.group_by.is_empty() { 1 } else { 0 }..=3);
            for _ in 0..n_aggs {
                let func = *[AggFn::Count, AggFn::Sum, AggFn::Min, AggFn::Max, AggFn::Avg].choose(rng).expect("non-empty");
                let column = match func {
                    AggFn::Count if rng.random_bool(0.5) => None,
                    AggFn::Count => Some(names.choose(rng).expect("non-empty").clone()),
                    _ => Some(numeric.choose(rng).expect("non-empty").clone()),
                };
                plan.aggregates.push(Aggregate { func, column });
            }
        }
    }

    if rng.random_bool(0.25) {
        let mut other = plan.clone();
        other.source = if rng.random_bool(0.5) { "t".into() } else { "u".into() };
        other.selection = rng.random_bool(0.8).then(|| random_predicate(rng, &schema, 2));
        let op = *[SetOp::Union, SetOp::Intersect, SetOp::Difference].choose(rng).expect("non-empty");
        plan.set_op = Some(SetOperation { op, plan: Box::new(other) });
    }
    plan
}
