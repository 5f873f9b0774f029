use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::accum::{compare_values, AggAcc};
use super::plan::{resolve, Catalog, Pred, Resolved, Shape, SetOp, Term};
use super::{QueryError, QueryPlan};
use crate::crypto::Shard;
use crate::table::{Column, Row, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupState {
    pub key: Vec<Value>,
    pub accs: Vec<AggAcc>,
}

/// What one shard contributes to a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartialBody {
    /// Selected and projected rows.
    RowSet(Vec<Row>),
    /// Accumulator per group, sorted by key.
    AggState(Vec<GroupState>),
    /// Selected source rows and the joined table's rows, joined at the Master.
    Join { left: Vec<Row>, right: Vec<Row> },
    SetOp { left: Box<PartialBody>, right: Box<PartialBody> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialResult {
    pub shard_id: u32,
    pub body: PartialBody,
}

impl PartialResult {
    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("partials serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, QueryError> {
        serde_json::from_slice(bytes).map_err(|e| QueryError::Encoding(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub columns: Vec<Column>,
    /// Canonically sorted.
    pub rows: Vec<Row>,
    /// Shards whose partials were reduced; empty for the oracle.
    pub provenance: Vec<u32>,
    pub epoch: u64,
}

impl QueryResult {
    /// Same columns and rows, ignoring provenance and epoch.
    pub fn same_answer(&self, other: &QueryResult) -> bool {
        self.columns == other.columns && self.rows == other.rows
    }
}

fn term<'a>(t: &'a Term, row: &'a Row) -> &'a Value {
    match t {
        Term::Col(i) => &row[*i],
        Term::Lit(v) => v,
    }
}

fn eval(p: &Pred, row: &Row) -> Result<bool, QueryError> {
    Ok(match p {
        Pred::Cmp(l, op, r) => {
            let (a, b) = (term(l, row), term(r, row));
            let ord = compare_values(a, b)
                .ok_or_else(|| QueryError::TypeMismatch(format!("cannot compare {a:?} with {b:?}")))?;
            op.holds(ord)
        }
        Pred::And(ps) => {
            for p in ps {
                if !eval(p, row)? {
                    return Ok(false);
                }
            }
            true
        }
        Pred::Or(ps) => {
            for p in ps {
                if eval(p, row)? {
                    return Ok(true);
                }
            }
            false
        }
        Pred::Not(p) => !eval(p, row)?,
    })
}

fn slice_rows<'a>(shard: &'a Shard, table: &str) -> Result<&'a [Row], QueryError> {
    shard.slice(table).map(|s| s.rows.as_slice()).ok_or_else(|| QueryError::UnknownTable(table.to_string()))
}

fn aggregate_rows<'a>(
    rows: impl IntoIterator<Item = &'a Row>,
    group_idx: &[usize],
    aggs: &[super::plan::ResolvedAgg],
) -> BTreeMap<Vec<Value>, Vec<AggAcc>> {
    let mut groups: BTreeMap<Vec<Value>, Vec<AggAcc>> = BTreeMap::new();
    if group_idx.is_empty() {
        groups.insert(Vec::new(), vec![AggAcc::default(); aggs.len()]);
    }
    for row in rows {
        let key: Vec<Value> = group_idx.iter().map(|&i| row[i].clone()).collect();
        let accs = groups.entry(key).or_insert_with(|| vec![AggAcc::default(); aggs.len()]);
        for (acc, a) in accs.iter_mut().zip(aggs) {
            acc.push(a.col.map(|i| &row[i]));
        }
    }
    groups
}

fn to_states(groups: BTreeMap<Vec<Value>, Vec<AggAcc>>) -> Vec<GroupState> {
    groups.into_iter().map(|(key, accs)| GroupState { key, accs }).collect()
}

fn map_body(r: &Resolved, shard: &Shard) -> Result<PartialBody, QueryError> {
    let mut selected = Vec::new();
    for row in slice_rows(shard, &r.source)? {
        if r.selection.as_ref().map_or(Ok(true), |p| eval(p, row))? {
            selected.push(row);
        }
    }
    let body = if let Some(j) = &r.join {
        PartialBody::Join {
            left: selected.into_iter().cloned().collect(),
            right: slice_rows(shard, &j.table)?.to_vec(),
        }
    } else {
        match &r.shape {
            Shape::Project(idx) => {
                PartialBody::RowSet(selected.iter().map(|row| idx.iter().map(|&i| row[i].clone()).collect()).collect())
            }
            Shape::Aggregate { group_idx, aggs, .. } => {
                PartialBody::AggState(to_states(aggregate_rows(selected, group_idx, aggs)))
            }
        }
    };
    Ok(match &r.set_op {
        None => body,
        Some((_, other)) => PartialBody::SetOp { left: Box::new(body), right: Box::new(map_body(other, shard)?) },
    })
}

/// Map step: run `plan` against one decrypted shard. Pure.
pub fn map_shard(plan: &QueryPlan, shard: &Shard) -> Result<PartialResult, QueryError> {
    let resolved = resolve(plan, shard)?;
    Ok(PartialResult { shard_id: shard.shard_id, body: map_body(&resolved, shard)? })
}

/// On-the-fly map: the same computation, invoked against the shard a ball
/// carries before it reaches its obstacle.
pub fn onfly_execute(plan: &QueryPlan, shard: &Shard) -> Result<PartialResult, QueryError> {
    map_shard(plan, shard)
}

// Join keys compare like `=` in a predicate, so -0.0 matches 0.0.
fn join_key(v: &Value) -> Value {
    match v {
        Value::Float(x) if *x == 0.0 => Value::Float(0.0),
        other => other.clone(),
    }
}

enum Merged {
    Rows(Vec<Row>),
    Groups(BTreeMap<Vec<Value>, Vec<AggAcc>>),
    Join(Vec<Row>, Vec<Row>),
    SetOp(Box<Merged>, Box<Merged>),
}

fn start(body: PartialBody) -> Merged {
    match body {
        PartialBody::RowSet(rows) => Merged::Rows(rows),
        PartialBody::AggState(states) => Merged::Groups(states.into_iter().map(|g| (g.key, g.accs)).collect()),
        PartialBody::Join { left, right } => Merged::Join(left, right),
        PartialBody::SetOp { left, right } => Merged::SetOp(Box::new(start(*left)), Box::new(start(*right))),
    }
}

fn merge(into: &mut Merged, body: PartialBody) -> Result<(), QueryError> {
    match (into, body) {
        (Merged::Rows(acc), PartialBody::RowSet(rows)) => acc.extend(rows),
        (Merged::Groups(acc), PartialBody::AggState(states)) => {
            for g in states {
                match acc.get_mut(&g.key) {
                    Some(accs) => accs.iter_mut().zip(&g.accs).for_each(|(a, b)| a.merge(b)),
                    None => {
                        acc.insert(g.key, g.accs);
                    }
                }
            }
        }
        (Merged::Join(l, r), PartialBody::Join { left, right }) => {
            l.extend(left);
            r.extend(right);
        }
        (Merged::SetOp(l, r), PartialBody::SetOp { left, right }) => {
            merge(l, *left)?;
            merge(r, *right)?;
        }
        _ => return Err(QueryError::PartialShape),
    }
    Ok(())
}

fn finalize_groups(
    groups: &BTreeMap<Vec<Value>, Vec<AggAcc>>,
    key_out: &[usize],
    aggs: &[super::plan::ResolvedAgg],
) -> Result<Vec<Row>, QueryError> {
    let mut out = Vec::with_capacity(groups.len());
    for (key, accs) in groups {
        let mut row: Row = key_out.iter().map(|&k| key[k].clone()).collect();
        for (acc, a) in accs.iter().zip(aggs) {
            row.push(acc.finalize(a)?);
        }
        out.push(row);
    }
    Ok(out)
}

fn finish(r: &Resolved, merged: Merged) -> Result<Vec<Row>, QueryError> {
    let mut rows = match (merged, &r.shape) {
        (Merged::SetOp(l, rt), _) => {
            let (op, other) = r.set_op.as_ref().ok_or(QueryError::PartialShape)?;
            let base = Resolved { set_op: None, ..r.clone() };
            let left: BTreeSet<Row> = finish(&base, *l)?.into_iter().collect();
            let right: BTreeSet<Row> = finish(other, *rt)?.into_iter().collect();
            return Ok(match op {
                SetOp::Union => left.union(&right).cloned().collect(),
                SetOp::Intersect => left.intersection(&right).cloned().collect(),
                SetOp::Difference => left.difference(&right).cloned().collect(),
            });
        }
        (Merged::Rows(rows), Shape::Project(_)) => rows,
        (Merged::Groups(groups), Shape::Aggregate { key_out, aggs, .. }) => finalize_groups(&groups, key_out, aggs)?,
        (Merged::Join(left, right), shape) => {
            let j = r.join.as_ref().ok_or(QueryError::PartialShape)?;
            let mut index: BTreeMap<Value, Vec<&Row>> = BTreeMap::new();
            for row in &right {
                index.entry(join_key(&row[j.right_idx])).or_default().push(row);
            }
            let mut joined = Vec::new();
            for l in &left {
                for rrow in index.get(&join_key(&l[j.left_idx])).into_iter().flatten() {
                    joined.push(l.iter().chain(rrow.iter()).cloned().collect::<Row>());
                }
            }
            match shape {
                Shape::Project(idx) => joined.iter().map(|row| idx.iter().map(|&i| row[i].clone()).collect()).collect(),
                Shape::Aggregate { group_idx, key_out, aggs } => {
                    finalize_groups(&aggregate_rows(&joined, group_idx, aggs), key_out, aggs)?
                }
            }
        }
        _ => return Err(QueryError::PartialShape),
    };
    rows.sort();
    Ok(rows)
}

/// Reduce step at the Master. Requires exactly one partial for each shard
/// id in `0..shard_count`; the arrival order of `partials` does not matter.
pub fn reduce(
    plan: &QueryPlan,
    catalog: &dyn Catalog,
    mut partials: Vec<PartialResult>,
    shard_count: u32,
    epoch: u64,
) -> Result<QueryResult, QueryError> {
    let resolved = resolve(plan, catalog)?;
    partials.sort_by_key(|p| p.shard_id);
    for w in partials.windows(2) {
        if w[0].shard_id == w[1].shard_id {
            return Err(QueryError::DuplicateShard(w[0].shard_id));
        }
    }
    if let Some(p) = partials.iter().find(|p| p.shard_id >= shard_count) {
        return Err(QueryError::UnexpectedShard(p.shard_id));
    }
    if let Some(missing) = (0..shard_count).find(|&i| partials.get(i as usize).map(|p| p.shard_id) != Some(i)) {
        return Err(QueryError::MissingShard(missing));
    }
    let provenance = partials.iter().map(|p| p.shard_id).collect();
    let mut iter = partials.into_iter();
    let first = iter.next().ok_or(QueryError::MissingShard(0))?;
    let mut merged = start(first.body);
    for p in iter {
        merge(&mut merged, p.body)?;
    }
    Ok(QueryResult { columns: resolved.output.clone(), rows: finish(&resolved, merged)?, provenance, epoch })
}
