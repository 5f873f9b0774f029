use std::fmt;

use serde::{Deserialize, Serialize};

use super::QueryError;
use crate::crypto::Shard;
use crate::table::{Column, ColumnType, Database, Schema, Value};

/// A relational-algebra query: selection over `source`, an optional
/// equi-join, then either grouping/aggregation or projection, then an
/// optional set operation against a second plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Predicate>,
    #[serde(default)]
    pub projection: Projection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aggregates: Vec<Aggregate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub group_by: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join: Option<JoinSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_op: Option<SetOperation>,
}

impl QueryPlan {
    /// `SELECT * FROM source`.
    pub fn scan(source: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            selection: None,
            projection: Projection::All,
            aggregates: Vec::new(),
            group_by: Vec::new(),
            join: None,
            set_op: None,
        }
    }

    /// `SELECT COUNT(*) FROM source`.
    pub fn count_all(source: impl Into<String>) -> Self {
        Self { aggregates: vec![Aggregate { func: AggFn::Count, column: None }], ..Self::scan(source) }
    }

    /// Check the plan against `catalog` and return its output schema.
    pub fn validate(&self, catalog: &dyn Catalog) -> Result<Vec<Column>, QueryError> {
        Ok(resolve(self, catalog)?.output)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    #[default]
    All,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AggFn {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

impl fmt::Display for AggFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggFn::Count => "COUNT",
            AggFn::Sum => "SUM",
            AggFn::Min => "MIN",
            AggFn::Max => "MAX",
            AggFn::Avg => "AVG",
        })
    }
}

/// `column: None` is `COUNT(*)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggregate {
    pub func: AggFn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl Aggregate {
    pub fn output_name(&self) -> String {
        format!("{}({})", self.func, self.column.as_deref().unwrap_or("*"))
    }
}

/// Equi-join with `table`, run at the Master. Columns of the joined table
/// are addressed as `table.column` afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub table: String,
    pub left_column: String,
    pub right_column: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetOp {
    Union,
    Intersect,
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetOperation {
    pub op: SetOp,
    pub plan: Box<QueryPlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Column(String),
    Value(Value),
}

/// Selection predicate over the source table's columns. An empty `And` is
/// true and an empty `Or` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Cmp { left: Operand, op: CmpOp, right: Operand },
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn cmp(left: Operand, op: CmpOp, right: Operand) -> Self {
        Predicate::Cmp { left, op, right }
    }
}

/// Where table schemas come from: the full database, or one shard.
pub trait Catalog {
    fn schema(&self, table: &str) -> Option<&Schema>;
}

impl Catalog for Database {
    fn schema(&self, table: &str) -> Option<&Schema> {
        self.get(table).map(|t| &t.schema)
    }
}

impl Catalog for std::collections::BTreeMap<String, Schema> {
    fn schema(&self, table: &str) -> Option<&Schema> {
        self.get(table)
    }
}

impl Catalog for Shard {
    fn schema(&self, table: &str) -> Option<&Schema> {
        self.slice(table).map(|s| &s.schema)
    }
}

// Resolved form used by the map/reduce engine.

#[derive(Debug, Clone)]
pub(crate) enum Term {
    Col(usize),
    Lit(Value),
}

#[derive(Debug, Clone)]
pub(crate) enum Pred {
    Cmp(Term, CmpOp, Term),
    And(Vec<Pred>),
    Or(Vec<Pred>),
    Not(Box<Pred>),
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedJoin {
    pub table: String,
    pub left_idx: usize,
    pub right_idx: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedAgg {
    pub func: AggFn,
    pub col: Option<usize>,
    pub input_ty: Option<ColumnType>,
}

#[derive(Debug, Clone)]
pub(crate) enum Shape {
    Project(Vec<usize>),
    /// `key_out[i]` indexes into the group key.
    Aggregate { group_idx: Vec<usize>, key_out: Vec<usize>, aggs: Vec<ResolvedAgg> },
}

#[derive(Debug, Clone)]
pub(crate) struct Resolved {
    pub source: String,
    pub selection: Option<Pred>,
    pub join: Option<ResolvedJoin>,
    pub shape: Shape,
    pub output: Vec<Column>,
    pub set_op: Option<(SetOp, Box<Resolved>)>,
}

fn column_index(cols: &[Column], name: &str) -> Result<usize, QueryError> {
    cols.iter().position(|c| c.name == name).ok_or_else(|| QueryError::UnknownColumn(name.to_string()))
}

fn term_type(t: &Term, cols: &[Column]) -> Result<ColumnType, QueryError> {
    match t {
        Term::Col(i) => Ok(cols[*i].ty),
        Term::Lit(v) => v.column_type().ok_or_else(|| QueryError::TypeMismatch("NULL literal".into())),
    }
}

fn resolve_pred(p: &Predicate, cols: &[Column]) -> Result<Pred, QueryError> {
    Ok(match p {
        Predicate::Cmp { left, op, right } => {
            let term = |o: &Operand| match o {
                Operand::Column(c) => column_index(cols, c).map(Term::Col),
                Operand::Value(v) => Ok(Term::Lit(v.clone())),
            };
            let (l, r) = (term(left)?, term(right)?);
            let (lt, rt) = (term_type(&l, cols)?, term_type(&r, cols)?);
            if lt.is_numeric() != rt.is_numeric() {
                return Err(QueryError::TypeMismatch(format!("cannot compare {lt} with {rt}")));
            }
            Pred::Cmp(l, *op, r)
        }
        Predicate::And(ps) => Pred::And(ps.iter().map(|p| resolve_pred(p, cols)).collect::<Result<_, _>>()?),
        Predicate::Or(ps) => Pred::Or(ps.iter().map(|p| resolve_pred(p, cols)).collect::<Result<_, _>>()?),
        Predicate::Not(p) => Pred::Not(Box::new(resolve_pred(p, cols)?)),
    })
}

/// Columns visible after the optional join: the source's, then the joined
/// table's prefixed with its name.
pub(crate) fn working_columns(plan: &QueryPlan, catalog: &dyn Catalog) -> Result<Vec<Column>, QueryError> {
    let source =
        catalog.schema(&plan.source).ok_or_else(|| QueryError::UnknownTable(plan.source.clone()))?;
    let mut cols = source.columns.clone();
    if let Some(j) = &plan.join {
        let right = catalog.schema(&j.table).ok_or_else(|| QueryError::UnknownTable(j.table.clone()))?;
        cols.extend(right.columns.iter().map(|c| Column::new(format!("{}.{}", j.table, c.name), c.ty)));
    }
    Ok(cols)
}

pub(crate) fn resolve(plan: &QueryPlan, catalog: &dyn Catalog) -> Result<Resolved, QueryError> {
    let source =
        catalog.schema(&plan.source).ok_or_else(|| QueryError::UnknownTable(plan.source.clone()))?;
    let selection = plan.selection.as_ref().map(|p| resolve_pred(p, &source.columns)).transpose()?;

    let join = match &plan.join {
        None => None,
        Some(j) => {
            let right = catalog.schema(&j.table).ok_or_else(|| QueryError::UnknownTable(j.table.clone()))?;
            let left_idx = column_index(&source.columns, &j.left_column)?;
            let right_idx = column_index(&right.columns, &j.right_column)?;
            let (lt, rt) = (source.columns[left_idx].ty, right.columns[right_idx].ty);
            if lt != rt {
                return Err(QueryError::TypeMismatch(format!("join on {lt} = {rt}")));
            }
            Some(ResolvedJoin { table: j.table.clone(), left_idx, right_idx })
        }
    };
    let working = working_columns(plan, catalog)?;

    let (shape, output) = if plan.aggregates.is_empty() && plan.group_by.is_empty() {
        let idx = match &plan.projection {
            Projection::All => (0..working.len()).collect(),
            Projection::Columns(cs) => cs.iter().map(|c| column_index(&working, c)).collect::<Result<Vec<_>, _>>()?,
        };
        let output = idx.iter().map(|&i| working[i].clone()).collect();
        (Shape::Project(idx), output)
    } else {
        let group_idx =
            plan.group_by.iter().map(|c| column_index(&working, c)).collect::<Result<Vec<_>, _>>()?;
        let key_out: Vec<usize> = match &plan.projection {
            Projection::All => (0..group_idx.len()).collect(),
            Projection::Columns(cs) => cs
                .iter()
                .map(|c| {
                    plan.group_by
                        .iter()
                        .position(|g| g == c)
                        .ok_or_else(|| QueryError::ProjectionNotGrouped(c.clone()))
                })
                .collect::<Result<_, _>>()?,
        };
        let mut output: Vec<Column> = key_out.iter().map(|&k| working[group_idx[k]].clone()).collect();
        let mut aggs = Vec::new();
        for a in &plan.aggregates {
            let col = a.column.as_ref().map(|c| column_index(&working, c)).transpose()?;
            let input_ty = col.map(|i| working[i].ty);
            if a.func != AggFn::Count && !input_ty.is_some_and(ColumnType::is_numeric) {
                return Err(QueryError::NonNumericAggregate(a.output_name()));
            }
            let out_ty = match (a.func, input_ty) {
                (AggFn::Count, _) => ColumnType::Integer,
                (AggFn::Avg, _) => ColumnType::Float,
                (_, Some(t)) => t,
                (_, None) => unreachable!("checked above"),
            };
            output.push(Column::new(a.output_name(), out_ty));
            aggs.push(ResolvedAgg { func: a.func, col, input_ty });
        }
        (Shape::Aggregate { group_idx, key_out, aggs }, output)
    };

    let set_op = match &plan.set_op {
        None => None,
        Some(s) => {
            let other = resolve(&s.plan, catalog)?;
            let lt: Vec<ColumnType> = output.iter().map(|c| c.ty).collect();
            let rt: Vec<ColumnType> = other.output.iter().map(|c| c.ty).collect();
            if lt != rt {
                return Err(QueryError::SetOpIncompatible(format!("{lt:?} vs {rt:?}")));
            }
            Some((s.op, Box::new(other)))
        }
    };

    Ok(Resolved { source: plan.source.clone(), selection, join, shape, output, set_op })
}
