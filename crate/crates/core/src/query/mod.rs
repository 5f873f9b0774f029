//! Relational queries in MapReduce form.
//!
//! A [`QueryPlan`] is mapped over each decrypted shard into a
//! [`PartialResult`]. The Master reduces the partials of all shards into a
//! [`QueryResult`]. Aggregates travel as mergeable accumulator states and
//! are finalized once, after the last partial arrives. Float sums are exact
//! until that final rounding, so the answer does not depend on how rows
//! were sharded or in which order partials arrived.
//!
//! [`execute_oracle`] runs the same plan directly on the unsharded tables
//! and serves as the reference.

mod accum;
mod engine;
pub mod gen;
mod oracle;
mod plan;

use thiserror::Error;

pub use accum::{compare_values, AggAcc, ExactSum};
pub use engine::{map_shard, onfly_execute, reduce, GroupState, PartialBody, PartialResult, QueryResult};
pub use oracle::execute_oracle;
pub use plan::{
    AggFn, Aggregate, Catalog, CmpOp, JoinSpec, Operand, Predicate, Projection, QueryPlan, SetOp, SetOperation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("{0} needs a numeric column")]
    NonNumericAggregate(String),
    #[error("column `{0}` is selected but not grouped")]
    ProjectionNotGrouped(String),
    #[error("set operation operands are not union-compatible: {0}")]
    SetOpIncompatible(String),
    #[error("no partial for shard {0}")]
    MissingShard(u32),
    #[error("two partials for shard {0}")]
    DuplicateShard(u32),
    #[error("partial for shard {0}, which is outside the epoch's shard range")]
    UnexpectedShard(u32),
    #[error("partials from different plans cannot be merged")]
    PartialShape,
    #[error("integer overflow: {0}")]
    Overflow(String),
    #[error("partial encoding: {0}")]
    Encoding(String),
}
