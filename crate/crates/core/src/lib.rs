// Guards like `!(x > 0.0)` are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chaos;
pub mod crypto;
pub mod geometry;
pub mod orchestrator;
pub mod par;
pub mod query;
pub mod stats;
pub mod table;
