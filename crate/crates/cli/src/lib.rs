//! Library side of the `dache` command: SQL front-end, inputs, manifests
//! and the experiment runners.

pub mod experiments;
pub mod input;
pub mod manifest;
pub mod sql;
