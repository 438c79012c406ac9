//! Report generation and pipeline orchestration behind the `enscore`
//! binary. Exposed as a library so the verification suite can drive the
//! pipeline and audit emitted tables directly.

pub mod config;
pub mod emit;
pub mod report;
pub mod svg;
pub mod table;
