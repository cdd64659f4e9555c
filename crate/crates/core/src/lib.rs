//! Reachability types with cyclic references, shallow reference tracking and
//! dual-component references: syntax, qualifier algebra, subtyping, a
//! bidirectional checker, a small-step evaluator and dynamic metatheory
//! oracles.

pub mod diag;
pub mod env;
pub mod eval;
pub mod gen;
pub mod graph;
pub mod meta;
pub mod parse;
pub mod print;
pub mod qual;
pub mod subtype;
pub mod syntax;
pub mod typeck;
