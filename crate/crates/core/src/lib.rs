//! Deductive database engine: parsing, analysis, evaluation and SQL offload
//! for a Datalog dialect with choice, user-defined aggregates and XY-stratified
//! recursion.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod lang;
pub mod session;
pub mod sqlgen;
pub mod store;
pub mod uda;
pub mod value;

pub use error::{Diagnostic, Error, Result};
pub use value::Value;
