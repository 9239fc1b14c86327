//! Mapping language, processor-space algebra, cost simulator and mapper
//! search.

pub mod binder;
pub mod dsl;
pub mod eval;
pub mod feedback;
pub mod kinds;
pub mod machine;
pub mod search;
pub mod sim;

pub use kinds::{MemKind, ProcKind};
