//! Thinging Machine models: a static graph of thimacs and their five
//! generic actions, a dynamic level of events over regions of that graph,
//! and the tools built on both (validation, chronology and timing,
//! token-flow simulation, aspect classification, fixture corpus).

pub mod classify;
pub mod corpus;
pub mod diag;
pub mod dsl;
pub mod dynamics;
pub mod model;
pub mod par;
pub mod sim;
pub mod validate;

pub use diag::{Diagnostic, Severity, SourceSpan};
pub use model::Model;
