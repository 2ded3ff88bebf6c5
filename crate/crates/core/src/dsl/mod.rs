//! Concrete syntax (`.tm`) plus DOT and JSON exporters.

mod dot;
mod json;
mod lexer;
mod parser;
mod render;

pub use dot::{export_dot, DotError, Level};
pub use json::{export_json, import_json, JsonError, ModelDoc};
pub use parser::{parse_model, KEYWORDS};
pub use render::render_model;
