//! Command-line front end: a registry of verbs over the `sublinear` library,
//! with JSON/CSV outputs and a manifest per run.

pub mod registry;
pub mod run;
mod verbs;

pub use run::{run, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
