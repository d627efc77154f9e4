//! Sublinear expectations for maximal, semi-G-normal and G-normal
//! distributions, with backward-recursion solvers and independent oracles.

pub mod capacity;
pub mod clt;
pub mod config;
pub mod dp;
pub mod error;
pub mod grid;
pub mod joint;
pub mod kernel;
pub mod maximal;
pub mod pde;
pub mod search;
pub mod semignormal;
pub mod test_functions;
pub mod verify;

pub use error::{Error, Result};
pub use maximal::{MaximalDist, VarianceBand};
pub use test_functions::{Convexity, FunctionKind, TestFunction};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
