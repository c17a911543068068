//! Kobayashi–Fuks metric engine for bounded planar domains.
//!
//! The crate builds Bergman-kernel derivative jets, the Bergman and
//! Kobayashi–Fuks metrics derived from them, integrates geodesics, measures
//! boundary asymptotics and searches for geodesic loops, closed geodesics and
//! spirals on multiply connected domains.

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod geodesic;
pub mod kernel;
pub mod metric;
pub mod real;
pub mod report;
pub mod spiral;

pub use error::{Error, Result};
