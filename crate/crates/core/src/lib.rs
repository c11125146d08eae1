//! Combinatorial bounds on classical simulations of multiparty quantum
//! correlations.
//!
//! The crate builds correlation problems (most importantly the GHZ phase
//! problem), searches for the largest monochromatic rectangles, turns them
//! into upper bounds on the detector efficiency and lower bounds on broadcast
//! communication, and checks those bounds against exact oracles: a linear
//! program over deterministic local strategies and explicit protocols.

pub mod bounds;
pub mod comm;
pub mod corrmodel;
pub mod error;
pub mod ghz;
pub mod json;
pub mod lhv;
pub mod lp;
pub mod rectangles;
pub mod space;

pub use error::{Error, Result};
