//! Three-well interface lab.
//!
//! Numerical toolkit for planar phase fields whose potential has three
//! distinct zero minima. The pipeline runs in six stages:
//!
//! 1. build and sanity-check the potential ([`potential`]);
//! 2. measure the degenerate geodesic distance between wells ([`geodesics`]);
//! 3. solve the one-dimensional connection profiles ([`heteroclinic`]);
//! 4. derive the triple-junction opening angles ([`junction`]);
//! 5. assemble the boundary ansatz and relax the semilinear system on the
//!    unit disk ([`ansatz`], [`solver`]);
//! 6. compare the relaxed fields against the sharp-interface partition
//!    ([`sharp_interface`]).
//!
//! The `tripoint` binary drives the same stages from TOML configs and writes
//! CSV tables, raw field dumps, and a checksummed run manifest ([`config`],
//! [`output`], [`pipeline`]).

pub mod ansatz;
pub mod config;
pub mod geodesics;
pub mod heteroclinic;
pub mod junction;
pub mod output;
pub mod pipeline;
pub mod potential;
pub mod rng;
pub mod sharp_interface;
pub mod solver;
pub mod vec2;

pub use vec2::Vec2;
