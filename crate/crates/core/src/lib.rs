//! Control co-design of graph-based power-system models.
//!
//! The crate is organised bottom-up: [`graph`] holds the conservation-graph
//! model, [`components`] and [`hev`] build the vehicle, [`sim`] integrates
//! it, [`mpc`] closes the loop and [`ccd`] scores and optimises designs.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ccd;
pub mod components;
pub mod graph;
pub mod hev;
pub mod maps;
pub mod mpc;
pub mod sim;
