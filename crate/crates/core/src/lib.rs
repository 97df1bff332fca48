//! Object rearrangement from raster observations with a factorized
//! transition graph.
//!
//! The pipeline: [`env`] simulates a grid or tabletop scene and renders it,
//! [`perception`] turns a raster into a set of (type, state) entities,
//! [`graph`] abstracts an experience buffer into a graph over single-entity
//! state clusters, and [`controller`] solves new tasks by looking up one edge
//! per step. [`baselines`] and [`harness`] provide the comparison methods and
//! the evaluation protocol.

pub mod assignment;
pub mod baselines;
pub mod buffer;
pub mod config;
pub mod controller;
pub mod env;
pub mod graph;
pub mod harness;
pub mod kmeans;
pub mod kv;
pub mod metric;
pub mod perception;
pub mod raster;
pub mod rng;
pub mod state;

/// The guide's code samples, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/perception.md")]
    mod perception {}
    #[doc = include_str!("../../../book/src/transition-graph.md")]
    mod transition_graph {}
    #[doc = include_str!("../../../book/src/control.md")]
    mod control {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
