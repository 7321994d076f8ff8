//! Hamilton-Jacobi reachability with chained subsystem decomposition.
//!
//! The full-dimensional solver in [`levelset`] computes backward reachable
//! tubes directly. The [`decomp`] module splits a model along its
//! [`depgraph`] into low-dimensional subsystems that treat the states they
//! do not carry as bounded disturbances, and recombines them into an
//! over-approximation. [`synth`] turns either result into a controller.

pub mod decomp;
pub mod depgraph;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod interval;
pub mod levelset;
pub mod manifest;
pub mod synth;
pub mod target;

pub use error::{Error, ErrorKind, Result};
pub use grid::{Grid, SliceSpec, ValueFunction};
pub use interval::{Interval, IntervalUnion};
pub use target::{target_levelset, TargetSpec};
