//! Matrix-free trace estimation for sequences of slowly changing matrices.
//!
//! Matrices are touched only through [`oracle::MatVecOracle`]. The
//! [`estimators`] module provides Hutchinson, Hutch++ and the dynamic
//! estimators (NoRestart, Restart, DeltaShift with fixed or automatic
//! damping, DeltaShift++). [`harness`] runs them over synthetic matrix
//! sequences and dynamic graphs and writes CSV records.

pub mod dyngraph;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod matfunc;
pub mod oracle;
pub mod probes;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
