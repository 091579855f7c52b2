// Negated comparisons are how NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod kernel;

pub use error::{EqmError, Result};
pub use grid::{Grid, Interval, Resolution};
pub use kernel::LogKernelOperator;
pub mod potential;
pub mod solver;
pub mod analysis;
pub use potential::{PotentialConfig, PotentialSpec};
pub use solver::{ConstraintSet, MeasureSolution, SolverConfig};
pub mod field;
pub mod quadrature;
pub mod oracle;
