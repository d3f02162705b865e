//! Dense optimization kernels: LP, polyhedral projection, scalar and grid search.

pub mod lp;
pub mod qp;
pub mod scalar;
pub mod search;

pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use qp::project_polyhedron;
pub use scalar::minimize_scalar;
pub use search::{grid_multistart_min, SearchSpec};
