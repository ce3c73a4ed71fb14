//! Standard-form conic programs over zero, nonnegative and second-order
//! cones, plus the pieces needed to build and solve them:
//!
//! * [`ConicProgram`] holds `minimize cᵀx  s.t.  Ax + s = b, s ∈ K` with `A`
//!   in sparse triplet form and `K` an ordered product of cones.
//! * [`transforms`] rewrites hyperbolic constraints and products of
//!   nonnegative variables as second-order cones.
//! * [`solver`] is a primal-dual interior-point method on the homogeneous
//!   self-dual embedding with Nesterov–Todd scaling.
//! * [`text`] reads and writes a plain-text sparse format so programs can be
//!   cross-checked against other conic solvers.

pub mod cones;
mod ldl;
pub mod program;
pub mod residuals;
pub mod solver;
mod sparse;
pub mod text;
pub mod transforms;
pub mod validate;

pub use program::{Affine, Cone, ConicProgram, MapError, VarRange, VariableMap};
pub use residuals::{residuals, ResidualReport};
pub use solver::{
    solve, ConicSolver, InteriorPoint, Solution, SolverError, SolverRegistry, SolverSettings,
    Status,
};
pub use transforms::{add_hyperbolic, gm_tree, GmTree, TransformError};
pub use validate::{validate, Diagnostics, Issue};
