//! Finite-difference discretization on tensor grids: conservative diffusion
//! in `X`, upwind transport in `Y`, backward differences in `t`.

mod assemble;
mod field;
mod grid;
mod solve;
pub(crate) mod stencil;

pub use assemble::{assemble, assemble_with, transport_field, AssembleOptions, SparseOperator};
pub(crate) use assemble::transport_stencil;
pub use field::{read_binary_raw, DiscreteField};
pub use grid::{build_grid, Axis, Grid, NodeClass, Resolution};
pub use solve::{
    relative_residual, solve_direct, solve_direct_with, solve_problem, weak_residual, SolveOptions,
    SolveReport,
};
pub use stencil::{slice_stiffness, Stiffness};
