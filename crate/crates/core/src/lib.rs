//! Boundary blow-up solutions of HJB equations with singular weights:
//! regime classification, barrier constants, a damped monotone iteration
//! solver, verification diagnostics and a stochastic control check.

pub mod cli;
pub mod config;
pub mod control;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod mesh;
pub mod model;
pub mod solver;
pub mod tridiag;

pub use cli::run_command;
pub use error::{Error, Result};
pub use mesh::{Field1D, Field2D, Grid1D, Grid2D};
pub use model::{ProblemSpec, Regime, RegimeKind};
pub use solver::{solve_1d, solve_2d, SolveReport, SolverConfig};
