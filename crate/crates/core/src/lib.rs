//! Fairest equivalent measures for multi-exchange price processes on
//! finite scenario lattices.
//!
//! * [`lattice`]: path lattices, filtrations, measures, densities and
//!   conditional expectations.
//! * [`gbm`]: correlated geometric Brownian motions on a lattice,
//!   calibration and the binomial martingale measure.
//! * [`unfairness`]: the functionals `m` and `n`.
//! * [`solver`]: constrained minimization of `m` or `n` over equivalent
//!   measures, with a grid oracle and a stationarity check.
//! * [`cli`]: configuration, file formats and the batch commands.

pub mod cli;
pub mod error;
pub mod gbm;
pub mod lattice;
pub mod solver;
pub mod unfairness;

pub use error::{Error, Result};
pub use lattice::{AdaptedLattice, Density, LatticeProcess, Measure};
pub use solver::{
    brute_force_min, check_constraints, kkt_residual, minimize, project_box_simplex, ConstraintParams, Objective,
    SolveOptions, SolveReport,
};
pub use unfairness::{inner_product_m, is_martingale, unfairness_m, unfairness_n, UnfairnessConfig};
