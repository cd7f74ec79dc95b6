//! Symplectic capacities of convex bodies relative to coisotropic subspaces.

pub mod bounds_inequalities;
pub mod chord_flow;
pub mod cli_io;
pub mod closed_forms;
pub mod convex_bodies;
pub mod dual_solver;
pub(crate) mod optim;
pub mod symplectic_core;
