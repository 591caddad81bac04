//! Config-driven experiment runner for the `precond` solvers.

pub mod compare;
pub mod config;
pub mod io;
pub mod report;
pub mod run;
