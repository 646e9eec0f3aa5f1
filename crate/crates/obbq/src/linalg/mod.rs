//! Dense-transform direct solvers and Krylov iterations.

pub mod krylov;
pub mod separable;
