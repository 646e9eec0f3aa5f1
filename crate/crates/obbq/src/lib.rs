//! Large forward self-similar profiles of the Oberbeck–Boussinesq system
//! with Newtonian gravity.
//!
//! Pipeline: heat profiles of homogeneous data ([`heat`]), λ-continuation on
//! a truncated cube with cutoff gravity ([`solver`]), invading domains
//! ([`sweep`]) and checks of the resulting profiles ([`verify`]). The core is
//! generic over [`Real`]; the aliases below fix `f64`.

pub mod error;
pub mod grid;
pub mod heat;
pub mod initial_data;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod quadrature;
pub mod real;
pub mod solver;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;

pub type Grid = grid::Grid<f64>;
pub type ScalarField = grid::ScalarField<f64>;
pub type VectorField = grid::VectorField<f64>;
pub type HomogeneousData = initial_data::HomogeneousData<f64>;
pub type HeatProfiles = heat::HeatProfiles<f64>;
pub type OperatorSet = operators::OperatorSet<f64>;
pub type ContinuationState = solver::ContinuationState<f64>;
pub type Solver<'a> = solver::Solver<'a, f64>;
pub type SweepResult = sweep::SweepResult<f64>;
