//! Differentiable co-optimization of freeform geometry and process scalars
//! through a transient Eulerian multiphysics rollout.
//!
//! The crate is organized around a field-level reverse-mode tape
//! ([`autodiff`]): the solver ([`solver`]), geometry network ([`geometry`]),
//! material models ([`materials`]) and objectives ([`losses`]) are all
//! expressed as tape programs, so a whole cooking rollout can be
//! differentiated end to end with respect to the neural footprint weights
//! and the bounded process scalars ([`optimizer`]). Case orchestration,
//! calibration and serialization live in [`driver`], [`config`] and [`io`].

pub mod autodiff;
pub mod config;
pub mod driver;
pub mod error;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod losses;
pub mod materials;
pub mod optimizer;
pub mod smooth;
pub mod solver;

// re-exports added as modules land
pub use error::CookError;
pub use field::Field;
pub use grid::Grid;
