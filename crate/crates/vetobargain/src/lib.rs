//! Solvers and numerical certificates for sequential veto bargaining with a
//! privately informed Vetoer.

pub mod error;
pub mod leapfrog;
pub mod outcome;
pub mod primitives;
pub mod skim;
pub mod static_mech;
pub mod two_type;
pub mod verify;

pub use error::{Error, Result};
