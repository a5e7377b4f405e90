//! Forward simulation, sensitivities and optimal control for the 2D nonlocal
//! Cahn-Hilliard-Navier-Stokes system.

pub mod cli_io;
pub mod control;
pub mod error;
pub mod fields;
pub mod forward;
pub mod physics;
pub mod sensitivity;

pub use error::{ChnsError, Result};
