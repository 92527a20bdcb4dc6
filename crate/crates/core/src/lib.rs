//! Artificial-compressibility approximation of the incompressible
//! Navier–Stokes equations on boxes with free-slip (Navier) walls, together
//! with diagnostics that measure the energy estimates, the pressure bound
//! and the incompressible-limit behavior of the scheme.

pub mod cli_io;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod operators;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
