//! Reflected physical paths on a Riemannian chart, reflected Jacobi fields,
//! conjugate points and Morse index checks.

pub mod dynamics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod index_form;
pub mod jacobi;
pub mod morse;
pub mod ode;
mod par;
pub mod scenario;

pub use error::{Error, Result};
