//! Robust finite-horizon control with adjustable uncertainty sets.
//!
//! The uncertainty set `W = Y S + y` is an affine image of a fixed primitive
//! set `S`; its shaping parameters are optimized jointly with affine
//! disturbance-feedback policies through a conic dual reformulation.

pub mod apps;
pub mod conic;
pub mod error;
pub mod exec;
pub mod model;
pub mod policy;
pub mod reformulate;
pub mod serde_mat;
pub mod uncertainty;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
