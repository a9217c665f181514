//! Certified constants for moderate-deviation bounds on splittable random
//! fields, and a harness that checks every intermediate inequality on
//! concrete lattice fields.
//!
//! - [`primitives`]: boxes, quadratic certificates, volume scalings.
//! - [`cascade`]: the bound-propagation engine and final constant search.
//! - [`fields`]: lattice cell fields with exactly coupled splits and leaks.
//! - [`mgf`]: empirical CGF estimation with confidence bands.
//! - [`verify`]: per-inequality reports against exact or Monte Carlo evidence.
//! - [`app`]: configuration and the command implementations behind the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod cascade;
pub mod error;
pub mod fields;
pub mod mgf;
pub mod primitives;
pub mod verify;

pub use error::{Error, Result};
pub use primitives::{BoxSpec, EngineConstants, QuadCert, ScalingFns};
