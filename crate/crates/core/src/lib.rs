//! Numerical toolkit for a diffusive predator-prey system in which the prey
//! has a refuge that predators cannot enter, and predators move with a
//! directed flux towards prey-rich areas.
//!
//! The modules build on each other: [`geometry`] discretizes the domain,
//! [`operators`] assembles the discrete differential operators, [`spectra`]
//! computes principal eigenpairs, [`thresholds`] evaluates the existence
//! curves, [`steady`] and [`continuation`] compute positive steady states and
//! their branches, [`evolution`] integrates the time-dependent problem and
//! [`asymptotics`] studies the large-flux and small-growth limits. [`verify`]
//! runs end-to-end checks against closed-form properties of the model.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod continuation;
pub mod asymptotics;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod spectra;
pub mod steady;
pub mod thresholds;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{DomainSpec, Field, Grid, Region};
pub use model::ModelParams;
