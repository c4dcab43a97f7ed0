//! Optimal control of rigid-rotor rotational dynamics driven by laser fields
//! with non-linear field coupling.
//!
//! The crate is organised bottom-up: [`angular`] builds the truncated
//! spherical-harmonic basis and multiplication operators, [`model`] assembles
//! polynomial-in-field Hamiltonians, [`dynamics`] propagates states with a
//! split-operator scheme, [`targets`] and [`observables`] define what is being
//! controlled, and [`optim`] hosts the quadratic- and quartic-penalty optimizers.

pub mod angular;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod observables;
pub mod optim;
pub mod output;
pub mod scenario;
pub mod targets;
pub mod units;

pub use error::{Error, Result};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;
