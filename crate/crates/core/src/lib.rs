//! Gain tuning for PID passivity-based controllers on mechanical
//! port-Hamiltonian systems.
//!
//! The pipeline is: a [`model::MechanicalModel`] and a target configuration
//! give an [`model::Equilibrium`]; together with [`saddleform::Gains`] they
//! produce the damping/stiffness/inertia triple `(R, P, W)` and the saddle
//! matrix `N` ([`saddleform`]); [`spectral`] turns that into overshoot,
//! damping-ratio and rise-time statements; [`tuning`] searches gains that
//! meet a target; [`sim`] checks the result on the nonlinear closed loop.

pub mod cli;
pub mod error;
pub mod fmt;
pub mod linalg;
pub mod model;
pub mod saddleform;
pub mod sim;
pub mod spectral;
pub mod tuning;

pub use error::{Error, Result};
pub use model::{Equilibrium, MechanicalModel};
pub use saddleform::{Gains, Rpw, SaddleForm};
pub use spectral::{Scenario, SpectralReport};
