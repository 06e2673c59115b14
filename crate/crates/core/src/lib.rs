//! Reduced-order unknown-input observers for discrete-time LTI plants.
//!
//! The crate covers both synthesis routes (known model, or recorded
//! input/state/output data) and the runtime that runs a designed observer
//! over measured signals.
//!
//! ```
//! use ruio_core::{example::example_system, lti::{generate_experiment, ExperimentConfig}};
//! use ruio_core::design::{design_from_trajectory, DesignConfig};
//!
//! let exp = generate_experiment(&example_system(), &ExperimentConfig::new(11, 7)).unwrap();
//! let dd = design_from_trajectory(&exp.trajectory, &DesignConfig::default()).unwrap();
//! assert!(dd.ruio.spectral_radius().unwrap() < 1.0);
//! ```

pub mod numerics;
pub mod lti;
pub mod data;
pub mod design;
pub mod runtime;
pub mod io;
pub mod cli;
pub mod example;

pub use design::{DesignConfig, DesignError, Ruio};
pub use lti::{LtiSystem, Trajectory};
pub use numerics::{Matrix, Vector};
