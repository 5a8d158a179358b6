//! Simulation of an eigenstate-preserving multi-qubit parity measurement in
//! circuit QED.
//!
//! N qubits couple dispersively to one microwave cavity mode; the cavity leaks
//! photons into a current-biased Josephson junction (CBJJ) that acts as a
//! photodetector. The crate provides
//!
//! * the composite Hilbert space and operator algebra ([`hilbert`]),
//! * the full and effective Hamiltonians and encoded initial states ([`model`]),
//! * a fixed-step Lindblad integrator ([`solver`]),
//! * Monte Carlo wave-function trajectories with parallel ensembles ([`trajectory`]),
//! * closed-form analytics of the eliminated detector ([`effective_rates`]),
//! * dynamical decoupling and encoding-swap protocols ([`protocols`]),
//! * observables and statistics ([`analysis`]),
//! * config parsing and the named experiments behind the CLI ([`config`], [`experiments`]).
//!
//! Units: every frequency and rate is an angular frequency in rad/µs, every
//! time is in µs.

pub mod analysis;
pub mod config;
pub mod effective_rates;
mod error;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod output;
pub mod protocols;
pub mod rng;
pub mod solver;
pub mod trajectory;

pub use error::{Error, Result};

/// Complex scalar used everywhere.
pub type C64 = num_complex::Complex64;
