//! Cavity transmission antiresonance spectra of dipole-coupled two-level
//! emitters inside a driven single-mode cavity.
//!
//! Units: rates are expressed in units of the cavity amplitude decay rate
//! `kappa` and lengths in units of the emitter transition wavelength.
//! Detunings follow `delta_x = omega_x - omega_laser`.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds emitter arrays and the dipole-dipole coupling
//!   matrices (coherent `Omega`, dissipative `Gamma`).
//! * [`modes`] evaluates Hermite-Gaussian transverse modes and builds the
//!   per-emitter cavity coupling vector `G`.
//! * [`steady_state`] solves the linearised (low-excitation) steady state
//!   and produces transmission spectra.
//! * [`analysis`] quantifies antiresonances: Lorentzian fits, phase
//!   analytics, collective band structure and cavity tuning.
//! * [`oracle`] is an exact master-equation steady-state solver for small
//!   arrays, used to validate the linearisation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod modes;
pub mod oracle;
pub mod steady_state;

pub use error::{Error, Result};
pub use geometry::{CouplingMatrices, DipoleKernel, EmitterArray};
pub use modes::{CouplingPattern, CouplingVector, TemMode};
pub use steady_state::{CavityParams, ScanMode, ScanResult, SpectrumPoint, SystemModel};
