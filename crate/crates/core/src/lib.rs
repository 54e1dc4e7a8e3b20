//! Waveguide QED of Λ-type atoms coupled to a one-dimensional guided mode:
//! effective Hamiltonians, weak-drive steady states, transmission and
//! reflection spectra, master-equation dynamics, pulse scattering, disorder
//! ensembles and photon correlations.
//!
//! The numerical core is generic over the real scalar type (`f32` or `f64`);
//! the aliases below fix it to `f64`, with `*F32` variants for single
//! precision.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod correlation;
pub mod disorder;
pub mod error;
pub mod hamiltonian;
pub mod linalg;
pub mod lindblad;
pub mod model;
pub mod num;
pub mod observables;
pub mod pulse;
pub mod ode;
pub mod steadystate;

pub use basis::{AtomLevel, TruncatedBasis, Truncation};
pub use error::{Error, Result};
pub use model::{AtomPlacement, Diagnostic, Severity};
pub use num::{Real, C};

pub type Config = model::SystemConfig<f64>;
pub type ConfigF32 = model::SystemConfig<f32>;
pub type Shifts = model::InhomogeneousShifts<f64>;
pub type Model = hamiltonian::EffectiveModel<f64>;
pub type ModelF32 = hamiltonian::EffectiveModel<f32>;
pub type Operator = linalg::SparseMatrix<f64>;
