//! Numerical toolkit for dyadic shell analysis of periodic Navier-Stokes flows.
//!
//! - [`sequences`]: the log-weight sequence `a(j)`, its running average `b(j)`
//!   and exact certification of their bounds.
//! - [`shell_profile`]: sparse dyadic shell profiles, weighted norms and the
//!   scaling-smallness certificate.
//! - [`spectral`]: Fourier fields on the `n^3` torus lattice, masks, norms,
//!   Leray projection, dealiased convection and SHF1 snapshots.
//! - [`nse_sim`]: integrating-factor RK4 solver.
//! - [`diagnostics`]: per-snapshot checks of the shell energy inequalities.

pub mod diagnostics;
pub mod error;
pub mod nse_sim;
pub mod sequences;
pub mod shell_profile;
pub mod spectral;

pub use error::{Error, Result};
pub use shell_profile::{ScalingParams, ShellProfile};
pub use spectral::{BandMask, Lattice, Snapshot, SpectralField};
