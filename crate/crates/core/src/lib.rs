//! Lagrangian mass-coordinate solver and verification harness for the 1D
//! compressible, viscous, non-resistive MHD system
//!
//! ```text
//! tau_t = u_y,   u_t = sigma_y,   (b tau)_t = 0,
//! sigma = mu u_y / tau - A tau^-gamma - b^2 / 2,
//! ```
//!
//! on `y in (0, 1)` with `u = 0` at both walls and unit total mass.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod functionals;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod model;
pub mod state;
pub mod stationary;
mod tridiag;

pub use error::{Error, Result};
pub use fit::{fit_decay_rate, DecayFit};
pub use functionals::LyapunovConfig;
pub use grid::MassGrid;
pub use integrator::{run, run_from, step, Observer, RunOutcome, SchemeConfig, StepReport};
pub use model::Params;
pub use state::{to_eulerian, InitialData, Normalization, State};
pub use stationary::{stationary_pointwise, stationary_solve, StationaryState};
