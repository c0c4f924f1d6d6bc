//! Pseudospectral toolkit for the cubic-quintic NLS with non-vanishing
//! boundary conditions, written for the perturbation `u = psi - 1`:
//!
//! ```text
//! (i d_t + Delta) psi = (|psi|^2 - 1)(|psi|^2 - 1 + gamma) psi
//! ```

pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Direction, Field, Grid, NormKind, RadialSymbol, Space};
pub mod fit;
pub mod io;
pub mod integrator;
pub mod model;
pub mod normal_form;
pub mod propagators;
pub mod scattering;

pub use model::{EnergyBreakdown, GammaModel, PhysParams, Variant};
