//! Functional observability analysis and functional observer synthesis for
//! unforced nonlinear systems `dx/dt = F(x)`, `y = H(x)`, `z = q(x)`.
//!
//! The crate is organized bottom-up:
//!
//! - [`expr`]: symbolic expressions (parse, evaluate, differentiate, simplify).
//! - [`system`]: system definitions, file ingestion and builtin reactor models.
//! - [`lie`]: Lie derivatives, observability sets and Lie-series prediction.
//! - [`observability`]: numerical rank tests, indices and verification of
//!   user-supplied representations of the functional's Lie derivatives.
//! - [`synthesis`]: pole polynomials, input-output observers and the linear
//!   observer pipeline.
//! - [`sim`]: fixed-step RK4 simulation of plants and observers.

pub mod expr;
pub mod system;
pub mod lie;
pub mod observability;
pub mod synthesis;
pub mod sim;

/// Bundled example inputs.
pub mod data {
    /// Representation `psi_0, psi_1` for the batch reactor (`v = 1`).
    pub const BATCH_PSI: &str = include_str!("../data/batch_psi.json");
    /// Representation `psi_0, psi_1` for the jacketed CSTR (`v = 1`).
    pub const CSTR_PSI: &str = include_str!("../data/cstr_psi.json");
    /// Double integrator measured in position, estimating velocity.
    pub const DOUBLE_INTEGRATOR: &str = include_str!("../data/double_integrator.json");
}
