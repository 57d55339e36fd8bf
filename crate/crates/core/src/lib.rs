//! Spectral Faedo-Galerkin solver for one-dimensional electromagnetoelastic
//! waves on the torus.
//!
//! The model is the coupled parabolic-hyperbolic system
//!
//! ```text
//! h_t  = (r h_z - h u_t - r j)_z          (magnetic field, two components)
//! u_tt = (nu^2 u_z - p h^2)_z + f         (elastic displacement)
//! ```
//!
//! posed on the unit torus with 1-periodic coefficients `r`, `nu` that are
//! piecewise smooth with finitely many jumps per period. The solver expands
//! the fields in the real trigonometric basis, integrates the resulting
//! stiff ODE system adaptively, and certifies the energy balance, the
//! a-priori energy inequality, the weak-form identities, and the interface
//! transmission conditions on the computed trajectories.
//!
//! Module map:
//! - [`coefficients`]: piecewise-polynomial coefficient fields, forcing
//!   terms, and the nondimensionalization of the physical constants.
//! - [`basis`]: the trigonometric fundamental system and the
//!   breakpoint-aligned composite Gauss-Legendre quadrature.
//! - [`galerkin`]: problem assembly, spectral states, the Galerkin ODE
//!   right-hand side, and instantaneous energy terms.
//! - [`timestepper`]: adaptive stiff integration with dense output and an
//!   attached energy ledger.
//! - [`diagnostics`]: energy-balance residuals, energy-inequality slack,
//!   weak-formulation residuals, flux-jump reports, and solution norms.
//! - [`experiments`]: manufactured solutions, refinement studies,
//!   perturbation-stability ladders, uniqueness cross-checks, and an
//!   independent finite-difference oracle.

pub mod basis;
pub mod coefficients;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod galerkin;
pub mod timestepper;

pub use error::{Error, Result};
