//! Structure-preserving finite-volume discretizations of aggregation-diffusion
//! equations
//!
//! This crate implements cell-centered finite-volume schemes for equations of
//! the form
//!
//! ```text
//!     ∂t ρ = div( ε ∇ρ + ρ ∇(V + W ∗ ρ) )
//! ```
//!
//! on admissible orthogonal tessellations, together with the discrete
//! variational structure that makes the Scharfetter-Gummel scheme a
//! generalized gradient flow: the free energy, the tilt-independent dual
//! dissipation potential built from the kernel `α*`, the Fisher-information
//! like slope, and the energy-dissipation-balance audit that ties them
//! together along a numerical trajectory.
//!
//! Module map:
//!
//! - [`special`]: scalar kernels (Bernoulli function, logarithmic means, the
//!   dual kernel `α*` and its derivatives, the tilt kernel `β`, cosh-type
//!   conjugates) evaluated in numerically stable branches.
//! - [`mesh`]: tessellation data model, validation, Cartesian builders, mesh
//!   file I/O, face/cell fields, and the discrete divergence and diffusion
//!   tensor.
//! - [`potential`]: external potentials `V` and interaction kernels `W`,
//!   their discretization on a mesh, and assembly of the nonlocal drive
//!   `Q = V + W ρ` and face drives `q`.
//! - [`scheme`]: Scharfetter-Gummel and upwind fluxes, stability-limited
//!   explicit integrators, trajectory recording, and Gibbs / stationary-state
//!   solvers.
//! - [`functionals`]: free energy, face forces, primal/dual dissipation,
//!   Fisher dissipation and its decomposition, energy-dissipation-balance
//!   residuals, and cosh-gradient-structure diagnostics.
//! - [`reconstruct`]: piecewise-constant density reconstructions, L¹ and BV
//!   quantities, and edge-midpoint flux lifting.
//! - [`study`]: mesh-refinement and vanishing-diffusion experiment drivers
//!   with machine-readable convergence reports.
//! - [`config`]: strict INI run/study configuration parsing.
//! - [`trajio`]: trajectory persistence (CSV states/fluxes + metadata).

pub mod config;
pub mod functionals;
pub mod mesh;
pub mod potential;
pub mod reconstruct;
pub mod scheme;
pub mod special;
pub mod study;
pub mod trajio;

mod quad;
mod util;
