//! Boundary element solver for the cell-by-cell (EMI) model of cardiac
//! electrophysiology in two dimensions.
//!
//! The pipeline is:
//!
//! 1. [`geometry`] builds the cells, the extracellular bath and their shared
//!    interfaces, places collocation nodes and derives the connectivity
//!    matrices `A_i`, `B_i`.
//! 2. [`bem`] assembles single- and double-layer collocation matrices with a
//!    spectrally accurate treatment of the logarithmic singularity.
//! 3. [`steklov`] turns them into discrete Dirichlet-to-Neumann maps, one per
//!    subdomain, including the bath with its insulated outer boundary.
//! 4. [`coupling`] eliminates everything but the transmembrane voltage through
//!    Lagrange multipliers, producing the linear map `Ψ: V_m ↦ λ₀`.
//! 5. [`integrator`] advances `C_m V' + I_ion(V, z) = Ψ(V)`, `z' = g(V, z)` with a
//!    damped Runge–Kutta–Chebyshev scheme; [`ionic`] provides `I_ion` and `g`.
//! 6. [`harness`] runs the convergence and conduction-velocity experiments.

pub mod bem;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod integrator;
pub mod ionic;
pub mod linalg;
pub mod steklov;

pub use error::{EmiError, Result};
pub use geometry::{Point, Scene};
