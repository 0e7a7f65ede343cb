//! Finite-element solution of the 2D time-harmonic Maxwell's equations on
//! the unit square, a two-subdomain non-overlapping Schwarz method with
//! impedance transmission conditions, and a feedforward neural network that
//! learns the interface update so a solution is obtained from one inference
//! plus a single extra subdomain solve.
//!
//! The crate is organised along the pipeline:
//!
//! - [`geometry`]: structured quadrilateral mesh, two-strip decomposition,
//!   boundary tags.
//! - [`nedelec`]: hierarchic H(curl) basis on the reference cell (integrated
//!   Legendre construction), covariant Piola map, degree-of-freedom layout.
//! - [`system`]: assembly of the discrete weak form into a complex sparse
//!   system, incident-trace constraints, direct solution.
//! - [`ddm`]: the iterative domain decomposition loop and interface-trace
//!   bookkeeping.
//! - [`neural`]: dense two-layer network, backpropagation, Adam, and the
//!   training loop.
//! - [`pipeline`]: dataset generation from DDM runs, the surrogate solve,
//!   and solution comparison metrics.
//! - [`cli`]: configuration, field export, and the command-line front end.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the README for the command-line interface.

pub mod cli;
pub mod ddm;
pub mod error;
pub mod geometry;
pub mod nedelec;
pub mod neural;
pub mod pipeline;
pub mod quadrature;
pub mod sparse;
pub mod system;

pub use error::{Error, Result};
pub use geometry::{build_mesh, partition_two, whole_domain, BoundaryTag, Mesh, Subdomain};
pub use nedelec::{distribute_dofs, BasisOrder, DofMap, RefShape};
pub use system::{BoundaryField, FeFunction, MaterialParams};
