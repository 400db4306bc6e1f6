//! Numerical laboratory for eternal solutions of second-order uniformly
//! parabolic equations `Lu = f` on cylinders `Omega x R` with zero lateral data.
//!
//! The crate builds lattice discretisations of the operator (both
//! nondivergence and divergence form), integrates the problem on truncated
//! cylinder windows, constructs the positive eternal solution by three routes
//! (principal eigenpair, Floquet period map, far-past renormalisation), and
//! measures the structural constants: one-step decay, rate brackets,
//! comparison constants, the `K_j / L_j` contraction, and the decomposition of
//! bounded-below solutions of the inhomogeneous problem.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eternal;
pub mod evolution;
pub mod expr;
pub mod grid;
pub mod inhomogeneous;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod verify;

pub use error::{Error, Result};
pub use eternal::{far_past, floquet_principal, principal_eigenpair, EternalSolution, Route};
pub use evolution::{evolve, step, sup_profile, EvolutionTrace, FieldSlice, Scheme, SupProfile};
pub use expr::Expr;
pub use grid::{build_grid, parabolic_distance, CylinderWindow, Grid, SpatialDomain};
pub use operator::{assemble, slab_norm, sliding_norm, validate, CoefficientSpec, DiscreteOperator, Form, SourceSpec};
