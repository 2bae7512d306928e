//! Staggered-grid finite difference solver for linear elasticity in
//! displacement-stress form on uniform and non-uniform tensor grids.
//!
//! Normal stresses live at cell centers, shear stresses at nodes (2D) or
//! edge midpoints (3D), and displacements at face midpoints. Homogeneous
//! Dirichlet displacement conditions are built into the difference
//! operators, the discrete system is symmetric after row scaling, and the
//! scheme converges at second order in mesh-dependent L2 norms even on
//! rough tensor grids and for nearly incompressible materials.

pub mod config;
pub mod elasticity;
pub mod error;
pub mod fields;
pub mod grid;
pub mod mms;
pub mod ops;
pub mod solve;
pub mod table;

pub use error::{Error, Result};
