#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod forward;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nonlocal;
pub mod optimizer;
pub mod physics;
pub mod stencil;
pub mod tangent;

pub use error::{Error, Result};
pub use grid::{Grid2D, ScalarField, TensorField, VectorField};
