//! Voronoi lattice generation and electrical impedance tomography on the
//! resulting ligament networks.

// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod reconstruction;
pub mod render;
pub mod sensitivity;

pub use error::{Error, Result};
