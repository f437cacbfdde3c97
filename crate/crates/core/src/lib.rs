#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Gradient flows, geodesic and natural Hamiltonian flows, and the
//! Jacobi-Maupertuis correspondence on dually flat statistical manifolds.

pub mod error;
pub mod manifold;
pub mod models;
pub mod dynamics;
pub mod io;
pub mod optics;
pub mod replicator;
pub mod verify;

pub use error::{Error, Result};
