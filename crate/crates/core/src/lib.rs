//! Numerical continuity method for weighted (Mabuchi / Kähler-Ricci) solitons
//! on toric Fano manifolds, in symplectic-potential-free real coordinates.

pub mod energies;
pub mod error;
pub mod extremal;
pub mod linalg;
pub mod oracle1d;
pub mod polytope;
pub mod quadrature;
pub mod record;
pub mod run;
pub mod solver;
pub mod toricfield;
pub mod verify;
pub mod weights;

pub use error::{Error, Result};
