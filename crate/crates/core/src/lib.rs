//! Classical laboratory for Krylov quantum diagonalization of U(1)-symmetric
//! spin Hamiltonians on heavy-hex qubit graphs.
//!
//! The pipeline runs lattice construction ([`lattice`]), circuit synthesis
//! ([`circuits`]), particle-sector simulation ([`sector_sim`]), Krylov matrix
//! estimation ([`krylov`]), optional noise emulation and mitigation
//! ([`noise`]), and the regularized generalized eigenvalue solve ([`solver`]).

pub mod circuits;
pub mod error;
pub mod fit;
pub mod krylov;
pub mod lattice;
pub mod layouts;
pub mod linalg;
pub mod noise;
pub mod pauli;
pub mod rng;
pub mod sector_sim;
pub mod solver;

pub use error::{KqdError, Result};
pub use lattice::{build_heavy_hex, Color, Edge, EdgeColoredLattice, PauliTerm};
pub use pauli::{Pauli, PauliString, SignedPauli};
