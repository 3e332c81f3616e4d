//! Few-boson dynamics in finite one-dimensional optical lattices.
//!
//! The lattice `V0 sin²(x)` with hard walls at `±m π/2` is discretized with a
//! sine DVR, the single-particle bands are rotated into Wannier orbitals, and
//! the many-body Hamiltonian `H(g) = H0 + g W` is assembled over the bosonic
//! number states of those orbitals. On top of that sit eigenspectrum scans
//! with avoided-crossing detection, Krylov time propagation under linear
//! interaction ramps, a Gross-Pitaevskii comparison channel, the derived
//! observables, and least-squares fits of decay laws.
//!
//! All quantities are dimensionless: energies in recoil energies `E_R`,
//! lengths in `1/k`, times in `ħ/E_R`.

pub mod dvr;
pub mod dynamics;
pub mod eigen;
mod error;
pub mod exec;
pub mod fits;
pub mod fock;
pub mod mbham;
pub mod model;
pub mod observables;
pub mod spbands;
pub mod spectra;

pub use error::{Error, Result};
pub use exec::Execution;

/// Complex amplitude type used for many-body and mean-field states.
pub type C64 = num_complex::Complex64;
