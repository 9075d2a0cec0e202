//! Transfer-operator analysis of planar flows: Ulam discretization,
//! reversible spectra, eigenvalue branch tracking across parameter sweeps,
//! and synthetic block chains with known metastable structure.

pub mod bifurcation;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod markov;
pub mod matrix;
pub mod partition;
pub mod pipeline;
pub mod spectral;
pub mod toychains;
pub mod ulam;

pub use error::{Error, Result};
