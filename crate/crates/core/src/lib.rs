//! Spectral simulation of the stochastically quantized Φ⁴₃ model with separate
//! interaction and regularization cutoffs, together with a Metropolis oracle
//! and a set of statistical diagnostics for the resulting measures.
//!
//! Fields live on a periodic grid (see [`grid`] for the Fourier convention).
//! The typical flow is
//!
//! 1. pick a [`grid::GridSpec`] and [`gff::ModelParams`];
//! 2. build a [`cutoff::CutoffPair`] for levels `(M, N)`;
//! 3. compute [`wick::RenormConstants`] for those levels;
//! 4. run [`sqe::run_trajectory`] or the [`mcmc`] chain and feed samples to
//!    [`diagnostics`].

pub mod config;
pub mod cutoff;
pub mod diagnostics;
pub mod error;
pub mod gff;
pub mod grid;
pub mod lp;
pub mod mcmc;
pub mod profile;
pub mod quadrature;
pub mod report;
pub mod snapshot;
pub mod sqe;
pub mod stats;
pub mod suite;
pub mod wick;

pub use error::{Error, Result};
pub use grid::{GridSpec, RealField, SpectralField, SymbolTable};
pub use rustfft::num_complex::Complex64;
