//! A desk-scale laboratory for almost-sure limit theorems of dynamical
//! systems.
//!
//! The crate simulates long orbits of measure-preserving maps, builds the
//! logarithmically weighted empirical measures
//! `(1/H_N) sum_{k<=N} (1/k) delta_{S_k f / B_k}` along single orbits, and
//! compares them with Gaussian and stable targets. Around that core sit the
//! tools used to cross-check the limit laws: first-return inducing, Ulam
//! discretizations of the transfer operator and its perturbations, and
//! Gordin's martingale-coboundary decomposition.
//!
//! Module map:
//!
//! - [`renorm`]: slowly varying functions and normalizing sequences.
//! - [`laws`]: target laws, characteristic functions, CDFs, samplers, KS.
//! - [`systems`]: doubling map, Bernoulli shifts, Liverani–Saussol–Vaienti map, observables.
//! - [`orbits`]: streaming Birkhoff sums, maxima, random-index sums.
//! - [`asmeasure`]: log-averaged empirical measures and weighted variants.
//! - [`inducing`]: first-return maps, Kac checks, lift experiments.
//! - [`spectral`]: Ulam matrices, leading eigenvalue curves, Green–Kubo.
//! - [`martingale`]: Gordin decomposition and reverse-martingale tests.
//! - [`lab`]: config-driven experiment runner behind the `asclt-lab` binary.

pub mod asmeasure;
pub mod error;
pub mod inducing;
pub mod lab;
pub mod laws;
pub mod martingale;
pub mod orbits;
pub mod renorm;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod systems;

pub use error::{Error, Result};
