//! Simulation and verification toolkit for the stochastic heat equation
//! ∂u = 𝓛u + σ(u)Ẇ driven by space-time white noise, with 𝓛 the generator of
//! a symmetric Lévy process and finite-measure initial data.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod analysis;
pub mod conv;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod kernel;
pub mod measure;
pub mod noise;
pub mod quadrature;
pub mod solver;
pub mod stencil;

pub use error::{Error, Result};
pub use kernel::{KernelFunctionals, KernelKind, KernelModel, KernelSpec, QuadratureSpec, ThetaEstimate};
pub use measure::{FiniteMeasure, GaussianBump, SampledDensity};
pub use noise::{sample_noise, shift_noise, NoiseLattice, NoiseSource, NoiseStream};
