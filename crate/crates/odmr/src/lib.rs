//! Simulation and parameter estimation for continuous-wave ODMR spectra of
//! dense NV⁻ ensembles.
//!
//! The library models each center as a pair of driven, damped bosonic modes
//! (the bright and dark superpositions of the |±1⟩ spin levels), evaluates
//! their steady-state excitation in closed form, and averages over Lorentzian
//! parameter disorder to produce ensemble spectra. On top of the forward
//! model it provides peak/dip metrology, parameter sweeps, and a staged
//! least-squares procedure that recovers the homogeneous linewidth, the
//! inhomogeneous field width, and the strain width from measured spectra.
//!
//! Module map:
//! - [`model`]: single-center steady-state response and transition frequencies
//! - [`geometry`]: NV axis classes under a [111] field, Zeeman conversion
//! - [`disorder`]: Lorentzian/hyperfine-mixture samplers and ensemble drawing
//! - [`spectrum`]: disorder-averaged spectra and the normalized ODMR signal
//! - [`analysis`]: time-domain oracle, peak reports, sweeps, degeneracy checks
//! - [`estimate`]: residuals, simplex fitting, staged three-parameter estimation
//!
//! All frequencies are ordinary frequencies in MHz (values of ω/2π); the
//! steady-state equations are homogeneous in frequency units so no angular
//! conversion appears anywhere.

pub mod analysis;
pub mod disorder;
pub mod error;
pub mod estimate;
pub mod geometry;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod spectrum;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete `f64` aliases for the scalar-generic core types. The Monte Carlo
/// and fitting layers work in `f64` throughout; the generic forms are for
/// callers that want `f32` (or another `Real`) single-center math.
pub type CenterParams = model::CenterParams<f64>;
pub type PopulationPair = model::PopulationPair<f64>;
pub type Damping = model::Damping<f64>;
pub type AxisPopulation = geometry::AxisPopulation<f64>;
pub type LorentzianSpec = disorder::LorentzianSpec<f64>;
pub type HyperfineMixtureSpec = disorder::HyperfineMixtureSpec<f64>;
pub type DriveDist = disorder::DriveDist<f64>;
pub type DisorderSpec = disorder::DisorderSpec<f64>;
pub type EnsembleSample = disorder::EnsembleSample<f64>;
