//! Elementary-excitation spectra of nonideal Bose and Fermi gases computed
//! from a radial pair potential.
//!
//! The crate is generic over the scalar type (`f32` or `f64`); the aliases
//! at the bottom fix the common `f64` instantiation.

pub mod dispersion;
pub mod eigen;
pub mod error;
pub mod lsq;
pub mod pairfield;
pub mod potentials;
pub mod quadrature;
pub mod scalar;
pub mod torus;
pub mod units;
pub mod variational;
pub mod vec3;
pub mod verify;

pub use error::{Error, Result};
pub use potentials::{RadialPotential, RadialSpectrum};
pub use scalar::Real;
pub use torus::{Couplings, FourierCoefficients, TorusGeometry};
pub use units::{Statistics, Units};
pub use vec3::Vec3;

/// Version tag of the numerical conventions baked into every result: the
/// theorem constant, the torus coefficient normalization, the kinetic
/// prefactor and the pair-field normalization sign.
pub const CONVENTIONS: &str = "pairspec-conventions/1 kappa=pi^2 v_q=Vt(|q|/N^(1/3))/(L1*L2^2) a=hbar^2/2m phi-norm=+1/2";

pub type Potential = potentials::RadialPotential<f64>;
pub type Spectrum = potentials::RadialSpectrum<f64>;
