//! Particle statistics and the `ħ`, `m` unit system.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Bose,
    Fermi,
}

impl Statistics {
    pub fn name(self) -> &'static str {
        match self {
            Statistics::Bose => "bose",
            Statistics::Fermi => "fermi",
        }
    }

    /// Sign picked up by the interaction terms when the pair-field arguments
    /// are swapped (`Φ(y', y) = ±Φ(y, y')`).
    pub fn exchange_sign<T: Real>(self) -> T {
        match self {
            Statistics::Bose => T::one(),
            Statistics::Fermi => -T::one(),
        }
    }
}

impl std::str::FromStr for Statistics {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bose" => Ok(Statistics::Bose),
            "fermi" => Ok(Statistics::Fermi),
            other => Err(Error::InvalidInput(format!("statistics must be `bose` or `fermi`, got `{other}`"))),
        }
    }
}

/// `ħ` and the particle mass; defaults to `ħ = m = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Units<T> {
    pub hbar: T,
    pub mass: T,
}

impl<T: Real> Default for Units<T> {
    fn default() -> Self {
        Self { hbar: T::one(), mass: T::one() }
    }
}

impl<T: Real> Units<T> {
    pub fn new(hbar: T, mass: T) -> Result<Self> {
        if !(hbar > T::zero() && mass > T::zero()) || !hbar.is_finite() || !mass.is_finite() {
            return Err(Error::InvalidInput("hbar and mass must be positive".into()));
        }
        Ok(Self { hbar, mass })
    }

    /// `ħ²/m`.
    pub fn hbar2_over_m(&self) -> T {
        self.hbar * self.hbar / self.mass
    }

    /// `a = ħ²/2m`.
    pub fn a(&self) -> T {
        self.hbar2_over_m() * lit(0.5)
    }

    /// Free-particle energy `ħ²p²/2m` for `p² = p_sq`.
    pub fn kinetic(&self, p_sq: T) -> T {
        self.a() * p_sq
    }
}
