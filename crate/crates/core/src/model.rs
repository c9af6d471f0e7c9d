//! Physical constants and the constitutive laws of the Lagrangian system.
//!
//! With zero resistivity the magnetic field is slaved to the specific
//! volume through the frozen product `a0 = b0 * tau0`, so the total pressure
//! depends on the cell only through `a0`:
//!
//! ```text
//! P(a0, tau) = A tau^-gamma + a0^2 / (2 tau^2)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pressure amplitude `A`, adiabatic exponent `gamma` and viscosity `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    a: f64,
    gamma: f64,
    mu: f64,
}

impl Params {
    pub fn new(a: f64, gamma: f64, mu: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParam(format!("A must be positive, got {a}")));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::InvalidParam(format!(
                "gamma must exceed 1, got {gamma}"
            )));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParam(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { a, gamma, mu })
    }

    #[inline]
    pub fn a(&self) -> f64 {
        self.a
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Total pressure without the domain check. Callers guarantee `tau > 0`.
    #[inline]
    pub(crate) fn pressure_unchecked(&self, a0: f64, tau: f64) -> f64 {
        self.a * tau.powf(-self.gamma) + 0.5 * a0 * a0 / (tau * tau)
    }

    /// `-dP/dtau`, the squared Lagrangian sound speed. Callers guarantee `tau > 0`.
    #[inline]
    pub(crate) fn sound_speed_sq_unchecked(&self, a0: f64, tau: f64) -> f64 {
        self.a * self.gamma * tau.powf(-self.gamma - 1.0) + a0 * a0 / (tau * tau * tau)
    }
}

#[inline]
fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "specific volume must be positive and finite, got {tau}"
        )))
    }
}

/// Total (gas + magnetic) pressure, strictly decreasing in `tau`.
pub fn pressure(params: &Params, a0: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(params.pressure_unchecked(a0, tau))
}

/// Slope of [`pressure`] in `tau`; always negative.
pub fn dpressure_dtau(params: &Params, a0: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(-params.sound_speed_sq_unchecked(a0, tau))
}

/// Effective viscous flux `sigma = mu u_y / tau - P`.
pub fn effective_flux(params: &Params, du_dy: f64, a0: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(params.mu * du_dy / tau - params.pressure_unchecked(a0, tau))
}

/// Magnetic field from the frozen product: `b = a0 / tau` per cell.
pub fn recover_b(a0: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    if a0.len() != tau.len() {
        return Err(Error::LengthMismatch {
            expected: a0.len(),
            got: tau.len(),
        });
    }
    a0.iter()
        .zip(tau)
        .map(|(&a, &t)| {
            check_tau(t)?;
            Ok(a / t)
        })
        .collect()
}
