//! Named reference scenarios.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::MassGrid;
use crate::model::Params;
use crate::state::{InitialData, Normalization};

/// Field magnitude of the sign-changing `re3` scenario.
pub const RE3_THETA: f64 = 1.0;

/// Viscosity shared by the `smooth`, `rough` and `nomag` scenarios.
pub const REFERENCE_MU: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Unit volume at rest with `b0 = +theta` on the left half and
    /// `-theta` on the right half; already stationary.
    Re3,
    /// `tau0 = 1 + sin(2 pi x) / 2`, `u0 = sin(pi x)`, `b0 = 1`.
    Smooth,
    /// Step data: `tau0` in {0.6, 1.4}, `b0` in {-1, 1}, at rest.
    Rough,
    /// `smooth` without a magnetic field.
    Nomag,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Re3, Preset::Smooth, Preset::Rough, Preset::Nomag];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Re3 => "re3",
            Preset::Smooth => "smooth",
            Preset::Rough => "rough",
            Preset::Nomag => "nomag",
        }
    }

    pub fn params(self) -> Params {
        let (a, gamma, mu) = match self {
            Preset::Re3 => (1.0, 1.4, 1.0),
            Preset::Smooth | Preset::Rough | Preset::Nomag => (1.0, 1.4, REFERENCE_MU),
        };
        Params::new(a, gamma, mu).expect("preset parameters are admissible")
    }

    pub fn initial_data(self, grid: MassGrid) -> Result<InitialData> {
        let norm = Normalization::Rescale;
        match self {
            Preset::Re3 => InitialData::from_profiles(
                grid,
                |_| 1.0,
                |_| 0.0,
                |x| if x < 0.5 { RE3_THETA } else { -RE3_THETA },
                norm,
            ),
            Preset::Smooth => InitialData::from_profiles(
                grid,
                |x| 1.0 + 0.5 * (2.0 * PI * x).sin(),
                |x| (PI * x).sin(),
                |_| 1.0,
                norm,
            ),
            Preset::Rough => InitialData::from_profiles(
                grid,
                |x| if x < 0.5 { 0.6 } else { 1.4 },
                |_| 0.0,
                |x| if x < 0.5 { -1.0 } else { 1.0 },
                norm,
            ),
            Preset::Nomag => InitialData::from_profiles(
                grid,
                |x| 1.0 + 0.5 * (2.0 * PI * x).sin(),
                |x| (PI * x).sin(),
                |_| 0.0,
                norm,
            ),
        }
    }
}

/// Initial data and parameters for a named scenario on `n` cells.
pub fn preset(name: &str, n: usize) -> Result<(InitialData, Params)> {
    let p: Preset = name.parse()?;
    Ok((p.initial_data(MassGrid::new(n)?)?, p.params()))
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario '{s}' (expected one of re3, smooth, rough, nomag)"
                ))
            })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
