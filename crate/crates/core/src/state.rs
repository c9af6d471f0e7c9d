use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MassGrid;
use crate::model::recover_b;

/// Sub-samples per cell when averaging initial profiles.
const CELL_AVERAGE_SAMPLES: usize = 32;

/// Tolerance on `sum(tau0) dy - 1` before normalization kicks in.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Rescale `tau0` to unit mass.
    #[default]
    Rescale,
    /// Reject data whose mass differs from one.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub grid: MassGrid,
    pub tau0: Vec<f64>,
    pub u0: Vec<f64>,
    pub b0: Vec<f64>,
}

impl InitialData {
    pub fn new(
        grid: MassGrid,
        mut tau0: Vec<f64>,
        mut u0: Vec<f64>,
        b0: Vec<f64>,
        norm: Normalization,
    ) -> Result<Self> {
        let n = grid.cells();
        for (len, expected) in [(tau0.len(), n), (u0.len(), n + 1), (b0.len(), n)] {
            if len != expected {
                return Err(Error::LengthMismatch { expected, got: len });
            }
        }
        if let Some(bad) = tau0.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Domain(format!("initial specific volume must be positive, got {bad}")));
        }
        if u0.iter().chain(&b0).any(|v| !v.is_finite()) {
            return Err(Error::Domain("initial data must be finite".into()));
        }
        let mass = grid.integrate(&tau0)?;
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            match norm {
                Normalization::Rescale => tau0.iter_mut().for_each(|t| *t /= mass),
                Normalization::Strict => {
                    return Err(Error::InvalidParam(format!(
                        "initial mass is {mass}, expected 1"
                    )))
                }
            }
        }
        u0[0] = 0.0;
        u0[n] = 0.0;
        Ok(Self { grid, tau0, u0, b0 })
    }

    /// Builds data from profiles: cell averages for `tau0` and `b0`, point
    /// samples at nodes for `u0` (endpoints forced to zero).
    pub fn from_profiles(
        grid: MassGrid,
        tau0: impl Fn(f64) -> f64,
        u0: impl Fn(f64) -> f64,
        b0: impl Fn(f64) -> f64,
        norm: Normalization,
    ) -> Result<Self> {
        let tau = cell_averages(&grid, &tau0);
        let b = cell_averages(&grid, &b0);
        let u = (0..grid.nodes()).map(|i| u0(grid.node_coord(i))).collect();
        Self::new(grid, tau, u, b, norm)
    }

    pub fn a0(&self) -> Vec<f64> {
        self.b0.iter().zip(&self.tau0).map(|(b, t)| b * t).collect()
    }
}

fn cell_averages(grid: &MassGrid, f: &impl Fn(f64) -> f64) -> Vec<f64> {
    let m = CELL_AVERAGE_SAMPLES;
    (0..grid.cells())
        .map(|j| {
            let left = grid.node_coord(j);
            let s: f64 = (0..m)
                .map(|k| f(left + (k as f64 + 0.5) / m as f64 * grid.dy()))
                .sum();
            s / m as f64
        })
        .collect()
}

/// Discrete solution at one instant. Mutated only by the integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub grid: MassGrid,
    pub t: f64,
    pub tau: Vec<f64>,
    pub u: Vec<f64>,
    pub a0: Vec<f64>,
}

impl State {
    pub fn from_initial(init: &InitialData) -> Self {
        Self {
            grid: init.grid,
            t: 0.0,
            tau: init.tau0.clone(),
            u: init.u0.clone(),
            a0: init.a0(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.grid.cells();
        if self.tau.len() != n || self.a0.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: self.tau.len() });
        }
        if self.u.len() != n + 1 {
            return Err(Error::LengthMismatch { expected: n + 1, got: self.u.len() });
        }
        let min = self.min_tau();
        if !(min > 0.0 && min.is_finite()) {
            return Err(Error::Domain(format!("vacuum: min tau = {min}")));
        }
        Ok(())
    }

    pub fn b(&self) -> Result<Vec<f64>> {
        recover_b(&self.a0, &self.tau)
    }

    pub fn mass(&self) -> f64 {
        self.tau.iter().sum::<f64>() * self.grid.dy()
    }

    pub fn min_tau(&self) -> f64 {
        self.tau.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_tau(&self) -> f64 {
        self.tau.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_b(&self) -> f64 {
        self.a0
            .iter()
            .zip(&self.tau)
            .map(|(a, t)| (a / t).abs())
            .fold(0.0, f64::max)
    }
}

/// Positions and fields mapped back to physical space.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianView {
    /// Physical position of each node, `X[i] = sum_{j < i} tau[j] dy`.
    pub x_nodes: Vec<f64>,
    /// Physical position of each cell centre.
    pub x_cells: Vec<f64>,
    pub tau: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn to_eulerian(state: &State) -> Result<EulerianView> {
    state.validate()?;
    let dy = state.grid.dy();
    let mut x_nodes = Vec::with_capacity(state.grid.nodes());
    let mut x = 0.0;
    x_nodes.push(x);
    for t in &state.tau {
        x += t * dy;
        x_nodes.push(x);
    }
    let x_cells = x_nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    Ok(EulerianView {
        x_nodes,
        x_cells,
        tau: state.tau.clone(),
        u: state.u.clone(),
        b: state.b()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: usize, tau: f64) -> State {
        let grid = MassGrid::new(n).unwrap();
        State {
            grid,
            t: 0.0,
            tau: vec![tau; n],
            u: vec![0.0; n + 1],
            a0: vec![0.0; n],
        }
    }

    #[test]
    fn identity_and_stretch_maps() {
        let s = uniform(8, 1.0);
        let e = to_eulerian(&s).unwrap();
        for (i, x) in e.x_nodes.iter().enumerate() {
            assert!((x - s.grid.node_coord(i)).abs() < 1e-15);
        }
        let s = uniform(8, 2.0);
        let e = to_eulerian(&s).unwrap();
        for (i, x) in e.x_nodes.iter().enumerate() {
            assert!((x - 2.0 * s.grid.node_coord(i)).abs() < 1e-15);
        }
        assert!((e.x_nodes[8] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn vacuum_state_rejected() {
        let mut s = uniform(8, 1.0);
        s.tau[3] = 0.0;
        assert!(to_eulerian(&s).is_err());
    }

    #[test]
    fn normalization_modes() {
        let grid = MassGrid::new(8).unwrap();
        let d = InitialData::new(grid, vec![2.0; 8], vec![1.0; 9], vec![1.0; 8], Normalization::Rescale)
            .unwrap();
        assert!((grid.integrate(&d.tau0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(d.u0[0], 0.0);
        assert_eq!(d.u0[8], 0.0);
        assert!(InitialData::new(grid, vec![2.0; 8], vec![0.0; 9], vec![1.0; 8], Normalization::Strict)
            .is_err());
        assert!(InitialData::new(grid, vec![-1.0; 8], vec![0.0; 9], vec![1.0; 8], Normalization::Rescale)
            .is_err());
    }

    #[test]
    fn step_profiles_average_exactly_on_aligned_cells() {
        let grid = MassGrid::new(16).unwrap();
        let d = InitialData::from_profiles(
            grid,
            |x| if x < 0.5 { 0.6 } else { 1.4 },
            |_| 0.0,
            |x| if x < 0.5 { -1.0 } else { 1.0 },
            Normalization::Strict,
        )
        .unwrap();
        assert!((d.tau0[7] - 0.6).abs() < 1e-15);
        assert!((d.tau0[8] - 1.4).abs() < 1e-15);
        assert!((d.a0()[0] + 0.6).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn eulerian_positions_increase(tau in proptest::collection::vec(0.01f64..5.0, 4..40)) {
            let n = tau.len();
            let grid = MassGrid::new(n).unwrap();
            let s = State { grid, t: 0.0, tau: tau.clone(), u: vec![0.0; n + 1], a0: vec![0.5; n] };
            let e = to_eulerian(&s).unwrap();
            prop_assert_eq!(e.x_nodes[0], 0.0);
            for w in e.x_nodes.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
            prop_assert!((e.x_nodes[n] - s.mass()).abs() < 1e-12 * s.mass());
        }
    }
}
