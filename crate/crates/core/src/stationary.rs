//! The unique rest state `(tau_s, 0, b_s)` with uniform total pressure `C0`
//! and unit total volume.
//!
//! Each cell decouples once `C0` is fixed, so the solve is nested: an outer
//! bisection on `C0` against the mass constraint, and an inner safeguarded
//! Newton iteration for `P(a0_j, tau) = C0` in every cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::MassGrid;
use crate::model::Params;

const INNER_RTOL: f64 = 1e-14;
const OUTER_MASS_TOL: f64 = 1e-12;
const MAX_EXPANSIONS: usize = 2048;
const MAX_OUTER: usize = 200;
const MAX_INNER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryState {
    pub tau_s: Vec<f64>,
    pub b_s: Vec<f64>,
    pub c0: f64,
    /// `max_j |P(a0_j, tau_s_j) - C0|`.
    pub residual_pointwise: f64,
    /// `|sum(tau_s) dy - 1|`.
    pub residual_mass: f64,
}

impl StationaryState {
    pub fn min_tau(&self) -> f64 {
        self.tau_s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_tau(&self) -> f64 {
        self.tau_s.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `C >= 1` with `1/C <= tau_s <= C`.
    pub fn bound_constant(&self) -> f64 {
        self.max_tau().max(1.0 / self.min_tau()).max(1.0)
    }
}

/// Solves `P(a0, tau) = c0` for the unique `tau > 0`.
pub fn stationary_pointwise(params: &Params, a0: f64, c0: f64) -> Result<f64> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::InvalidParam(format!("C0 must be positive, got {c0}")));
    }
    let f = |tau: f64| params.pressure_unchecked(a0, tau) - c0;

    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    let mut expansions = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > MAX_EXPANSIONS || !hi.is_finite() {
            return Err(Error::Bracket(format!("no upper bracket for a0 = {a0}, C0 = {c0}")));
        }
    }
    while f(lo) < 0.0 {
        lo *= 0.5;
        expansions += 1;
        if expansions > MAX_EXPANSIONS || lo == 0.0 {
            return Err(Error::Bracket(format!("no lower bracket for a0 = {a0}, C0 = {c0}")));
        }
    }
    if f(lo) == 0.0 {
        return Ok(lo);
    }
    if f(hi) == 0.0 {
        return Ok(hi);
    }

    let mut tau = 0.5 * (lo + hi);
    for _ in 0..MAX_INNER {
        let val = f(tau);
        if val == 0.0 {
            return Ok(tau);
        }
        if val > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let slope = -params.sound_speed_sq_unchecked(a0, tau);
        let newton = tau - val / slope;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - tau).abs() <= INNER_RTOL * next || hi - lo <= 2.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        tau = next;
    }
    Ok(tau)
}

fn mass_at(params: &Params, a0: &[f64], dy: f64, c0: f64) -> Result<(Vec<f64>, f64)> {
    let tau: Vec<f64> = a0
        .iter()
        .map(|&a| stationary_pointwise(params, a, c0))
        .collect::<Result<_>>()?;
    let mass = tau.iter().sum::<f64>() * dy;
    Ok((tau, mass))
}

/// Finds `C0` with `sum_j tau_s(a0_j, C0) dy = 1` and certifies the result.
pub fn stationary_solve(params: &Params, a0: &[f64], grid: &MassGrid) -> Result<StationaryState> {
    if a0.len() != grid.cells() {
        return Err(Error::LengthMismatch {
            expected: grid.cells(),
            got: a0.len(),
        });
    }
    let dy = grid.dy();

    // Mean pressure at unit volume is a natural starting guess.
    let guess = a0
        .iter()
        .map(|&a| params.pressure_unchecked(a, 1.0))
        .sum::<f64>()
        * dy;
    let (mut lo, mut hi) = (guess, guess);
    let mut expansions = 0;
    while mass_at(params, a0, dy, lo)?.1 < 1.0 {
        lo *= 0.5;
        expansions += 1;
        if expansions > MAX_EXPANSIONS || lo == 0.0 {
            return Err(Error::Bracket(format!("mass stays below one down to C0 = {lo}")));
        }
    }
    while mass_at(params, a0, dy, hi)?.1 > 1.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > MAX_EXPANSIONS || !hi.is_finite() {
            return Err(Error::Bracket(format!("mass stays above one up to C0 = {hi}")));
        }
    }

    let mut best = (f64::INFINITY, lo, Vec::new());
    for c0 in [lo, hi] {
        let (tau, mass) = mass_at(params, a0, dy, c0)?;
        if (mass - 1.0).abs() < best.0 {
            best = ((mass - 1.0).abs(), c0, tau);
        }
    }
    for _ in 0..MAX_OUTER {
        if best.0 == 0.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (tau, mass) = mass_at(params, a0, dy, mid)?;
        let err = (mass - 1.0).abs();
        if err < best.0 {
            best = (err, mid, tau);
        }
        if mass > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (residual_mass, c0, tau_s) = best;
    if residual_mass > OUTER_MASS_TOL {
        return Err(Error::Bracket(format!(
            "outer solve stalled with mass residual {residual_mass}"
        )));
    }
    let residual_pointwise = a0
        .iter()
        .zip(&tau_s)
        .map(|(&a, &t)| (params.pressure_unchecked(a, t) - c0).abs())
        .fold(0.0, f64::max);
    let b_s = a0.iter().zip(&tau_s).map(|(a, t)| a / t).collect();
    Ok(StationaryState {
        tau_s,
        b_s,
        c0,
        residual_pointwise,
        residual_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(a: f64, g: f64) -> Params {
        Params::new(a, g, 1.0).unwrap()
    }

    #[test]
    fn pointwise_hand_values() {
        for g in [1.2, 1.4, 2.0, 3.0] {
            assert!((stationary_pointwise(&p(1.0, g), 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((stationary_pointwise(&p(1.0, 2.0), 0.0, 4.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((stationary_pointwise(&p(1.0, 2.0), 1.0, 1.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(stationary_pointwise(&p(1.0, 2.0), 1.0, 0.0).is_err());
        assert!(stationary_pointwise(&p(1.0, 2.0), 1.0, -3.0).is_err());
    }

    #[test]
    fn extreme_levels_still_bracket() {
        let prm = p(1.0, 1.4);
        for c0 in [1e-12, 1e-3, 1e3, 1e12] {
            let tau = stationary_pointwise(&prm, 0.3, c0).unwrap();
            let rel = (prm.pressure_unchecked(0.3, tau) - c0).abs() / c0;
            assert!(rel < 1e-13, "c0 = {c0}: rel residual {rel}");
        }
    }

    #[test]
    fn no_field_gives_uniform_unit_volume() {
        let grid = MassGrid::new(32).unwrap();
        let s = stationary_solve(&p(2.5, 1.4), &[0.0; 32], &grid).unwrap();
        assert!(s.tau_s.iter().all(|t| (t - 1.0).abs() < 1e-14));
        assert!((s.c0 - 2.5).abs() < 1e-13);
        assert!(s.b_s.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn sign_changing_constant_field() {
        let grid = MassGrid::new(64).unwrap();
        let theta = 1.0;
        let a0: Vec<f64> = grid
            .cell_coords()
            .iter()
            .map(|&x| if x < 0.5 { theta } else { -theta })
            .collect();
        let s = stationary_solve(&p(1.0, 1.4), &a0, &grid).unwrap();
        assert!(s.tau_s.iter().all(|t| (t - 1.0).abs() < 1e-12));
        assert!((s.c0 - 1.5).abs() < 1e-12);
        assert!(s.residual_pointwise <= 1e-12 * s.c0);
        assert!(s.residual_mass <= 1e-10);
    }

    #[test]
    fn certificates_hold_for_rough_field() {
        let grid = MassGrid::new(50).unwrap();
        let a0: Vec<f64> = (0..50).map(|j| if j % 7 < 3 { 3.0 } else { -0.2 }).collect();
        let s = stationary_solve(&p(0.5, 1.67), &a0, &grid).unwrap();
        assert!(s.residual_pointwise <= 1e-12 * s.c0);
        assert!(s.residual_mass <= 1e-10);
        for ((b, t), a) in s.b_s.iter().zip(&s.tau_s).zip(&a0) {
            assert!((b * t - a).abs() <= f64::EPSILON * a.abs());
        }
        assert!(s.bound_constant() >= 1.0);
        assert!(s.min_tau() >= 1.0 / s.bound_constant());
    }

    #[test]
    fn length_mismatch_rejected() {
        let grid = MassGrid::new(8).unwrap();
        assert!(stationary_solve(&p(1.0, 1.4), &[0.0; 7], &grid).is_err());
    }

    proptest! {
        #[test]
        fn pointwise_monotone_in_level(
            a in 0.1f64..5.0, g in 1.05f64..3.0, a0 in -3.0f64..3.0,
            c0 in 0.01f64..50.0, bump in 1e-3f64..2.0,
        ) {
            let prm = p(a, g);
            let t1 = stationary_pointwise(&prm, a0, c0).unwrap();
            let t2 = stationary_pointwise(&prm, a0, c0 * (1.0 + bump)).unwrap();
            prop_assert!(t2 < t1);
        }

        #[test]
        fn permutation_equivariant(
            a0 in proptest::collection::vec(-2.0f64..2.0, 8..24),
            seed in 0usize..1000,
        ) {
            let n = a0.len();
            let grid = MassGrid::new(n).unwrap();
            let prm = p(1.0, 1.4);
            let s = stationary_solve(&prm, &a0, &grid).unwrap();
            // rotation is a permutation with a cheap inverse
            let k = seed % n;
            let mut rotated = a0.clone();
            rotated.rotate_left(k);
            let r = stationary_solve(&prm, &rotated, &grid).unwrap();
            let mut expected = s.tau_s.clone();
            expected.rotate_left(k);
            for (x, y) in r.tau_s.iter().zip(&expected) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn constant_magnitude_gives_unit_volume(
            a in 0.1f64..5.0, g in 1.05f64..3.0, theta in 0.0f64..3.0,
            signs in proptest::collection::vec(any::<bool>(), 8..32),
        ) {
            let n = signs.len();
            let grid = MassGrid::new(n).unwrap();
            let a0: Vec<f64> = signs.iter().map(|&s| if s { theta } else { -theta }).collect();
            let s = stationary_solve(&p(a, g), &a0, &grid).unwrap();
            for t in &s.tau_s {
                prop_assert!((t - 1.0).abs() < 1e-12);
            }
            prop_assert!((s.c0 - (a + 0.5 * theta * theta)).abs() < 1e-12 * s.c0);
        }
    }
}
