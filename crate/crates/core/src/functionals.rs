//! Energies and Lyapunov functionals evaluated on discrete states.
//!
//! Velocity integrals use the node (trapezoid) quadrature, volume integrals
//! the cell (midpoint) quadrature. `(log tau)_y` lives on interior nodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Params;
use crate::state::State;
use crate::stationary::StationaryState;

/// Below this `|w|` the convex remainder is summed as a power series.
const SERIES_SWITCH: f64 = 0.1;

pub const DEFAULT_PROBES: usize = 64;
const INITIAL_WEIGHT: f64 = 0.1;
const MAX_HALVINGS: usize = 60;

/// `int (u^2/2 + A/(gamma-1) tau^(1-gamma) + a0^2/(2 tau))`.
pub fn energy0(state: &State, params: &Params) -> Result<f64> {
    state.validate()?;
    let dy = state.grid.dy();
    let kinetic: f64 = state.u.iter().map(|u| 0.5 * u * u).sum();
    let g = params.gamma();
    let c = params.a() / (g - 1.0);
    let potential: f64 = state
        .tau
        .iter()
        .zip(&state.a0)
        .map(|(&t, &a0)| c * t.powf(1.0 - g) + 0.5 * a0 * a0 / t)
        .sum();
    Ok((kinetic + potential) * dy)
}

/// `(1+w)^s - 1 - s w`, accurate for small `w`.
fn convex_remainder(s: f64, w: f64) -> f64 {
    if w.abs() < SERIES_SWITCH {
        // binomial series from the quadratic term on
        let mut coeff = s * (s - 1.0) / 2.0;
        let mut pow = w * w;
        let mut sum = 0.0;
        for k in 2..60 {
            let term = coeff * pow;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
            coeff *= (s - k as f64) / (k as f64 + 1.0);
            pow *= w;
        }
        sum
    } else {
        (s * w.ln_1p()).exp_m1() - s * w
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Gas part of the relative energy density; vanishes only at `tau = tau_s`.
pub fn phi1(params: &Params, tau: f64, tau_s: f64) -> Result<f64> {
    check_positive("tau", tau)?;
    check_positive("tau_s", tau_s)?;
    let g = params.gamma();
    let w = (tau - tau_s) / tau_s;
    Ok(params.a() * tau_s.powf(1.0 - g) * convex_remainder(1.0 - g, w) / (g - 1.0))
}

/// Magnetic part of the relative energy density, `a0^2 (tau - tau_s)^2 / (2 tau tau_s^2)`.
pub fn phi2(a0: f64, tau: f64, tau_s: f64) -> Result<f64> {
    check_positive("tau", tau)?;
    check_positive("tau_s", tau_s)?;
    let d = tau - tau_s;
    Ok(0.5 * a0 * a0 * d * d / (tau * tau_s * tau_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    pub epsilon: Option<f64>,
    pub delta3: Option<f64>,
    pub delta4: Option<f64>,
    pub auto_select: bool,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            delta3: None,
            delta4: None,
            auto_select: true,
        }
    }
}

impl LyapunovConfig {
    pub fn fixed(epsilon: f64, delta3: f64, delta4: f64) -> Self {
        Self {
            epsilon: Some(epsilon),
            delta3: Some(delta3),
            delta4: Some(delta4),
            auto_select: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("delta3", self.delta3), ("delta4", self.delta4)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }
}

fn check_target(state: &State, stat: &StationaryState) -> Result<()> {
    state.validate()?;
    if stat.tau_s.len() != state.tau.len() {
        return Err(Error::LengthMismatch {
            expected: state.tau.len(),
            got: stat.tau_s.len(),
        });
    }
    Ok(())
}

/// `int (u^2/2 + phi1 + phi2)`, the relative energy.
fn relative_energy(state: &State, stat: &StationaryState, params: &Params) -> Result<f64> {
    let dy = state.grid.dy();
    let kinetic: f64 = state.u.iter().map(|u| 0.5 * u * u).sum();
    let mut potential = 0.0;
    for ((&t, &ts), &a0) in state.tau.iter().zip(&stat.tau_s).zip(&state.a0) {
        potential += phi1(params, t, ts)? + phi2(a0, t, ts)?;
    }
    Ok((kinetic + potential) * dy)
}

/// `int u(y) * int_0^y (tau - tau_s)`.
fn cross_term(state: &State, stat: &StationaryState) -> f64 {
    let dy = state.grid.dy();
    let mut acc = 0.0;
    let mut sum = 0.0;
    for i in 1..state.grid.cells() {
        acc += (state.tau[i - 1] - stat.tau_s[i - 1]) * dy;
        sum += state.u[i] * acc;
    }
    sum * dy
}

/// Relative energy plus the `epsilon`-weighted momentum/volume coupling.
pub fn lyapunov_e(
    state: &State,
    stat: &StationaryState,
    params: &Params,
    cfg: &LyapunovConfig,
) -> Result<f64> {
    check_target(state, stat)?;
    let eps = cfg
        .epsilon
        .ok_or_else(|| Error::InvalidParam("epsilon is not set".into()))?;
    Ok(relative_energy(state, stat, params)? + eps * cross_term(state, stat))
}

/// `(log(tau/tau_s))_y` on interior nodes `1..n`.
fn log_ratio_gradient(state: &State, stat: &StationaryState) -> Vec<f64> {
    let dy = state.grid.dy();
    let l: Vec<f64> = state
        .tau
        .iter()
        .zip(&stat.tau_s)
        .map(|(t, ts)| (t / ts).ln())
        .collect();
    l.windows(2).map(|w| (w[1] - w[0]) / dy).collect()
}

/// `mu/2 int (log(tau/tau_s))_y^2 - int u (log(tau/tau_s))_y`.
pub fn lyapunov_h(state: &State, stat: &StationaryState, params: &Params) -> Result<f64> {
    check_target(state, stat)?;
    let dy = state.grid.dy();
    let mu = params.mu();
    let g = log_ratio_gradient(state, stat);
    let s: f64 = g
        .iter()
        .zip(&state.u[1..])
        .map(|(gi, ui)| 0.5 * mu * gi * gi - ui * gi)
        .sum();
    Ok(s * dy)
}

/// `int u_y^2` with forward differences over the cells.
pub fn velocity_gradient_sq(state: &State) -> f64 {
    let dy = state.grid.dy();
    state
        .u
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]) / dy;
            d * d
        })
        .sum::<f64>()
        * dy
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovValues {
    pub e: f64,
    pub h: f64,
    pub combined: f64,
}

/// `E + delta3 H + delta4 int u_y^2` together with its parts.
pub fn lyapunov_combined(
    state: &State,
    stat: &StationaryState,
    params: &Params,
    cfg: &LyapunovConfig,
) -> Result<LyapunovValues> {
    let e = lyapunov_e(state, stat, params, cfg)?;
    let h = lyapunov_h(state, stat, params)?;
    let d3 = cfg
        .delta3
        .ok_or_else(|| Error::InvalidParam("delta3 is not set".into()))?;
    let d4 = cfg
        .delta4
        .ok_or_else(|| Error::InvalidParam("delta4 is not set".into()))?;
    Ok(LyapunovValues {
        e,
        h,
        combined: e + d3 * h + d4 * velocity_gradient_sq(state),
    })
}

/// `F = u - mu (log tau)_y` on nodes; one-sided differences at the walls.
pub fn diagnostic_f(state: &State, params: &Params) -> Result<Vec<f64>> {
    state.validate()?;
    let n = state.grid.cells();
    let dy = state.grid.dy();
    let l: Vec<f64> = state.tau.iter().map(|t| t.ln()).collect();
    let grad = |i: usize| -> f64 {
        let j = i.clamp(1, n - 1);
        (l[j] - l[j - 1]) / dy
    };
    Ok((0..=n).map(|i| state.u[i] - params.mu() * grad(i)).collect())
}

/// Random states around the stationary target, inside the envelope spanned
/// by `state0`. The first probe is `state0` itself.
pub fn probe_states(state0: &State, stat: &StationaryState, count: usize, seed: u64) -> Vec<State> {
    let grid = state0.grid;
    let u_amp = state0.u.iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    let tau_amp = state0
        .tau
        .iter()
        .zip(&stat.tau_s)
        .fold(0.0_f64, |m, (t, ts)| m.max((t - ts).abs()));
    let floor = 0.5 * stat.min_tau();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(count + 1);
    probes.push(state0.clone());
    for _ in 0..count {
        let cu: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let ct: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let su: f64 = rng.random_range(0.0..1.0);
        let st: f64 = rng.random_range(0.0..1.0);

        let mut u: Vec<f64> = grid
            .node_coords()
            .iter()
            .map(|&x| {
                cu.iter()
                    .enumerate()
                    .map(|(m, c)| c * ((m + 1) as f64 * PI * x).sin())
                    .sum()
            })
            .collect();
        u[0] = 0.0;
        u[grid.cells()] = 0.0;
        let um = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if um > 0.0 {
            u.iter_mut().for_each(|v| *v *= su * u_amp / um);
        }

        let mut w: Vec<f64> = grid
            .cell_coords()
            .iter()
            .map(|&x| {
                ct.iter()
                    .enumerate()
                    .map(|(m, c)| c * ((m + 1) as f64 * PI * x).cos())
                    .sum()
            })
            .collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|v| *v -= mean);
        let wm = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut scale = if wm > 0.0 { st * tau_amp / wm } else { 0.0 };
        // keep every probe volume above half the stationary minimum
        let worst = w
            .iter()
            .zip(&stat.tau_s)
            .map(|(wj, ts)| if *wj < 0.0 { (ts - floor) / -wj } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        scale = scale.min(worst);
        let tau = w
            .iter()
            .zip(&stat.tau_s)
            .map(|(wj, ts)| ts + scale * wj)
            .collect();

        probes.push(State {
            grid,
            t: state0.t,
            tau,
            u,
            a0: state0.a0.clone(),
        });
    }
    probes
}

/// Picks `(epsilon, delta3, delta4)` for a trajectory starting at `state0`
/// using [`DEFAULT_PROBES`] seeded random probes.
pub fn select_small_params(
    state0: &State,
    stat: &StationaryState,
    params: &Params,
    seed: u64,
) -> Result<LyapunovConfig> {
    let probes = probe_states(state0, stat, DEFAULT_PROBES, seed);
    select_small_params_on(&probes, stat, params)
}

/// Halving search over an explicit probe set.
///
/// Starting from 0.1 each, `epsilon` is halved until
/// `E >= 1/4 int (u^2 + kappa (tau - tau_s)^2)` on every probe, where `kappa`
/// is the smallest observed ratio `2 (phi1 + phi2) / (tau - tau_s)^2`; then
/// `delta3` and `delta4` are halved together until the combined functional
/// is positive on every non-stationary probe.
pub fn select_small_params_on(
    probes: &[State],
    stat: &StationaryState,
    params: &Params,
) -> Result<LyapunovConfig> {
    for p in probes {
        check_target(p, stat)?;
    }
    let mut kappa = f64::INFINITY;
    for p in probes {
        for ((&t, &ts), &a0) in p.tau.iter().zip(&stat.tau_s).zip(&p.a0) {
            let d = t - ts;
            if d != 0.0 {
                kappa = kappa.min(2.0 * (phi1(params, t, ts)? + phi2(a0, t, ts)?) / (d * d));
            }
        }
    }
    if !kappa.is_finite() {
        kappa = 0.0;
    }

    let sizes: Vec<(f64, f64)> = probes
        .iter()
        .map(|p| {
            let dy = p.grid.dy();
            let u2 = p.u.iter().map(|u| u * u).sum::<f64>() * dy;
            let w2 = p
                .tau
                .iter()
                .zip(&stat.tau_s)
                .map(|(t, ts)| (t - ts) * (t - ts))
                .sum::<f64>()
                * dy;
            (u2, w2)
        })
        .collect();

    let mut cfg = LyapunovConfig {
        epsilon: Some(INITIAL_WEIGHT),
        delta3: Some(INITIAL_WEIGHT),
        delta4: Some(INITIAL_WEIGHT),
        auto_select: true,
    };
    for _ in 0..=MAX_HALVINGS {
        let mut coercive = true;
        let mut positive = true;
        for (p, &(u2, w2)) in probes.iter().zip(&sizes) {
            let v = lyapunov_combined(p, stat, params, &cfg)?;
            if v.e < 0.25 * (u2 + kappa * w2) {
                coercive = false;
            }
            let nontrivial = u2 + w2 > 0.0;
            if v.combined < 0.0 || (nontrivial && v.combined <= 0.0) {
                positive = false;
            }
        }
        match (coercive, positive) {
            (true, true) => return Ok(cfg),
            (false, _) => cfg.epsilon = cfg.epsilon.map(|e| 0.5 * e),
            (true, false) => {
                cfg.delta3 = cfg.delta3.map(|d| 0.5 * d);
                cfg.delta4 = cfg.delta4.map(|d| 0.5 * d);
            }
        }
    }
    Err(Error::Selection(MAX_HALVINGS))
}
