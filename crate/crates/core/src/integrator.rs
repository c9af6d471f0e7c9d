//! Semi-implicit staggered time stepping.
//!
//! One step of size `dt`:
//!
//! 1. implicit viscous momentum solve at interior nodes with the pressure
//!    gradient frozen at the old volumes (tridiagonal, SPD);
//! 2. conservative volume update with the new velocities, which telescopes
//!    so that `sum(tau) dy` is invariant;
//! 3. the field is recovered algebraically, `b = a0 / tau`.
//!
//! A step that would produce `tau <= 0` is retried with half the step size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::energy0;
use crate::model::Params;
use crate::state::{InitialData, State};
use crate::tridiag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub cfl_safety: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub max_steps: usize,
    /// Observer stride in steps; `None` picks the default for the grid.
    pub stride: Option<usize>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            cfl_safety: 0.4,
            dt_max: 1.0,
            dt_min: 1e-12,
            max_steps: 50_000_000,
            stride: None,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::InvalidParam(format!(
                "need 0 < dt_min <= dt_max, got dt_min = {}, dt_max = {}",
                self.dt_min, self.dt_max
            )));
        }
        if self.stride == Some(0) {
            return Err(Error::InvalidParam("stride must be positive".into()));
        }
        Ok(())
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl_safety = cfl;
        self
    }

    /// Every step up to 256 cells, otherwise every `ceil(n / 256)` steps.
    pub fn stride_for(&self, cells: usize) -> usize {
        self.stride.unwrap_or_else(|| cells.div_ceil(256).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub dt_used: f64,
    /// `dt * sum(mu (Du)^2 / tau) dy` for this step.
    pub dissipation: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Number of step-size halvings needed to keep `tau` positive.
    pub retries: u32,
}

/// Acoustic CFL bound based on the Lagrangian sound speed `sqrt(-dP/dtau)`.
pub fn stable_dt(state: &State, params: &Params, cfg: &SchemeConfig) -> Result<f64> {
    state.validate()?;
    let cmax = state
        .a0
        .iter()
        .zip(&state.tau)
        .map(|(&a0, &tau)| params.sound_speed_sq_unchecked(a0, tau))
        .fold(0.0_f64, f64::max)
        .sqrt();
    Ok((cfg.cfl_safety * state.grid.dy() / cmax).min(cfg.dt_max))
}

/// Single attempt of size `dt`. Returns `None` if a volume turned non-positive.
fn try_step(state: &State, params: &Params, dt: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let n = state.grid.cells();
    let dy = state.grid.dy();
    let mu = params.mu();
    let r = mu * dt / (dy * dy);
    let lam = dt / dy;

    let p: Vec<f64> = state
        .a0
        .iter()
        .zip(&state.tau)
        .map(|(&a0, &tau)| params.pressure_unchecked(a0, tau))
        .collect();
    let k: Vec<f64> = state.tau.iter().map(|t| r / t).collect();

    // Interior nodes 1..n-1 are unknowns 0..n-2.
    let m = n - 1;
    let diag: Vec<f64> = (1..n).map(|i| 1.0 + k[i - 1] + k[i]).collect();
    let off: Vec<f64> = (1..m).map(|i| -k[i]).collect();
    let mut rhs: Vec<f64> = (1..n)
        .map(|i| state.u[i] - lam * (p[i] - p[i - 1]))
        .collect();
    tridiag::solve_symmetric(&diag, &off, &mut rhs);

    let mut u = Vec::with_capacity(n + 1);
    u.push(0.0);
    u.extend_from_slice(&rhs);
    u.push(0.0);

    let mut tau = Vec::with_capacity(n);
    let mut dissipation = 0.0;
    for j in 0..n {
        let du = u[j + 1] - u[j];
        let t = state.tau[j] + lam * du;
        if !(t > 0.0 && t.is_finite()) {
            return None;
        }
        tau.push(t);
        let strain = du / dy;
        dissipation += mu * strain * strain / state.tau[j];
    }
    Some((tau, u, dt * dissipation * dy))
}

/// Advances `state` in place by one step of at most `dt`, halving on failure.
pub fn advance_with_dt(
    state: &mut State,
    params: &Params,
    cfg: &SchemeConfig,
    dt: f64,
) -> Result<StepReport> {
    let energy_before = energy0(state, params)?;
    let mut dt = dt;
    let mut retries = 0;
    loop {
        if let Some((tau, u, dissipation)) = try_step(state, params, dt) {
            state.tau = tau;
            state.u = u;
            state.t += dt;
            let energy_after = energy0(state, params)?;
            return Ok(StepReport {
                dt_used: dt,
                dissipation,
                energy_before,
                energy_after,
                retries,
            });
        }
        dt *= 0.5;
        retries += 1;
        if dt < cfg.dt_min {
            return Err(Error::VacuumFormed { t: state.t, dt });
        }
    }
}

/// Advances `state` in place by one CFL-limited step.
pub fn advance(state: &mut State, params: &Params, cfg: &SchemeConfig) -> Result<StepReport> {
    let dt = stable_dt(state, params, cfg)?;
    advance_with_dt(state, params, cfg, dt)
}

/// One CFL-limited step, returning the new state.
pub fn step(state: &State, params: &Params, cfg: &SchemeConfig) -> Result<(State, StepReport)> {
    let mut next = state.clone();
    let report = advance(&mut next, params, cfg)?;
    Ok((next, report))
}

/// Receives sampled states during [`run`].
pub trait Observer {
    fn observe(&mut self, state: &State, report: Option<&StepReport>);
}

impl<F: FnMut(&State, Option<&StepReport>)> Observer for F {
    fn observe(&mut self, state: &State, report: Option<&StepReport>) {
        self(state, report)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: State,
    pub steps: usize,
    pub retries: u32,
    pub stride: usize,
}

/// Integrates from the initial data to `t_end`.
pub fn run(
    init: &InitialData,
    params: &Params,
    cfg: &SchemeConfig,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutcome> {
    run_from(State::from_initial(init), params, cfg, t_end, observers)
}

/// Integrates an existing state up to time `t_end`.
///
/// Observers see the starting state, every `stride`-th step, and the final
/// state. The last step is shortened to land on `t_end` exactly.
pub fn run_from(
    mut state: State,
    params: &Params,
    cfg: &SchemeConfig,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutcome> {
    cfg.validate()?;
    state.validate()?;
    if t_end.is_nan() || t_end < state.t {
        return Err(Error::InvalidParam(format!(
            "t_end = {t_end} precedes the current time {}",
            state.t
        )));
    }
    let stride = cfg.stride_for(state.grid.cells());
    for obs in observers.iter_mut() {
        obs.observe(&state, None);
    }
    let mut steps = 0;
    let mut retries = 0;
    while state.t < t_end {
        if steps >= cfg.max_steps {
            return Err(Error::MaxSteps(cfg.max_steps));
        }
        let dt = stable_dt(&state, params, cfg)?;
        let remaining = t_end - state.t;
        let last = dt >= remaining;
        let report = advance_with_dt(&mut state, params, cfg, dt.min(remaining))?;
        if last && report.retries == 0 {
            state.t = t_end;
        }
        steps += 1;
        retries += report.retries;
        if steps % stride == 0 || state.t >= t_end {
            for obs in observers.iter_mut() {
                obs.observe(&state, Some(&report));
            }
        }
    }
    Ok(RunOutcome {
        state,
        steps,
        retries,
        stride,
    })
}
