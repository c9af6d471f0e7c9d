//! Per-sample diagnostics recorded along a run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{diagnostic_f, energy0, lyapunov_combined, LyapunovConfig};
use crate::integrator::{Observer, StepReport};
use crate::model::Params;
use crate::state::State;
use crate::stationary::StationaryState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy0: f64,
    pub min_tau: f64,
    pub max_tau: f64,
    pub max_abs_b: f64,
    pub l2_u: f64,
    pub l2_dtau: Option<f64>,
    pub l2_db: Option<f64>,
    pub h1_u: f64,
    pub h1_dtau: Option<f64>,
    pub h1_db: Option<f64>,
    pub lyap_e: Option<f64>,
    pub lyap_h: Option<f64>,
    pub lyap_combined: Option<f64>,
    pub l2_f: f64,
    /// Largest `|b tau - a0|` over the cells.
    pub closure_defect: f64,
    pub dt: Option<f64>,
    pub dissipation: Option<f64>,
}

/// Target used for relative norms and Lyapunov functionals.
#[derive(Debug, Clone)]
pub struct Target {
    pub stationary: StationaryState,
    pub lyapunov: Option<LyapunovConfig>,
}

pub fn record(
    state: &State,
    params: &Params,
    target: Option<&Target>,
    report: Option<&StepReport>,
) -> Result<DiagnosticsRecord> {
    let grid = state.grid;
    let b = state.b()?;
    let closure_defect = b
        .iter()
        .zip(&state.tau)
        .zip(&state.a0)
        .map(|((b, t), a)| (b * t - a).abs())
        .fold(0.0, f64::max);

    let mut rec = DiagnosticsRecord {
        t: state.t,
        mass: state.mass(),
        energy0: energy0(state, params)?,
        min_tau: state.min_tau(),
        max_tau: state.max_tau(),
        max_abs_b: state.max_abs_b(),
        l2_u: grid.l2_norm(&state.u)?,
        l2_dtau: None,
        l2_db: None,
        h1_u: grid.h1_norm(&state.u)?,
        h1_dtau: None,
        h1_db: None,
        lyap_e: None,
        lyap_h: None,
        lyap_combined: None,
        l2_f: grid.l2_norm(&diagnostic_f(state, params)?)?,
        closure_defect,
        dt: report.map(|r| r.dt_used),
        dissipation: report.map(|r| r.dissipation),
    };
    if let Some(target) = target {
        let stat = &target.stationary;
        let dtau: Vec<f64> = state.tau.iter().zip(&stat.tau_s).map(|(a, b)| a - b).collect();
        let db: Vec<f64> = b.iter().zip(&stat.b_s).map(|(a, b)| a - b).collect();
        rec.l2_dtau = Some(grid.l2_norm(&dtau)?);
        rec.l2_db = Some(grid.l2_norm(&db)?);
        rec.h1_dtau = Some(grid.h1_norm(&dtau)?);
        rec.h1_db = Some(grid.h1_norm(&db)?);
        if let Some(cfg) = &target.lyapunov {
            let v = lyapunov_combined(state, stat, params, cfg)?;
            rec.lyap_e = Some(v.e);
            rec.lyap_h = Some(v.h);
            rec.lyap_combined = Some(v.combined);
        }
    }
    Ok(rec)
}

/// Observer that stores one [`DiagnosticsRecord`] per sample.
#[derive(Debug)]
pub struct Recorder {
    params: Params,
    target: Option<Target>,
    pub records: Vec<DiagnosticsRecord>,
}

impl Recorder {
    pub fn new(params: Params, target: Option<Target>) -> Self {
        Self {
            params,
            target,
            records: Vec::new(),
        }
    }

    /// Checks that the target matches the grid before a run starts.
    pub fn check(&self, state: &State) -> Result<()> {
        if let Some(t) = &self.target {
            if t.stationary.tau_s.len() != state.tau.len() {
                return Err(Error::LengthMismatch {
                    expected: state.tau.len(),
                    got: t.stationary.tau_s.len(),
                });
            }
            if let Some(cfg) = &t.lyapunov {
                cfg.validate()?;
                if cfg.epsilon.is_none() || cfg.delta3.is_none() || cfg.delta4.is_none() {
                    return Err(Error::InvalidParam("Lyapunov weights are not set".into()));
                }
            }
        }
        Ok(())
    }

    pub fn series(&self, f: impl Fn(&DiagnosticsRecord) -> Option<f64>) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| f(r).map(|v| (r.t, v)))
            .collect()
    }
}

impl Observer for Recorder {
    fn observe(&mut self, state: &State, report: Option<&StepReport>) {
        let rec = record(state, &self.params, self.target.as_ref(), report)
            .expect("observed states are validated by the integrator");
        self.records.push(rec);
    }
}
