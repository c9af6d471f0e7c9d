//! Run configuration from TOML files and command-line overrides.
//!
//! ```toml
//! scenario = "smooth"          # or: scenario = { snapshot = "init.txt" }
//! N = 256
//! t_end = 80.0
//! seed = 0
//!
//! [params]
//! A = 1.0
//! gamma = 1.4
//! mu = 10.0
//!
//! [scheme]
//! cfl_safety = 0.4
//!
//! [output]
//! dir = "out"
//! stride = 1
//!
//! [lyapunov]                  # omit to auto-select the weights
//! epsilon = 0.05
//! delta3 = 0.05
//! delta4 = 0.05
//! ```
//!
//! Every table and key is optional. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::functionals::LyapunovConfig;
use crate::grid::MassGrid;
use crate::integrator::SchemeConfig;
use crate::io::output::{read_snapshot, Snapshot};
use crate::io::presets::Preset;
use crate::model::Params;
use crate::state::InitialData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ScenarioSpec {
    Preset(String),
    Snapshot { snapshot: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(rename = "A")]
    pub a: Option<f64>,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub cfl_safety: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_min: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSpec {
    pub epsilon: Option<f64>,
    pub delta3: Option<f64>,
    pub delta4: Option<f64>,
}

/// Partially specified configuration, as read from a file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub scenario: Option<ScenarioSpec>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
}

impl ConfigSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Values set in `over` win.
    pub fn overridden_by(self, over: ConfigSpec) -> ConfigSpec {
        ConfigSpec {
            scenario: over.scenario.or(self.scenario),
            n: over.n.or(self.n),
            t_end: over.t_end.or(self.t_end),
            seed: over.seed.or(self.seed),
            params: ParamsSpec {
                a: over.params.a.or(self.params.a),
                gamma: over.params.gamma.or(self.params.gamma),
                mu: over.params.mu.or(self.params.mu),
            },
            scheme: SchemeSpec {
                cfl_safety: over.scheme.cfl_safety.or(self.scheme.cfl_safety),
                dt_max: over.scheme.dt_max.or(self.scheme.dt_max),
                dt_min: over.scheme.dt_min.or(self.scheme.dt_min),
                max_steps: over.scheme.max_steps.or(self.scheme.max_steps),
            },
            output: OutputSpec {
                dir: over.output.dir.or(self.output.dir),
                stride: over.output.stride.or(self.output.stride),
            },
            lyapunov: LyapunovSpec {
                epsilon: over.lyapunov.epsilon.or(self.lyapunov.epsilon),
                delta3: over.lyapunov.delta3.or(self.lyapunov.delta3),
                delta4: over.lyapunov.delta4.or(self.lyapunov.delta4),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Preset(Preset),
    Snapshot(PathBuf),
}

/// Fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: Params,
    pub n: usize,
    pub t_end: f64,
    pub scheme: SchemeConfig,
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub lyapunov: LyapunovConfig,
}

/// Fallbacks for keys that neither the file nor the flags set.
#[derive(Debug, Clone, PartialEq)]
pub struct Defaults {
    pub scenario: Preset,
    pub n: usize,
    pub t_end: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            scenario: Preset::Smooth,
            n: 256,
            t_end: 10.0,
        }
    }
}

/// Reads `path` (if any), applies `flags` on top, fills the remaining keys
/// from `defaults` and the scenario preset, and validates the result.
pub fn parse_config(path: Option<&Path>, flags: ConfigSpec, defaults: &Defaults) -> Result<RunConfig> {
    let file = match path {
        Some(p) => ConfigSpec::from_file(p)?,
        None => ConfigSpec::default(),
    };
    resolve(file.overridden_by(flags), defaults)
}

pub fn resolve(spec: ConfigSpec, defaults: &Defaults) -> Result<RunConfig> {
    let scenario = match spec.scenario {
        None => Scenario::Preset(defaults.scenario),
        Some(ScenarioSpec::Preset(name)) => Scenario::Preset(name.parse()?),
        Some(ScenarioSpec::Snapshot { snapshot }) => Scenario::Snapshot(snapshot),
    };
    let base = match &scenario {
        Scenario::Preset(p) => Some(p.params()),
        Scenario::Snapshot(_) => None,
    };
    let pick = |v: Option<f64>, name: &str, from: fn(&Params) -> f64| -> Result<f64> {
        v.or(base.as_ref().map(from)).ok_or_else(|| {
            Error::Config(format!("params.{name} is required for snapshot scenarios"))
        })
    };
    let params = Params::new(
        pick(spec.params.a, "A", Params::a)?,
        pick(spec.params.gamma, "gamma", Params::gamma)?,
        pick(spec.params.mu, "mu", Params::mu)?,
    )?;

    let n = match (&scenario, spec.n) {
        (_, Some(n)) => n,
        (Scenario::Preset(_), None) => defaults.n,
        (Scenario::Snapshot(path), None) => load_snapshot(path)?.tau.len(),
    };
    if n < MassGrid::MIN_CELLS {
        return Err(Error::Config(format!(
            "N must be at least {}, got {n}",
            MassGrid::MIN_CELLS
        )));
    }
    let t_end = spec.t_end.unwrap_or(defaults.t_end);
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be finite and non-negative, got {t_end}")));
    }

    let d = SchemeConfig::default();
    let scheme = SchemeConfig {
        cfl_safety: spec.scheme.cfl_safety.unwrap_or(d.cfl_safety),
        dt_max: spec.scheme.dt_max.unwrap_or(d.dt_max),
        dt_min: spec.scheme.dt_min.unwrap_or(d.dt_min),
        max_steps: spec.scheme.max_steps.unwrap_or(d.max_steps),
        stride: spec.output.stride,
    };
    scheme.validate()?;

    let l = spec.lyapunov;
    let lyapunov = match (l.epsilon, l.delta3, l.delta4) {
        (None, None, None) => LyapunovConfig::default(),
        (Some(e), Some(d3), Some(d4)) => LyapunovConfig::fixed(e, d3, d4),
        _ => {
            return Err(Error::Config(
                "lyapunov weights must be given all together (epsilon, delta3, delta4) or not at all"
                    .into(),
            ))
        }
    };
    lyapunov.validate()?;

    Ok(RunConfig {
        params,
        n,
        t_end,
        scheme,
        scenario,
        out_dir: spec.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        seed: spec.seed.unwrap_or(0),
        lyapunov,
    })
}

fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    read_snapshot(std::io::BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn initial_data(&self) -> Result<InitialData> {
        self.initial_data_on(self.n)
    }

    /// Initial data on `n` cells. Snapshot scenarios only exist at their
    /// own resolution.
    pub fn initial_data_on(&self, n: usize) -> Result<InitialData> {
        match &self.scenario {
            Scenario::Preset(p) => p.initial_data(MassGrid::new(n)?),
            Scenario::Snapshot(path) => {
                let data = load_snapshot(path)?.to_initial_data()?;
                if data.grid.cells() != n {
                    return Err(Error::Config(format!(
                        "snapshot {} has {} cells, but N = {n}",
                        path.display(),
                        data.grid.cells()
                    )));
                }
                Ok(data)
            }
        }
    }

    /// Human-readable scenario label.
    pub fn scenario_name(&self) -> String {
        match &self.scenario {
            Scenario::Preset(p) => p.name().to_string(),
            Scenario::Snapshot(path) => path.display().to_string(),
        }
    }
}
