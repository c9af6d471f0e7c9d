//! `lagmhd`: run simulations and verification experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use lagmhd::diagnostics::Target;
use lagmhd::experiments::{
    compare_decay_rates, exp_bounds, exp_convergence, exp_decay, exp_diff_quotient, exp_energy,
    exp_invariants, exp_representation, exp_stability, exp_stationary, select_target_weights,
    sine_perturbation, DecayOptions, ExperimentReport, DEFAULT_SHIFTS,
};
use lagmhd::io::config::{parse_config, ConfigSpec, Defaults, RunConfig, ScenarioSpec};
use lagmhd::io::output::{emit_report, write_snapshot, Snapshot};
use lagmhd::io::presets::Preset;
use lagmhd::stationary_solve;

#[derive(Parser, Debug)]
#[command(name = "lagmhd", version, about = "1D viscous non-resistive MHD in Lagrangian mass coordinates")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Number of cells.
    #[arg(long = "N", global = true, value_name = "N")]
    n: Option<usize>,
    /// Final time.
    #[arg(long, global = true, value_name = "T")]
    t_end: Option<f64>,
    /// Preset name (re3, smooth, rough, nomag) or a snapshot file.
    #[arg(long, global = true, value_name = "NAME|PATH")]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the Lyapunov probe set.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and record diagnostics; checks mass and field closure.
    Simulate,
    /// Solve for the stationary state of a scenario.
    Stationary,
    /// Fit exponential decay rates towards the stationary state.
    Decay {
        /// Also run at 2N and compare the fitted L2 rates.
        #[arg(long)]
        refine: bool,
    },
    /// Compare trajectories from perturbed initial data.
    Stability {
        /// Largest perturbation amplitude; 1/10 and 1/100 of it are also run.
        #[arg(long, default_value_t = 1e-2)]
        epsilon: f64,
    },
    /// Track the extremes of the specific volume.
    Bounds,
    /// Check the representation formulas under time-step halving.
    Representation,
    /// Difference quotients of the specific volume.
    Diffquot {
        /// Shifts in cells.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SHIFTS)]
        shifts: Vec<usize>,
    },
    /// Self-convergence under grid refinement.
    Convergence {
        /// Grid sizes, each doubling the previous.
        #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256, 512])]
        sizes: Vec<usize>,
    },
    /// Run the full reference verification suite.
    VerifyAll,
    /// Check energy dissipation and the discrete dissipation identity.
    Energy,
}

impl Common {
    fn flags(&self) -> Result<ConfigSpec> {
        let scenario = match &self.scenario {
            None => None,
            Some(s) if s.parse::<Preset>().is_ok() => Some(ScenarioSpec::Preset(s.clone())),
            Some(s) if Path::new(s).is_file() => Some(ScenarioSpec::Snapshot { snapshot: s.into() }),
            Some(s) => anyhow::bail!(
                "unknown scenario '{s}': expected re3, smooth, rough, nomag or an existing snapshot file"
            ),
        };
        let mut spec = ConfigSpec {
            scenario,
            n: self.n,
            t_end: self.t_end,
            seed: self.seed,
            ..Default::default()
        };
        spec.output.dir = self.out.clone();
        Ok(spec)
    }

    fn resolve(&self, defaults: Defaults) -> Result<RunConfig> {
        Ok(parse_config(self.config.as_deref(), self.flags()?, &defaults)?)
    }
}

fn defaults(scenario: Preset, t_end: f64) -> Defaults {
    Defaults {
        scenario,
        n: 256,
        t_end,
    }
}

fn decay_options(cfg: &RunConfig) -> DecayOptions {
    DecayOptions {
        lyapunov: cfg.lyapunov,
        seed: cfg.seed,
        ..Default::default()
    }
}

/// Prints a report, writes its artifacts, and returns whether it passed.
fn finish(dir: &Path, mut rep: ExperimentReport) -> Result<bool> {
    emit_report(dir, &mut rep).with_context(|| format!("writing results to {}", dir.display()))?;
    println!("{}: {}", rep.name, if rep.passed { "PASS" } else { "FAIL" });
    for (k, v) in &rep.metrics {
        println!("  {k} = {v:.6e}");
    }
    for n in &rep.notes {
        println!("  {n}");
    }
    Ok(rep.passed)
}

fn renamed(mut rep: ExperimentReport, name: &str) -> ExperimentReport {
    rep.name = name.to_string();
    rep
}

fn simulate(c: &RunConfig) -> Result<bool> {
    let init = c.initial_data()?;
    let stat = stationary_solve(&c.params, &init.a0(), &init.grid)?;
    let lyapunov = select_target_weights(&init, &stat, &c.params, &c.lyapunov, c.seed).ok();
    let target = Target {
        stationary: stat,
        lyapunov,
    };
    let rep = exp_invariants(&init, &c.params, &c.scheme, c.t_end, Some(target))?;
    finish(&c.out_dir, rep)
}

fn stationary(c: &RunConfig) -> Result<bool> {
    let init = c.initial_data()?;
    let (mut rep, stat) = exp_stationary(&init, &c.params)?;
    let path = c.out_dir.join("stationary.txt");
    write_snapshot(&path, &Snapshot::from_stationary(&stat, &init.a0(), &init.grid))?;
    rep.artifacts.push(path);
    finish(&c.out_dir, rep)
}

fn decay(c: &RunConfig, refine: bool) -> Result<bool> {
    let init = c.initial_data()?;
    let rep = exp_decay(&init, &c.params, &c.scheme, c.t_end, &decay_options(c))?;
    if !refine {
        return finish(&c.out_dir, rep);
    }
    let fine = exp_decay(
        &c.initial_data_on(2 * c.n)?,
        &c.params,
        &c.scheme,
        c.t_end,
        &decay_options(c),
    )?;
    let cmp = compare_decay_rates(&rep, &fine);
    let a = finish(&c.out_dir, rep)?;
    let b = finish(&c.out_dir, renamed(fine, "decay_fine"))?;
    Ok(finish(&c.out_dir, cmp)? && a && b)
}

fn stability(c: &RunConfig, epsilon: f64) -> Result<bool> {
    let base = c.initial_data()?;
    let pert = sine_perturbation(&base, epsilon)?;
    let rep = exp_stability(&base, &pert, &c.params, &c.scheme, c.t_end, &[1.0, 0.1, 0.01])?;
    finish(&c.out_dir, rep)
}

fn convergence(c: &RunConfig, sizes: &[usize]) -> Result<bool> {
    let rep = exp_convergence(|n| c.initial_data_on(n), &c.params, &c.scheme, c.t_end, sizes)?;
    finish(&c.out_dir, rep)
}

/// Reference configuration for one part of the verification suite.
fn reference(common: &Common, scenario: Preset, n: usize, t_end: f64) -> Result<RunConfig> {
    let mut flags = ConfigSpec {
        scenario: Some(ScenarioSpec::Preset(scenario.name().into())),
        n: Some(n),
        t_end: Some(t_end),
        seed: common.seed,
        ..Default::default()
    };
    flags.output.dir = common.out.clone();
    Ok(parse_config(common.config.as_deref(), flags, &Defaults::default())?)
}

fn verify_all(common: &Common) -> Result<bool> {
    let mut ok = true;
    let smooth = |t| reference(common, Preset::Smooth, 256, t);

    let c = smooth(100.0)?;
    let init = c.initial_data()?;
    ok &= finish(
        &c.out_dir,
        renamed(exp_invariants(&init, &c.params, &c.scheme, c.t_end, None)?, "invariants_smooth"),
    )?;
    let r = reference(common, Preset::Rough, 256, 20.0)?;
    ok &= finish(
        &r.out_dir,
        renamed(exp_invariants(&r.initial_data()?, &r.params, &r.scheme, r.t_end, None)?, "invariants_rough"),
    )?;

    let c = smooth(10.0)?;
    ok &= finish(&c.out_dir, exp_energy(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?)?;

    for p in [Preset::Smooth, Preset::Rough] {
        let c = reference(common, p, 256, 100.0)?;
        let rep = exp_bounds(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?;
        ok &= finish(&c.out_dir, renamed(rep, &format!("bounds_{p}")))?;
    }

    let c = reference(common, Preset::Re3, 256, 0.0)?;
    ok &= stationary(&c)?;

    let c = smooth(80.0)?;
    ok &= decay(&c, true)?;

    let c = smooth(20.0)?;
    ok &= stability(&c, 1e-2)?;

    let c = smooth(10.0)?;
    ok &= finish(&c.out_dir, exp_representation(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?)?;
    let c = reference(common, Preset::Re3, 256, 10.0)?;
    let rep = exp_representation(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?;
    ok &= finish(&c.out_dir, renamed(rep, "representation_stationary"))?;

    let c = reference(common, Preset::Rough, 256, 20.0)?;
    ok &= finish(
        &c.out_dir,
        exp_diff_quotient(&c.initial_data()?, &c.params, &c.scheme, c.t_end, &DEFAULT_SHIFTS)?,
    )?;

    let c = smooth(5.0)?;
    ok &= convergence(&c, &[64, 128, 256, 512])?;

    println!("verify-all: {}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let common = &cli.common;
    match &cli.command {
        Command::Simulate => simulate(&common.resolve(defaults(Preset::Smooth, 10.0))?),
        Command::Stationary => stationary(&common.resolve(defaults(Preset::Re3, 0.0))?),
        Command::Decay { refine } => decay(&common.resolve(defaults(Preset::Smooth, 80.0))?, *refine),
        Command::Stability { epsilon } => {
            stability(&common.resolve(defaults(Preset::Smooth, 20.0))?, *epsilon)
        }
        Command::Bounds => {
            let c = common.resolve(defaults(Preset::Smooth, 100.0))?;
            finish(&c.out_dir, exp_bounds(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?)
        }
        Command::Representation => {
            let c = common.resolve(defaults(Preset::Smooth, 10.0))?;
            finish(
                &c.out_dir,
                exp_representation(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?,
            )
        }
        Command::Diffquot { shifts } => {
            let c = common.resolve(defaults(Preset::Rough, 20.0))?;
            finish(
                &c.out_dir,
                exp_diff_quotient(&c.initial_data()?, &c.params, &c.scheme, c.t_end, shifts)?,
            )
        }
        Command::Convergence { sizes } => {
            convergence(&common.resolve(defaults(Preset::Smooth, 5.0))?, sizes)
        }
        Command::Energy => {
            let c = common.resolve(defaults(Preset::Smooth, 10.0))?;
            finish(&c.out_dir, exp_energy(&c.initial_data()?, &c.params, &c.scheme, c.t_end)?)
        }
        Command::VerifyAll => verify_all(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
