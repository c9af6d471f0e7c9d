//! Plain-text output: CSV time series, two-block snapshots, JSON-lines
//! reports.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every `f64` exactly.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};
use crate::experiments::{ExperimentReport, Table};
use crate::grid::MassGrid;
use crate::state::{InitialData, Normalization, State};
use crate::stationary::StationaryState;

pub const TIMESERIES_COLUMNS: [&str; 15] = [
    "t",
    "mass",
    "energy0",
    "min_tau",
    "max_tau",
    "max_abs_b",
    "l2_u",
    "l2_dtau",
    "l2_db",
    "h1_u",
    "h1_dtau",
    "lyap_E",
    "lyap_H",
    "lyap_combined",
    "dt",
];

pub const REPORTS_FILE: &str = "reports.jsonl";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number '{s}'")))
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, line).map(Some)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_timeseries_to(mut w: impl Write, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(w, "{}", TIMESERIES_COLUMNS.join(","))?;
    for r in records {
        let row = [
            fmt_f64(r.t),
            fmt_f64(r.mass),
            fmt_f64(r.energy0),
            fmt_f64(r.min_tau),
            fmt_f64(r.max_tau),
            fmt_f64(r.max_abs_b),
            fmt_f64(r.l2_u),
            fmt_opt(r.l2_dtau),
            fmt_opt(r.l2_db),
            fmt_f64(r.h1_u),
            fmt_opt(r.h1_dtau),
            fmt_opt(r.lyap_e),
            fmt_opt(r.lyap_h),
            fmt_opt(r.lyap_combined),
            fmt_opt(r.dt),
        ];
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timeseries(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    write_timeseries_to(create(path)?, records)
}

/// One parsed row of a time-series file; blank cells are `None`.
pub type TimeseriesRow = [Option<f64>; 15];

pub fn read_timeseries(r: impl BufRead) -> Result<Vec<TimeseriesRow>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or(Error::EmptyInput)??;
    if header != TIMESERIES_COLUMNS.join(",") {
        return Err(Error::Parse(format!("unexpected header '{header}'")));
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != TIMESERIES_COLUMNS.len() {
            return Err(Error::Parse(format!("line {}: {} columns", k + 2, cells.len())));
        }
        let mut row = [None; 15];
        for (slot, c) in row.iter_mut().zip(cells) {
            *slot = parse_opt(c, k + 2)?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{}", table.columns.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnapshotKind {
    /// A solution state at time `t`.
    Time(f64),
    /// A stationary state with total pressure `C0`.
    Stationary(f64),
}

/// Cell block `(y, tau, b, a0)` and node block `(y, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: SnapshotKind,
    pub y_cell: Vec<f64>,
    pub tau: Vec<f64>,
    pub b: Vec<f64>,
    pub a0: Vec<f64>,
    pub y_node: Vec<f64>,
    pub u: Vec<f64>,
}

impl Snapshot {
    pub fn from_state(s: &State) -> Result<Self> {
        Ok(Self {
            kind: SnapshotKind::Time(s.t),
            y_cell: s.grid.cell_coords(),
            tau: s.tau.clone(),
            b: s.b()?,
            a0: s.a0.clone(),
            y_node: s.grid.node_coords(),
            u: s.u.clone(),
        })
    }

    pub fn from_stationary(stat: &StationaryState, a0: &[f64], grid: &MassGrid) -> Self {
        Self {
            kind: SnapshotKind::Stationary(stat.c0),
            y_cell: grid.cell_coords(),
            tau: stat.tau_s.clone(),
            b: stat.b_s.clone(),
            a0: a0.to_vec(),
            y_node: grid.node_coords(),
            u: vec![0.0; grid.nodes()],
        }
    }

    /// Initial data with `tau0 = tau`, `u0 = u`, `b0 = b`, rescaled to unit mass.
    pub fn to_initial_data(&self) -> Result<InitialData> {
        let grid = MassGrid::new(self.tau.len())?;
        InitialData::new(grid, self.tau.clone(), self.u.clone(), self.b.clone(), Normalization::Rescale)
    }
}

const CELL_HEADER: &str = "y_cell,tau,b,a0";
const NODE_HEADER: &str = "y_node,u";

pub fn write_snapshot_to(mut w: impl Write, s: &Snapshot) -> Result<()> {
    match s.kind {
        SnapshotKind::Time(t) => writeln!(w, "# t={}", fmt_f64(t))?,
        SnapshotKind::Stationary(c0) => writeln!(w, "# C0={}", fmt_f64(c0))?,
    }
    writeln!(w, "{CELL_HEADER}")?;
    for j in 0..s.tau.len() {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(s.y_cell[j]),
            fmt_f64(s.tau[j]),
            fmt_f64(s.b[j]),
            fmt_f64(s.a0[j])
        )?;
    }
    writeln!(w)?;
    writeln!(w, "{NODE_HEADER}")?;
    for i in 0..s.u.len() {
        writeln!(w, "{},{}", fmt_f64(s.y_node[i]), fmt_f64(s.u[i]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshot(path: &Path, s: &Snapshot) -> Result<()> {
    write_snapshot_to(create(path)?, s)
}

pub fn read_snapshot(r: impl BufRead) -> Result<Snapshot> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let mut it = lines.iter().enumerate().map(|(k, l)| (k + 1, l.as_str()));
    let (_, first) = it.next().ok_or(Error::EmptyInput)?;
    let kind = if let Some(v) = first.strip_prefix("# t=") {
        SnapshotKind::Time(parse_f64(v, 1)?)
    } else if let Some(v) = first.strip_prefix("# C0=") {
        SnapshotKind::Stationary(parse_f64(v, 1)?)
    } else {
        return Err(Error::Parse(format!("line 1: expected '# t=' or '# C0=', got '{first}'")));
    };
    match it.next() {
        Some((_, CELL_HEADER)) => {}
        other => return Err(Error::Parse(format!("expected '{CELL_HEADER}', got {other:?}"))),
    }
    let mut s = Snapshot {
        kind,
        y_cell: vec![],
        tau: vec![],
        b: vec![],
        a0: vec![],
        y_node: vec![],
        u: vec![],
    };
    for (k, line) in it.by_ref() {
        if line.is_empty() {
            break;
        }
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 4 {
            return Err(Error::Parse(format!("line {k}: expected 4 columns")));
        }
        s.y_cell.push(parse_f64(v[0], k)?);
        s.tau.push(parse_f64(v[1], k)?);
        s.b.push(parse_f64(v[2], k)?);
        s.a0.push(parse_f64(v[3], k)?);
    }
    match it.next() {
        Some((_, NODE_HEADER)) => {}
        other => return Err(Error::Parse(format!("expected '{NODE_HEADER}', got {other:?}"))),
    }
    for (k, line) in it {
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 2 {
            return Err(Error::Parse(format!("line {k}: expected 2 columns")));
        }
        s.y_node.push(parse_f64(v[0], k)?);
        s.u.push(parse_f64(v[1], k)?);
    }
    if s.tau.is_empty() || s.u.len() != s.tau.len() + 1 {
        return Err(Error::Parse(format!(
            "{} cells but {} nodes",
            s.tau.len(),
            s.u.len()
        )));
    }
    Ok(s)
}

/// Appends one JSON line to `path`.
pub fn append_report(path: &Path, report: &ExperimentReport) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(report).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// Writes the report's series and tables into `dir` as `<name>_<key>.csv`
/// and its states as `<name>_<key>.txt` snapshots, records the paths, and
/// appends the report to [`REPORTS_FILE`].
pub fn emit_report(dir: &Path, report: &mut ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (key, records) in &report.series {
        let p = dir.join(format!("{}_{key}.csv", report.name));
        write_timeseries(&p, records)?;
        written.push(p);
    }
    for (key, table) in &report.tables {
        let p = dir.join(format!("{}_{key}.csv", report.name));
        write_table(&p, table)?;
        written.push(p);
    }
    for (key, state) in &report.states {
        let p = dir.join(format!("{}_{key}.txt", report.name));
        write_snapshot(&p, &Snapshot::from_state(state)?)?;
        written.push(p);
    }
    report.artifacts.extend(written);
    append_report(&dir.join(REPORTS_FILE), report)
}
