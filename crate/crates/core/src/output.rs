//! CSV and JSON writers. Floats are written in their shortest round-trip form.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::control::ControlSchedule;
use crate::error::{Error, Result};
use crate::experiments::StudyCell;
use crate::integrator::Trajectory;
use crate::model::{StateVector, DIM};
use crate::sensitivity::{ClassificationTable, SweepResult};

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// `t,S1,I1,R1,S2,I2,R2[,lam1..lam6][,u11,u12]`, one row per grid node.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    state: &Trajectory<f64, DIM>,
    adjoint: Option<&Trajectory<f64, DIM>>,
    controls: Option<&ControlSchedule<f64>>,
) -> Result<()> {
    if let Some(a) = adjoint {
        if a.grid != state.grid {
            return Err(Error::GridMismatch("adjoint grid differs from state grid".into()));
        }
    }
    if let Some(c) = controls {
        c.check_grid(&state.grid)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(StateVector::<f64>::LABELS.iter().map(|s| s.to_string()));
    if adjoint.is_some() {
        header.extend((1..=DIM).map(|i| format!("lam{i}")));
    }
    if controls.is_some() {
        header.extend(["u11".to_string(), "u12".to_string()]);
    }
    w.write_record(&header)?;
    for (k, x) in state.samples.iter().enumerate() {
        let mut row = vec![fmt_f64(state.grid.time(k))];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        if let Some(a) = adjoint {
            row.extend(a.samples[k].iter().map(|v| fmt_f64(*v)));
        }
        if let Some(c) = controls {
            row.push(fmt_f64(c.u11[k]));
            row.push(fmt_f64(c.u12[k]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,<one column per trial value>,mean,mse`.
pub fn write_sensitivity_csv<W: Write>(out: W, result: &SweepResult<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(result.values.iter().map(|v| format!("{}={}", result.param, fmt_f64(*v))));
    header.extend(["mean".to_string(), "mse".to_string()]);
    w.write_record(&header)?;
    for (k, t) in result.times.iter().enumerate() {
        let mut row = vec![fmt_f64(*t)];
        row.extend(result.curves.iter().map(|c| fmt_f64(c[k])));
        row.push(fmt_f64(result.mean_curve[k]));
        row.push(fmt_f64(result.mse_curve[k]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn verdict(sensitive: bool) -> &'static str {
    if sensitive {
        "sensitive"
    } else {
        "insensitive"
    }
}

/// `param,lo,hi,step,score,sensitive,reference_verdict`.
pub fn write_classification_csv<W: Write>(out: W, table: &ClassificationTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "lo", "hi", "step", "score", "sensitive", "reference_verdict"])?;
    for c in &table.rows {
        w.write_record([
            c.row.param.to_string(),
            fmt_f64(c.row.lo),
            fmt_f64(c.row.hi),
            fmt_f64(c.row.step),
            fmt_f64(c.score),
            verdict(c.sensitive).to_string(),
            verdict(c.row.reference_sensitive).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the long-form study table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow<'a> {
    pub study: &'a str,
    pub r0_target: Option<f64>,
    pub cell: StudyCell<f64>,
}

pub const STUDY_HEADER: [&str; 13] = [
    "study",
    "strategy",
    "r0_target",
    "alpha",
    "avg_I1",
    "avg_I2",
    "avg_R1",
    "avg_R2",
    "burden",
    "J",
    "converged",
    "burden_I1",
    "burden_I2",
];

/// Long-form table, one row per (study, strategy, r0 target, α) cell.
pub fn write_study_csv<W: Write>(out: W, rows: &[StudyRow<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STUDY_HEADER)?;
    for r in rows {
        let o = &r.cell.outcome;
        w.write_record([
            r.study.to_string(),
            o.strategy.to_string(),
            opt_f64(r.r0_target),
            fmt_f64(r.cell.alpha),
            fmt_f64(o.avg_i1),
            fmt_f64(o.avg_i2),
            fmt_f64(o.avg_r1),
            fmt_f64(o.avg_r2),
            fmt_f64(o.cumulative_burden),
            fmt_f64(o.cost),
            o.converged.to_string(),
            fmt_f64(o.burden_i1),
            fmt_f64(o.burden_i2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of one named check inside a command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// `None` when the check cannot be decided within a single run.
    pub passed: Option<bool>,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: Some(passed),
            detail: detail.into(),
        }
    }

    pub fn undecided(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: None,
            detail: detail.into(),
        }
    }
}

/// Per-run JSON record: the command, the configuration it ran with, its key
/// scalars and its checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config: RunConfig,
    pub scalars: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
}

impl RunSummary {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            scalars: BTreeMap::new(),
            checks: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn scalar(&mut self, key: impl Into<String>, value: f64) {
        self.scalars.insert(key.into(), value);
    }

    /// False when any decided check failed.
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Creates `path` (and its parent directories) and hands a buffered writer to `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Strategy;
    use crate::experiments::StrategyOutcome;
    use crate::integrator::TimeGrid;

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 7.192, 0.000073, 100.0, -2.5e17] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn trajectory_columns() {
        let grid = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let traj = Trajectory::constant(grid, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = text(|b| write_trajectory_csv(b, &traj, None, None));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,S1,I1,R1,S2,I2,R2");
        assert_eq!(lines[2], "0.5,1.0,2.0,3.0,4.0,5.0,6.0");
        assert_eq!(lines.len(), 4);

        let lam = Trajectory::constant(grid, [0.0; 6]);
        let u = ControlSchedule::zero(grid);
        let s = text(|b| write_trajectory_csv(b, &traj, Some(&lam), Some(&u)));
        assert_eq!(
            s.lines().next().unwrap(),
            "t,S1,I1,R1,S2,I2,R2,lam1,lam2,lam3,lam4,lam5,lam6,u11,u12"
        );
        let other = ControlSchedule::zero(TimeGrid::new(0.0, 1.0, 3).unwrap());
        assert!(write_trajectory_csv(Vec::new(), &traj, None, Some(&other)).is_err());
    }

    #[test]
    fn study_rows() {
        let outcome = StrategyOutcome {
            strategy: Strategy::U12Only,
            avg_i1: 1.0,
            avg_i2: 2.0,
            avg_r1: 3.0,
            avg_r2: 4.0,
            burden_i1: 10.0,
            burden_i2: 20.0,
            cumulative_burden: 30.0,
            cost: 31.5,
            iterations: 3,
            converged: true,
        };
        let rows = [StudyRow {
            study: "comparison",
            r0_target: None,
            cell: StudyCell {
                r0_target: f64::NAN,
                alpha: 0.4,
                outcome,
            },
        }];
        let s = text(|b| write_study_csv(b, &rows));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], STUDY_HEADER.join(","));
        assert_eq!(lines[1], "comparison,u12-only,,0.4,1.0,2.0,3.0,4.0,30.0,31.5,true,10.0,20.0");
    }

    #[test]
    fn summary_json_shape() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = RunSummary::new("r0", &RunConfig::default());
        s.scalar("r0", 2.5);
        s.checks.push(Check::new("positive", true, ""));
        s.checks.push(Check::undecided("later", "needs two runs"));
        assert!(s.all_passed());
        let path = dir.path().join("nested/summary.json");
        write_json(&path, &s).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["command"], "r0");
        assert_eq!(v["scalars"]["r0"], 2.5);
        assert_eq!(v["checks"][1]["passed"], serde_json::Value::Null);
        assert_eq!(v["config"]["seed"], 42);
        s.checks.push(Check::new("broken", false, ""));
        assert!(!s.all_passed());
    }
}
