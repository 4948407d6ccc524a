//! Subcommand dispatch. Each command writes its files under the configured
//! output directory and ends with `<command>_summary.json`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::battery::{run_battery, Battery, CriterionOutcome};
use crate::config::RunConfig;
use crate::control::{cost, forward_backward_sweep, simulate, ControlSchedule, Strategy};
use crate::error::{Error, Result};
use crate::experiments::{alpha_sweep, r0_sweep, StrategyOutcome, StudyCell, REFERENCE_AVERAGES};
use crate::model::{check_feasible, ControlPair, StateVector, DEFAULT_FEASIBILITY_TOL};
use crate::output::{
    fmt_f64, write_classification_csv, write_file, write_json, write_sensitivity_csv, write_study_csv,
    write_trajectory_csv, Check, RunSummary, StudyRow,
};
use crate::reproduction::{
    closed_form_e1_crosscheck, disease_free_equilibrium, endemic_equilibrium, r0, r0_from_matrix, random_starts,
    stability_verdict, R0Variant, DEFAULT_STARTS,
};
use crate::sensitivity::run_reference_sweeps;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Simulate,
    Equilibria,
    R0,
    OptControl,
    Sensitivity,
    SweepR0,
    SweepAlpha,
    Replicate,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Equilibria,
        Command::R0,
        Command::OptControl,
        Command::Sensitivity,
        Command::SweepR0,
        Command::SweepAlpha,
        Command::Replicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::R0 => "r0",
            Command::OptControl => "optcontrol",
            Command::Sensitivity => "sensitivity",
            Command::SweepR0 => "sweep-r0",
            Command::SweepAlpha => "sweep-alpha",
            Command::Replicate => "replicate",
        }
    }

    /// Strategy used when none is given on the command line.
    pub fn default_strategy(self) -> Strategy {
        Strategy::Both
    }

    fn file_stem(self) -> String {
        self.as_str().replace('-', "_")
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "replicate-paper" {
            return Ok(Command::Replicate);
        }
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown subcommand `{s}`")))
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    summary: RunSummary,
}

impl Outputs<'_> {
    fn file(&mut self, name: &str, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
        write_file(&self.dir.join(name), f)?;
        self.summary.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, command: Command) -> Result<RunSummary> {
        let name = format!("{}_summary.json", command.file_stem());
        self.summary.files.push(name.clone());
        write_json(&self.dir.join(name), &self.summary)?;
        Ok(self.summary)
    }
}

/// Runs `command` and returns its summary. Failed checks are reported in the
/// summary rather than as errors; the caller decides the exit status.
pub fn run_command(command: Command, config: &RunConfig, strategy: Option<Strategy>) -> Result<RunSummary> {
    config.validate()?;
    let strategy = strategy.unwrap_or(command.default_strategy());
    let mut out = Outputs {
        dir: &config.output_dir,
        summary: RunSummary::new(command.as_str(), config),
    };
    std::fs::create_dir_all(&config.output_dir)?;
    match command {
        Command::Simulate => simulate_cmd(config, &mut out)?,
        Command::Equilibria => equilibria_cmd(config, &mut out)?,
        Command::R0 => r0_cmd(config, &mut out)?,
        Command::OptControl => optcontrol_cmd(config, strategy, &mut out)?,
        Command::Sensitivity => sensitivity_cmd(config, &mut out)?,
        Command::SweepR0 => sweep_r0_cmd(config, &mut out)?,
        Command::SweepAlpha => sweep_alpha_cmd(config, strategy, &mut out)?,
        Command::Replicate => replicate_cmd(config, &mut out)?,
    }
    out.finish(command)
}

fn simulate_cmd(config: &RunConfig, out: &mut Outputs<'_>) -> Result<()> {
    let grid = config.time_grid()?;
    let schedule = ControlSchedule::constant(grid, config.params.baseline_controls());
    let traj = simulate(&config.params, &config.y0, &schedule)?;
    out.file("simulate_trajectory.csv", |w| write_trajectory_csv(w, &traj, None, None))?;

    let report = check_feasible(&traj, &config.params, DEFAULT_FEASIBILITY_TOL);
    let s = &mut out.summary;
    for (label, v) in StateVector::<f64>::LABELS.iter().zip(traj.last()) {
        s.scalar(format!("final_{label}"), *v);
    }
    s.scalar("max_total", report.max_total);
    s.scalar("population_bound", report.bound);
    s.checks.push(Check::new(
        "feasible",
        report.passes(),
        report.violation.map(|v| format!("{v:?}")).unwrap_or_default(),
    ));
    Ok(())
}

fn equilibria_cmd(config: &RunConfig, out: &mut Outputs<'_>) -> Result<()> {
    let p = &config.params;
    let e0 = disease_free_equilibrium(p)?;
    let dfe = stability_verdict(p, &e0)?;
    let starts = random_starts(p, DEFAULT_STARTS, config.seed);
    let endemic = endemic_equilibrium(p, &starts);
    let r = r0(p, R0Variant::WithControl)?.r0;

    let closed = closed_form_e1_crosscheck(p);
    if let (Some(cf), Some(e1)) = (closed.state(), endemic.as_ref()) {
        let gap = cf
            .to_array()
            .iter()
            .zip(e1.state.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        log::info!("closed-form endemic state differs from the numerical root by {gap:e}");
    } else if !closed.zero_denominators.is_empty() {
        log::info!("closed-form endemic state undefined: zero {}", closed.zero_denominators.join(", "));
    }

    let reports: Vec<(&str, _)> = std::iter::once(("disease-free", &dfe))
        .chain(endemic.as_ref().map(|e| ("endemic", e)))
        .collect();
    out.file("equilibria.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["kind"];
        header.extend(StateVector::<f64>::LABELS);
        header.extend(["residual_norm", "max_real_eigenvalue", "stable"]);
        csv.write_record(&header)?;
        for (kind, rep) in &reports {
            let mut row = vec![kind.to_string()];
            row.extend(rep.state.to_array().map(fmt_f64));
            row.push(fmt_f64(rep.residual_norm));
            row.push(fmt_f64(rep.eigen_real_parts[0]));
            row.push(rep.stable.to_string());
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    })?;

    let s = &mut out.summary;
    s.scalar("r0", r);
    s.scalar("dfe_max_real_eigenvalue", dfe.eigen_real_parts[0]);
    s.scalar("endemic_found", if endemic.is_some() { 1.0 } else { 0.0 });
    s.checks.push(Check::new(
        "dfe stable iff r0 < 1",
        dfe.stable == (r < 1.0),
        format!("r0 {} stable {}", fmt_f64(r), dfe.stable),
    ));
    Ok(())
}

fn r0_cmd(config: &RunConfig, out: &mut Outputs<'_>) -> Result<()> {
    let mut rows = Vec::new();
    for (name, variant) in [("with-control", R0Variant::WithControl), ("no-control", R0Variant::NoControl)] {
        let b = r0(&config.params, variant)?;
        let m = r0_from_matrix(&config.params, variant)?;
        rows.push((name, b, m));
    }
    out.file("r0.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["variant", "p", "q", "discriminant", "r0", "r0_matrix"])?;
        for (name, b, m) in &rows {
            csv.write_record([
                name.to_string(),
                fmt_f64(b.p),
                fmt_f64(b.q),
                fmt_f64(b.discriminant),
                fmt_f64(b.r0),
                fmt_f64(*m),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let s = &mut out.summary;
    for (name, b, m) in &rows {
        s.scalar(format!("r0_{name}"), b.r0);
        let gap = (b.r0 - m).abs() / b.r0.abs().max(1.0);
        s.checks.push(Check::new(
            format!("{name} closed form matches spectral radius"),
            gap < 1e-9,
            format!("relative gap {gap:e}"),
        ));
    }
    Ok(())
}

fn optcontrol_cmd(config: &RunConfig, strategy: Strategy, out: &mut Outputs<'_>) -> Result<()> {
    let problem = config.problem()?;
    let sweep = forward_backward_sweep(&problem, strategy, &config.sweep)?;
    let name = format!("optcontrol_{}.csv", strategy.as_str().replace('-', "_"));
    out.file(&name, |w| {
        write_trajectory_csv(w, &sweep.state, Some(&sweep.adjoint), Some(&sweep.controls))
    })?;

    let objective = |u: &ControlSchedule<f64>| -> Result<f64> {
        cost(&simulate(&problem.params, &problem.y0, u)?, u, &problem.weights)
    };
    let j_zero = objective(&ControlSchedule::zero(problem.grid))?;
    let half = problem.bounds.half();
    let j_half = objective(&ControlSchedule::constant(
        problem.grid,
        ControlPair::new(
            if strategy.uses_u11() { half.u11 } else { 0.0 },
            if strategy.uses_u12() { half.u12 } else { 0.0 },
        ),
    ))?;
    let o = StrategyOutcome::from_sweep(&sweep);
    let s = &mut out.summary;
    for (k, v) in [
        ("J", o.cost),
        ("J_zero_controls", j_zero),
        ("J_half_bound", j_half),
        ("avg_I1", o.avg_i1),
        ("avg_I2", o.avg_i2),
        ("avg_R1", o.avg_r1),
        ("avg_R2", o.avg_r2),
        ("burden", o.cumulative_burden),
        ("iterations", o.iterations as f64),
        ("final_change", sweep.final_change),
    ] {
        s.scalar(k, v);
    }
    s.checks.push(Check::new(
        "converged",
        sweep.converged,
        format!("{} iterations", sweep.iterations),
    ));
    s.checks.push(Check::new("J <= J(0)", o.cost <= j_zero, ""));
    s.checks.push(Check::new("J <= J(half bound)", o.cost <= j_half, ""));
    Ok(())
}

fn sensitivity_cmd(config: &RunConfig, out: &mut Outputs<'_>) -> Result<()> {
    let (table, sweeps) = run_reference_sweeps(
        &config.params,
        &config.sensitivity.y0,
        config.time_grid()?,
        config.sensitivity.record_every,
        config.sensitivity.threshold,
    )?;
    out.file("sensitivity_classification.csv", |w| write_classification_csv(w, &table))?;
    for (i, sweep) in sweeps.iter().enumerate() {
        out.file(&format!("sensitivity_{:02}_{}.csv", i + 1, sweep.param), |w| {
            write_sensitivity_csv(w, sweep)
        })?;
    }
    let wrong = table.separated_disagreements();
    let s = &mut out.summary;
    s.scalar("agreement_fraction", table.agreement_fraction());
    s.checks.push(Check::new(
        "strongly separated rows agree",
        wrong.is_empty(),
        wrong
            .iter()
            .map(|c| format!("{} [{}, {}]", c.row.param, c.row.lo, c.row.hi))
            .collect::<Vec<_>>()
            .join("; "),
    ));
    Ok(())
}

fn convergence_check(cells: &[StudyCell<f64>]) -> Check {
    let bad = cells.iter().filter(|c| !c.outcome.converged).count();
    Check::new("all sweeps converged", bad == 0, format!("{bad} of {} did not converge", cells.len()))
}

fn study_rows<'a>(study: &'a str, cells: &[StudyCell<f64>]) -> Vec<StudyRow<'a>> {
    cells
        .iter()
        .map(|c| StudyRow {
            study,
            r0_target: Some(c.r0_target),
            cell: *c,
        })
        .collect()
}

fn sweep_r0_cmd(config: &RunConfig, out: &mut Outputs<'_>) -> Result<()> {
    let cells = r0_sweep(&config.problem()?, &config.studies.r0_grid, &Strategy::ALL, &config.sweep)?;
    out.file("sweep_r0.csv", |w| write_study_csv(w, &study_rows("r0", &cells)))?;
    out.summary.checks.push(convergence_check(&cells));
    Ok(())
}

fn sweep_alpha_cmd(config: &RunConfig, strategy: Strategy, out: &mut Outputs<'_>) -> Result<()> {
    let cells = alpha_sweep(
        &config.problem()?,
        &config.studies.alpha_grid,
        strategy,
        &config.studies.r0_grid,
        &config.sweep,
    )?;
    out.file("sweep_alpha.csv", |w| write_study_csv(w, &study_rows("alpha", &cells)))?;
    out.summary.checks.push(convergence_check(&cells));
    Ok(())
}

fn criterion_check(c: &CriterionOutcome) -> Check {
    let name = format!("{:02} {}", c.id, c.name);
    match c.passed {
        Some(p) => Check::new(name, p, c.detail.clone()),
        None => Check::undecided(name, c.detail.clone()),
    }
}

fn write_report<W: std::io::Write>(w: W, criteria: &[CriterionOutcome]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["criterion", "name", "status", "measured", "reference", "detail"])?;
    for c in criteria {
        let status = match c.passed {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        csv.write_record([c.id.to_string().as_str(), c.name, status, &c.measured, &c.reference, &c.detail])?;
    }
    csv.flush()?;
    Ok(())
}

/// Long table of computed strategy statistics beside the reference averages.
fn write_strategy_comparison<W: std::io::Write>(w: W, battery: &Battery) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["strategy", "quantity", "computed", "reference"])?;
    for o in &battery.comparison {
        let reference = REFERENCE_AVERAGES
            .iter()
            .find(|(s, _)| *s == o.strategy)
            .map(|(_, v)| *v);
        let computed = [o.avg_i1, o.avg_i2, o.avg_r1, o.avg_r2];
        for (i, q) in ["avg_I1", "avg_I2", "avg_R1", "avg_R2"].into_iter().enumerate() {
            csv.write_record([
                o.strategy.as_str(),
                q,
                &fmt_f64(computed[i]),
                &reference.map(|r| fmt_f64(r[i])).unwrap_or_default(),
            ])?;
        }
        let opt = battery.optimality.iter().find(|r| r.strategy == o.strategy);
        for (q, v) in [
            ("burden", Some(o.cumulative_burden)),
            ("J", Some(o.cost)),
            ("J_zero_controls", opt.map(|r| r.j_zero)),
            ("J_half_bound", opt.map(|r| r.j_half)),
            ("iterations", Some(o.iterations as f64)),
        ] {
            csv.write_record([o.strategy.as_str(), q, &v.map(fmt_f64).unwrap_or_default(), ""])?;
        }
    }
    csv.flush()?;
    Ok(())
}

fn replicate_cmd(config: &RunConfig, out: &mut Outputs<'_>) -> Result<()> {
    let battery = run_battery(config)?;
    out.file("replicate_report.csv", |w| write_report(w, &battery.criteria))?;
    out.file("replicate_strategies.csv", |w| write_strategy_comparison(w, &battery))?;
    out.file("replicate_sweep_r0.csv", |w| {
        write_study_csv(w, &study_rows("r0", &battery.r0_cells))
    })?;
    out.file("replicate_sweep_alpha.csv", |w| {
        write_study_csv(w, &study_rows("alpha", &battery.alpha_cells))
    })?;
    out.file("replicate_sensitivity.csv", |w| {
        write_classification_csv(w, &battery.classification)
    })?;
    let s = &mut out.summary;
    s.scalar("sensitivity_agreement", battery.classification.agreement_fraction());
    s.scalar(
        "criteria_passed",
        battery.criteria.iter().filter(|c| c.passed == Some(true)).count() as f64,
    );
    s.scalar("criteria_failed", battery.failed().count() as f64);
    s.checks.extend(battery.criteria.iter().map(criterion_check));
    Ok(())
}
