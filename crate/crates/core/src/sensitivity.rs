//! One-at-a-time parameter sweeps over the uncontrolled system.
//!
//! A sweep integrates the model once per trial value, keeps the total
//! infected curve `I1(t) + I2(t)` of each run, and summarises the ensemble by
//! its pointwise mean and mean squared deviation. The scalar score is
//! `max_t mse(t) / (1 + mean(t)²)`; a sweep whose score exceeds the threshold
//! is called sensitive.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{rk4_forward, TimeGrid, DEFAULT_STEP};
use crate::model::{ModelParams, ParamName, StateVector};
use crate::scalar::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Curves keep every `DEFAULT_RECORD_EVERY`-th grid node (0.1 days at the default step).
pub const DEFAULT_RECORD_EVERY: usize = 100;

/// Initial state used by the reference sweeps.
pub fn default_initial_state<T: Scalar>() -> StateVector<T> {
    StateVector::new(
        T::lit(100.0),
        T::lit(5.0),
        T::lit(10.0),
        T::lit(150.0),
        T::lit(70.0),
        T::lit(30.0),
    )
}

/// Horizon of 100 days at [`DEFAULT_STEP`].
pub fn default_grid<T: Scalar>() -> TimeGrid<T> {
    TimeGrid::with_max_step(T::zero(), T::lit(100.0), T::lit(DEFAULT_STEP)).expect("valid default grid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec<T> {
    pub param: ParamName,
    pub lo: T,
    pub hi: T,
    pub step: T,
    pub base: ModelParams<T>,
    pub y0: StateVector<T>,
    pub grid: TimeGrid<T>,
    pub record_every: usize,
    pub threshold: T,
}

impl<T: Scalar> SweepSpec<T> {
    /// Sweep of `param` over `[lo, hi]` around `base` with the default state, grid and threshold.
    pub fn new(param: ParamName, lo: T, hi: T, step: T, base: ModelParams<T>) -> Self {
        Self {
            param,
            lo,
            hi,
            step,
            base,
            y0: default_initial_state(),
            grid: default_grid(),
            record_every: DEFAULT_RECORD_EVERY,
            threshold: T::lit(DEFAULT_THRESHOLD),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidParam {
            name: format!("sweep.{}", self.param),
            reason,
        };
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(invalid(format!("interval [{}, {}] is empty", self.lo, self.hi)));
        }
        if !(self.step > T::zero() && self.step.is_finite()) {
            return Err(invalid(format!("step {} must be positive", self.step)));
        }
        if self.record_every == 0 {
            return Err(invalid("record_every must be >= 1".into()));
        }
        if !(self.threshold >= T::zero()) {
            return Err(invalid(format!("threshold {} must be >= 0", self.threshold)));
        }
        self.y0.validate()
    }

    /// `lo, lo + step, ...` up to `hi`; `hi` itself is included when it lies on the lattice.
    pub fn values(&self) -> Vec<T> {
        let span = ((self.hi - self.lo) / self.step).to_f64_lossy();
        let count = (span + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = self.lo + self.step * T::from_usize_lossy(i);
                if v > self.hi { self.hi } else { v }
            })
            .collect()
    }

    fn recorded_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = (0..=self.grid.n_steps).step_by(self.record_every).collect();
        if nodes.last() != Some(&self.grid.n_steps) {
            nodes.push(self.grid.n_steps);
        }
        nodes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult<T> {
    pub param: ParamName,
    pub values: Vec<T>,
    /// Trial values dropped because they violate a parameter invariant.
    pub skipped: Vec<T>,
    pub times: Vec<T>,
    /// `curves[j][k]` is `I1 + I2` at `times[k]` for `values[j]`.
    pub curves: Vec<Vec<T>>,
    pub mean_curve: Vec<T>,
    pub mse_curve: Vec<T>,
    pub score: T,
    pub sensitive: bool,
}

/// Pointwise mean and population mean squared deviation of equally long curves.
pub fn ensemble_stats<T: Scalar>(curves: &[Vec<T>]) -> Result<(Vec<T>, Vec<T>)> {
    let first = curves
        .first()
        .ok_or_else(|| Error::Domain("ensemble needs at least one curve".into()))?;
    let len = first.len();
    if let Some((j, c)) = curves.iter().enumerate().find(|(_, c)| c.len() != len) {
        return Err(Error::Domain(format!(
            "curve {j} has {} samples, expected {len}",
            c.len()
        )));
    }
    let n = T::from_usize_lossy(curves.len());
    let mean: Vec<T> = (0..len)
        .map(|k| curves.iter().map(|c| c[k]).sum::<T>() / n)
        .collect();
    let mse = (0..len)
        .map(|k| {
            curves
                .iter()
                .map(|c| {
                    let d = c[k] - mean[k];
                    d * d
                })
                .sum::<T>()
                / n
        })
        .collect();
    Ok((mean, mse))
}

/// `max_t mse(t) / (1 + mean(t)²)`.
pub fn sensitivity_score<T: Scalar>(mean: &[T], mse: &[T]) -> T {
    mean.iter()
        .zip(mse)
        .map(|(&m, &e)| e / (T::one() + m * m))
        .fold(T::zero(), |acc, s| if s > acc { s } else { acc })
}

/// Total infected curve of the uncontrolled system for one trial parameter set.
fn infected_curve<T: Scalar>(params: &ModelParams<T>, spec: &SweepSpec<T>, nodes: &[usize]) -> Result<Vec<T>> {
    let controls = params.baseline_controls();
    let traj = rk4_forward(
        |_, x| params.field(&StateVector::from_array(*x), controls).to_array(),
        spec.y0.to_array(),
        spec.grid,
    )?;
    Ok(nodes
        .iter()
        .map(|&k| StateVector::from_array(traj.samples[k]).infected())
        .collect())
}

pub fn run_sweep<T: Scalar>(spec: &SweepSpec<T>) -> Result<SweepResult<T>> {
    spec.validate()?;
    let (mut values, mut skipped) = (Vec::new(), Vec::new());
    for v in spec.values() {
        match spec.base.with(spec.param, v).validate() {
            Ok(()) => values.push(v),
            Err(e) => {
                warn!("{} = {v} skipped: {e}", spec.param);
                skipped.push(v);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InvalidParam {
            name: format!("sweep.{}", spec.param),
            reason: "no admissible trial value".into(),
        });
    }

    let nodes = spec.recorded_nodes();
    let curves = values
        .par_iter()
        .map(|&v| infected_curve(&spec.base.with(spec.param, v), spec, &nodes))
        .collect::<Result<Vec<_>>>()?;
    let (mean_curve, mse_curve) = ensemble_stats(&curves)?;
    let score = sensitivity_score(&mean_curve, &mse_curve);
    Ok(SweepResult {
        param: spec.param,
        values,
        skipped,
        times: nodes.iter().map(|&k| spec.grid.time(k)).collect(),
        curves,
        mean_curve,
        mse_curve,
        score,
        sensitive: score > spec.threshold,
    })
}

/// One row of the reference sweep table: an interval, its step and the reference verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceSweep {
    pub param: ParamName,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub reference_sensitive: bool,
}

const fn row(param: ParamName, lo: f64, hi: f64, step: f64, reference_sensitive: bool) -> ReferenceSweep {
    ReferenceSweep {
        param,
        lo,
        hi,
        step,
        reference_sensitive,
    }
}

/// The 29 reference (parameter, interval) sweeps around the baseline preset.
pub const REFERENCE_SWEEPS: [ReferenceSweep; 29] = {
    use ParamName::*;
    [
        row(U11, 0.0, 0.5, 0.01, true),
        row(U11, 1.5, 2.0, 0.01, false),
        row(B1, 6.5, 7.192, 0.01, true),
        row(B1, 7.192, 8.0, 0.01, true),
        row(B1, 0.1, 0.5, 0.01, false),
        row(M, 0.0, 0.00182, 0.0001, false),
        row(M, 0.00182, 1.0, 0.01, false),
        row(U12, 0.0, 0.5, 0.05, false),
        row(U12, 0.5, 2.0, 0.05, false),
        row(Beta1, 0.0, 1.33, 0.01, true),
        row(Beta1, 1.33, 2.0, 0.01, false),
        row(Beta2, 0.0, 2.0, 0.01, false),
        row(Beta2, 2.0, 3.0, 0.01, false),
        row(Beta3, 0.0, 2.5, 0.01, false),
        row(Beta3, 2.5, 5.0, 0.01, false),
        row(Beta4, 0.0, 0.5, 0.01, false),
        row(Beta4, 0.5, 1.0, 0.01, false),
        row(Alpha, 0.0, 0.5, 0.01, false),
        row(Alpha, 0.5, 2.0, 0.01, false),
        row(D1, 0.0, 0.000073, 0.00001, false),
        row(D1, 0.000073, 1.0, 0.01, true),
        row(D2, 0.0, 0.0000913, 0.00001, false),
        row(D2, 0.0000913, 2.0, 0.01, false),
        row(Mu, 0.0, 0.5, 0.01, true),
        row(Mu, 0.5, 2.0, 0.01, false),
        row(Delta1, 0.0, 0.0714, 0.001, false),
        row(Delta1, 0.0714, 1.0, 0.001, false),
        row(Delta2, 0.0, 0.0714, 0.001, false),
        row(Delta2, 0.0714, 1.0, 0.001, false),
    ]
};

/// Rows whose reference verdict the acceptance check holds us to.
pub fn is_strongly_separated(row: &ReferenceSweep) -> bool {
    use ParamName::*;
    match row.param {
        U11 => row.lo == 0.0,
        Beta1 => row.lo == 0.0,
        Mu => row.lo == 0.0,
        M | Delta1 | Delta2 | Beta4 => true,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub row: ReferenceSweep,
    pub n_values: usize,
    pub score: f64,
    pub sensitive: bool,
}

impl Classification {
    pub fn agrees(&self) -> bool {
        self.sensitive == self.row.reference_sensitive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationTable {
    pub threshold: f64,
    pub rows: Vec<Classification>,
}

impl ClassificationTable {
    pub fn agreement_fraction(&self) -> f64 {
        let agree = self.rows.iter().filter(|c| c.agrees()).count();
        agree as f64 / self.rows.len().max(1) as f64
    }

    /// Strongly separated rows whose verdict differs from the reference one.
    pub fn separated_disagreements(&self) -> Vec<&Classification> {
        self.rows
            .iter()
            .filter(|c| is_strongly_separated(&c.row) && !c.agrees())
            .collect()
    }
}

/// Runs every reference sweep around `base`, one after another, each parallel inside.
pub fn run_reference_sweeps(
    base: &ModelParams<f64>,
    y0: &StateVector<f64>,
    grid: TimeGrid<f64>,
    record_every: usize,
    threshold: f64,
) -> Result<(ClassificationTable, Vec<SweepResult<f64>>)> {
    let mut rows = Vec::with_capacity(REFERENCE_SWEEPS.len());
    let mut sweeps = Vec::with_capacity(REFERENCE_SWEEPS.len());
    for r in REFERENCE_SWEEPS {
        let spec = SweepSpec {
            y0: *y0,
            grid,
            record_every,
            threshold,
            ..SweepSpec::new(r.param, r.lo, r.hi, r.step, *base)
        };
        let result = run_sweep(&spec)?;
        rows.push(Classification {
            row: r,
            n_values: result.values.len(),
            score: result.score,
            sensitive: result.sensitive,
        });
        sweeps.push(result);
    }
    Ok((ClassificationTable { threshold, rows }, sweeps))
}
