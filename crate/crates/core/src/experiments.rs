//! Scripted studies built on the forward-backward sweep: strategy
//! comparison, burden against the basic reproduction number, and burden
//! against the saturation constant.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{forward_backward_sweep, trapezoid, ControlProblem, Strategy, SweepOutcome, SweepSettings};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::{ModelParams, DIM};
use crate::reproduction::{r0, R0Variant};
use crate::scalar::Scalar;

/// Tolerance on the no-control `r0` reached by [`scale_betas_to_r0`].
pub const R0_MATCH_TOL: f64 = 1e-8;

const I1: usize = 1;
const R1: usize = 2;
const I2: usize = 4;
const R2: usize = 5;

/// Arithmetic mean of one compartment over all grid nodes, endpoints included.
pub fn time_average<T: Scalar>(traj: &Trajectory<T, DIM>, component: usize) -> T {
    let sum: T = traj.samples.iter().map(|s| s[component]).sum();
    sum / T::from_usize_lossy(traj.samples.len())
}

/// Trapezoidal `∫ (I1 + I2) dt` over the trajectory's grid.
pub fn cumulative_burden<T: Scalar>(traj: &Trajectory<T, DIM>) -> T {
    let v: Vec<T> = traj.samples.iter().map(|s| s[I1] + s[I2]).collect();
    trapezoid(&v, traj.grid.step())
}

fn component_burden<T: Scalar>(traj: &Trajectory<T, DIM>, component: usize) -> T {
    let v: Vec<T> = traj.samples.iter().map(|s| s[component]).collect();
    trapezoid(&v, traj.grid.step())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyOutcome<T> {
    pub strategy: Strategy,
    pub avg_i1: T,
    pub avg_i2: T,
    pub avg_r1: T,
    pub avg_r2: T,
    pub burden_i1: T,
    pub burden_i2: T,
    pub cumulative_burden: T,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> StrategyOutcome<T> {
    pub fn from_sweep(sweep: &SweepOutcome<T>) -> Self {
        let s = &sweep.state;
        Self {
            strategy: sweep.strategy,
            avg_i1: time_average(s, I1),
            avg_i2: time_average(s, I2),
            avg_r1: time_average(s, R1),
            avg_r2: time_average(s, R2),
            burden_i1: component_burden(s, I1),
            burden_i2: component_burden(s, I2),
            cumulative_burden: cumulative_burden(s),
            cost: sweep.cost,
            iterations: sweep.iterations,
            converged: sweep.converged,
        }
    }
}

/// Summary plus the full sweep it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun<T> {
    pub outcome: StrategyOutcome<T>,
    pub sweep: SweepOutcome<T>,
}

/// Runs every strategy on the same problem, in [`Strategy::ALL`] order.
pub fn strategy_comparison<T: Scalar>(problem: &ControlProblem<T>, settings: &SweepSettings<T>) -> Result<Vec<StrategyRun<T>>> {
    Strategy::ALL
        .par_iter()
        .map(|&s| {
            let sweep = forward_backward_sweep(problem, s, settings)?;
            Ok(StrategyRun {
                outcome: StrategyOutcome::from_sweep(&sweep),
                sweep,
            })
        })
        .collect()
}

/// Reference per-strategy averages of the comparison scenario, in
/// [`Strategy::ALL`] order: `(avg_I1, avg_I2, avg_R1, avg_R2)`.
pub const REFERENCE_AVERAGES: [(Strategy, [f64; 4]); 4] = [
    (Strategy::None, [31.9349, 32.6219, 4.9834, 4.9833]),
    (Strategy::U11Only, [15.2773, 30.1420, 4.9834, 20.4898]),
    (Strategy::U12Only, [22.9808, 0.7185, 34.9995, 4.9833]),
    (Strategy::Both, [15.1129, 24.5626, 10.4040, 19.9415]),
];

/// Whether `key` sorts the outcomes into exactly `order`, strictly increasing.
pub fn ranks_as<T: Scalar>(outcomes: &[StrategyOutcome<T>], order: &[Strategy], key: impl Fn(&StrategyOutcome<T>) -> T) -> bool {
    let values: Option<Vec<T>> = order
        .iter()
        .map(|s| outcomes.iter().find(|o| o.strategy == *s).map(&key))
        .collect();
    match values {
        Some(v) => v.len() == order.len() && v.windows(2).all(|w| w[0] < w[1]),
        None => false,
    }
}

/// Multiplies all four transmission rates by `k`.
pub fn scale_betas<T: Scalar>(params: &ModelParams<T>, k: T) -> ModelParams<T> {
    ModelParams {
        beta1: params.beta1 * k,
        beta2: params.beta2 * k,
        beta3: params.beta3 * k,
        beta4: params.beta4 * k,
        ..*params
    }
}

/// Finds the common factor `k` on the transmission rates that makes the
/// no-control reproduction number equal `target`, and returns the scaled set.
pub fn scale_betas_to_r0<T: Scalar>(params: &ModelParams<T>, target: T) -> Result<ModelParams<T>> {
    if !(target > T::zero() && target.is_finite()) {
        return Err(Error::Unreachable(format!("target r0 {target} must be positive")));
    }
    let r0_at = |k: T| r0(&scale_betas(params, k), R0Variant::NoControl).map(|b| b.r0);
    let base = r0_at(T::one())?;
    if !(base > T::zero()) {
        return Err(Error::Unreachable(format!(
            "baseline r0 is {base}; scaling the transmission rates cannot reach {target}"
        )));
    }
    let tol = T::lit(R0_MATCH_TOL) * target.max(T::one());
    // Secant iteration from the proportional guess and the identity.
    let (mut k0, mut f0) = (T::one(), base - target);
    let mut k1 = target / base;
    let mut f1 = r0_at(k1)? - target;
    for _ in 0..100 {
        if f1.abs() <= tol {
            return Ok(scale_betas(params, k1));
        }
        let slope = (f1 - f0) / (k1 - k0);
        if !(slope > T::zero()) {
            break;
        }
        let next = (k1 - f1 / slope).max(k1 * T::lit(0.5));
        (k0, f0) = (k1, f1);
        k1 = next;
        f1 = r0_at(k1)? - target;
    }
    Err(Error::Unreachable(format!("no beta scale reaches r0 = {target}")))
}

/// `1.1, 1.2, ..., 7.0`.
pub fn default_r0_grid() -> Vec<f64> {
    (11..=70).map(|i| i as f64 / 10.0).collect()
}

pub const CRITERION_R0_GRID: [f64; 5] = [1.2, 1.4, 2.0, 3.0, 5.0];
pub const DEFAULT_ALPHA_GRID: [f64; 4] = [0.0, 0.4, 1.0, 2.0];

/// One cell of an `(r0, α, strategy)` study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyCell<T> {
    pub r0_target: T,
    pub alpha: T,
    pub outcome: StrategyOutcome<T>,
}

fn run_cells<T: Scalar>(
    problem: &ControlProblem<T>,
    settings: &SweepSettings<T>,
    cells: Vec<(T, T, Strategy)>,
) -> Result<Vec<StudyCell<T>>> {
    cells
        .into_par_iter()
        .map(|(r0_target, alpha, strategy)| {
            let params = ModelParams {
                alpha,
                ..scale_betas_to_r0(&problem.params, r0_target)?
            };
            let p = ControlProblem { params, ..problem.clone() };
            let sweep = forward_backward_sweep(&p, strategy, settings)?;
            Ok(StudyCell {
                r0_target,
                alpha,
                outcome: StrategyOutcome::from_sweep(&sweep),
            })
        })
        .collect()
}

/// Burden under each strategy as the transmission rates are rescaled to hit
/// each target `r0`. Cells are ordered by target, then strategy.
pub fn r0_sweep<T: Scalar>(
    problem: &ControlProblem<T>,
    r0_values: &[T],
    strategies: &[Strategy],
    settings: &SweepSettings<T>,
) -> Result<Vec<StudyCell<T>>> {
    let alpha = problem.params.alpha;
    let cells = r0_values
        .iter()
        .flat_map(|&r| strategies.iter().map(move |&s| (r, alpha, s)))
        .collect();
    run_cells(problem, settings, cells)
}

/// Burden of one strategy over an `(α, r0)` grid. Cells are ordered by α, then target.
pub fn alpha_sweep<T: Scalar>(
    problem: &ControlProblem<T>,
    alpha_values: &[T],
    strategy: Strategy,
    r0_values: &[T],
    settings: &SweepSettings<T>,
) -> Result<Vec<StudyCell<T>>> {
    if let Some(a) = alpha_values.iter().find(|a| !(**a >= T::zero())) {
        return Err(Error::InvalidParam {
            name: "alpha".into(),
            reason: format!("{a} must be >= 0"),
        });
    }
    let cells = alpha_values
        .iter()
        .flat_map(|&a| r0_values.iter().map(move |&r| (r, a, strategy)))
        .collect();
    run_cells(problem, settings, cells)
}

/// Burden series along one axis for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BurdenCurve<T> {
    pub strategy: Strategy,
    pub x_values: Vec<T>,
    pub i1: Vec<T>,
    pub i2: Vec<T>,
    pub total: Vec<T>,
}

/// Groups cells of `strategy` into a curve over `x`, keeping cell order.
pub fn burden_curve<T: Scalar>(cells: &[StudyCell<T>], strategy: Strategy, x: impl Fn(&StudyCell<T>) -> T) -> BurdenCurve<T> {
    let picked: Vec<&StudyCell<T>> = cells.iter().filter(|c| c.outcome.strategy == strategy).collect();
    BurdenCurve {
        strategy,
        x_values: picked.iter().map(|c| x(c)).collect(),
        i1: picked.iter().map(|c| c.outcome.burden_i1).collect(),
        i2: picked.iter().map(|c| c.outcome.burden_i2).collect(),
        total: picked.iter().map(|c| c.outcome.cumulative_burden).collect(),
    }
}
