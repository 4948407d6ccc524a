//! Optimal treatment problem and its forward-backward sweep solver.
//!
//! The problem minimises
//! `J(u) = ∫ (A1 u11² + A2 u12² + I1 + I2) dt` subject to the model dynamics
//! with `u11(t)` replacing the young treatment rate and `u12(t)` the adult
//! saturated-treatment coefficient. Costates are ordered like the state,
//! `(λS1, λI1, λR1, λS2, λI2, λR2)`, and obey `λ' = -∂H/∂x`, `λ(T) = 0`.

use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{lerp, rk4_backward, rk4_forward, TimeGrid, Trajectory};
use crate::model::{holling_treatment, holling_treatment_slope, ControlPair, ModelParams, StateVector, DIM};
use crate::scalar::Scalar;

/// Quadratic weights on the two controls in the running cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights<T> {
    pub a1: T,
    pub a2: T,
}

impl<T: Scalar> CostWeights<T> {
    pub fn new(a1: T, a2: T) -> Result<Self> {
        let w = Self { a1, a2 };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a1", self.a1), ("a2", self.a2)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name: name.into(),
                    reason: format!("cost weight must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for CostWeights<T> {
    fn default() -> Self {
        Self {
            a1: T::lit(0.0001),
            a2: T::lit(0.005),
        }
    }
}

/// Upper bounds of the admissible control set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds<T> {
    pub u11_max: T,
    pub u12_max: T,
}

impl<T: Scalar> ControlBounds<T> {
    pub fn new(u11_max: T, u12_max: T) -> Result<Self> {
        let b = Self { u11_max, u12_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("u11_max", self.u11_max), ("u12_max", self.u12_max)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParam {
                    name: name.into(),
                    reason: format!("control bound must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn half(&self) -> ControlPair<T> {
        let two = T::lit(2.0);
        ControlPair::new(self.u11_max / two, self.u12_max / two)
    }
}

impl<T: Scalar> Default for ControlBounds<T> {
    fn default() -> Self {
        Self {
            u11_max: T::one(),
            u12_max: T::one(),
        }
    }
}

/// Costate vector, one entry per compartment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct AdjointVector<T>(pub [T; DIM]);

impl<T: Scalar> AdjointVector<T> {
    pub const LABELS: [&'static str; DIM] = ["lam1", "lam2", "lam3", "lam4", "lam5", "lam6"];

    pub fn zero() -> Self {
        Self([T::zero(); DIM])
    }

    pub fn s1(&self) -> T {
        self.0[0]
    }
    pub fn i1(&self) -> T {
        self.0[1]
    }
    pub fn r1(&self) -> T {
        self.0[2]
    }
    pub fn s2(&self) -> T {
        self.0[3]
    }
    pub fn i2(&self) -> T {
        self.0[4]
    }
    pub fn r2(&self) -> T {
        self.0[5]
    }

    pub fn dot(&self, v: &StateVector<T>) -> T {
        self.0.iter().zip(v.to_array()).map(|(a, b)| *a * b).sum()
    }
}

/// Which controls the sweep may use; disabled controls are held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "u11-only")]
    U11Only,
    #[serde(rename = "u12-only")]
    U12Only,
    #[serde(rename = "both")]
    Both,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::U11Only, Strategy::U12Only, Strategy::Both];

    pub fn uses_u11(self) -> bool {
        matches!(self, Strategy::U11Only | Strategy::Both)
    }

    pub fn uses_u12(self) -> bool {
        matches!(self, Strategy::U12Only | Strategy::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::U11Only => "u11-only",
            Strategy::U12Only => "u12-only",
            Strategy::Both => "both",
        }
    }

    fn mask<T: Scalar>(self, u: ControlPair<T>) -> ControlPair<T> {
        ControlPair::new(
            if self.uses_u11() { u.u11 } else { T::zero() },
            if self.uses_u12() { u.u12 } else { T::zero() },
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Strategy::None),
            "u11" | "u11-only" => Ok(Strategy::U11Only),
            "u12" | "u12-only" => Ok(Strategy::U12Only),
            "both" => Ok(Strategy::Both),
            other => Err(Error::Domain(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Control values at every node of a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSchedule<T> {
    pub grid: TimeGrid<T>,
    pub u11: Vec<T>,
    pub u12: Vec<T>,
}

impl<T: Scalar> ControlSchedule<T> {
    pub fn constant(grid: TimeGrid<T>, value: ControlPair<T>) -> Self {
        Self {
            grid,
            u11: vec![value.u11; grid.len()],
            u12: vec![value.u12; grid.len()],
        }
    }

    pub fn zero(grid: TimeGrid<T>) -> Self {
        Self::constant(grid, ControlPair::zero())
    }

    pub fn from_fn(grid: TimeGrid<T>, mut f: impl FnMut(usize, T) -> ControlPair<T>) -> Self {
        let (u11, u12) = (0..grid.len())
            .map(|k| {
                let u = f(k, grid.time(k));
                (u.u11, u.u12)
            })
            .unzip();
        Self { grid, u11, u12 }
    }

    pub fn at(&self, k: usize) -> ControlPair<T> {
        ControlPair::new(self.u11[k], self.u12[k])
    }

    /// Piecewise-linear value at `t`.
    pub fn interpolate(&self, t: T) -> ControlPair<T> {
        let (k, frac) = self.grid.locate(t);
        let [u11, u12] = lerp(&[self.u11[k], self.u12[k]], &[self.u11[k + 1], self.u12[k + 1]], frac);
        ControlPair::new(u11, u12)
    }

    /// `self + scale * direction`, node by node.
    pub fn perturbed(&self, direction: &Self, scale: T) -> Self {
        Self::from_fn(self.grid, |k, _| {
            ControlPair::new(
                self.u11[k] + scale * direction.u11[k],
                self.u12[k] + scale * direction.u12[k],
            )
        })
    }

    pub fn within(&self, bounds: &ControlBounds<T>) -> bool {
        self.u11.iter().all(|&u| u >= T::zero() && u <= bounds.u11_max)
            && self.u12.iter().all(|&u| u >= T::zero() && u <= bounds.u12_max)
    }

    pub fn check_grid(&self, grid: &TimeGrid<T>) -> Result<()> {
        if self.grid != *grid || self.u11.len() != grid.len() || self.u12.len() != grid.len() {
            return Err(Error::GridMismatch(
                "control schedule and trajectory use different grids".into(),
            ));
        }
        Ok(())
    }
}

/// Iteration controls of the forward-backward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings<T> {
    pub max_iters: usize,
    /// Threshold on `max |new - old| / (1 + |new|)` over controls and states.
    pub tol: T,
    /// Weight of the freshly characterised control in the blend with the previous iterate.
    pub relaxation: T,
}

impl<T: Scalar> SweepSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParam {
                name: "max_iters".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidParam {
                name: "tol".into(),
                reason: "must be > 0".into(),
            });
        }
        if !(self.relaxation > T::zero() && self.relaxation <= T::one()) {
            return Err(Error::InvalidParam {
                name: "relaxation".into(),
                reason: "must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }
}

impl<T: Scalar> Default for SweepSettings<T> {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: T::lit(1e-4),
            relaxation: T::lit(0.5),
        }
    }
}

/// Everything that defines one optimal-control instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlProblem<T> {
    pub params: ModelParams<T>,
    pub y0: StateVector<T>,
    pub grid: TimeGrid<T>,
    pub weights: CostWeights<T>,
    pub bounds: ControlBounds<T>,
}

impl<T: Scalar> ControlProblem<T> {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.y0.validate()?;
        self.weights.validate()?;
        self.bounds.validate()
    }
}

/// `I1 + I2 + A1 u11² + A2 u12²`.
pub fn running_cost<T: Scalar>(state: &StateVector<T>, controls: ControlPair<T>, weights: &CostWeights<T>) -> T {
    state.i1 + state.i2 + weights.a1 * controls.u11 * controls.u11 + weights.a2 * controls.u12 * controls.u12
}

/// Composite trapezoidal rule over a sampled integrand.
pub fn trapezoid<T: Scalar>(values: &[T], h: T) -> T {
    match values {
        [] | [_] => T::zero(),
        [first, inner @ .., last] => {
            let interior: T = inner.iter().copied().sum();
            h * ((*first + *last) / T::lit(2.0) + interior)
        }
    }
}

/// Objective value by trapezoidal quadrature on the shared grid.
pub fn cost<T: Scalar>(
    state_traj: &Trajectory<T, DIM>,
    controls: &ControlSchedule<T>,
    weights: &CostWeights<T>,
) -> Result<T> {
    controls.check_grid(&state_traj.grid)?;
    if state_traj.samples.len() != state_traj.grid.len() {
        return Err(Error::GridMismatch("trajectory length differs from its grid".into()));
    }
    let integrand: Vec<T> = state_traj
        .samples
        .iter()
        .enumerate()
        .map(|(k, x)| running_cost(&StateVector::from_array(*x), controls.at(k), weights))
        .collect();
    Ok(trapezoid(&integrand, state_traj.grid.step()))
}

/// `H = L + λ · f(x, u)`.
pub fn hamiltonian<T: Scalar>(
    state: &StateVector<T>,
    lam: &AdjointVector<T>,
    controls: ControlPair<T>,
    params: &ModelParams<T>,
    weights: &CostWeights<T>,
) -> T {
    running_cost(state, controls, weights) + lam.dot(&params.field(state, controls))
}

/// Costate dynamics `λ' = -∂H/∂x` from the analytic derivatives of `H`.
pub fn adjoint_rhs<T: Scalar>(
    state: &StateVector<T>,
    lam: &AdjointVector<T>,
    controls: ControlPair<T>,
    params: &ModelParams<T>,
) -> AdjointVector<T> {
    let p = params;
    let x = state;
    let (l_s1, l_i1, l_r1, l_s2, l_i2, l_r2) = (lam.s1(), lam.i1(), lam.r1(), lam.s2(), lam.i2(), lam.r2());
    let young_force = p.beta1 * x.i1 + p.beta2 * x.i2;
    let adult_force = p.beta3 * x.i1 + p.beta4 * x.i2;
    let slope = holling_treatment_slope(x.i2, controls.u12, p.alpha);

    let dh_s1 = -l_s1 * (young_force + p.mu + p.m) + l_i1 * young_force + l_s2 * p.m;
    let dh_i1 = T::one() - l_s1 * p.beta1 * x.s1 + l_i1 * (p.beta1 * x.s1 - p.d1 - p.mu - controls.u11)
        + l_r1 * controls.u11
        - l_s2 * p.beta3 * x.s2
        + l_i2 * p.beta3 * x.s2;
    let dh_r1 = l_s1 * p.delta1 - l_r1 * (p.mu + p.delta1 + p.m) + l_r2 * p.m;
    let dh_s2 = -l_s2 * (adult_force + p.mu) + l_i2 * adult_force;
    let dh_i2 = T::one() - l_s1 * p.beta2 * x.s1 + l_i1 * p.beta2 * x.s1 - l_s2 * p.beta4 * x.s2
        + l_i2 * (p.beta4 * x.s2 - p.d2 - p.mu - slope)
        + l_r2 * slope;
    let dh_r2 = l_s2 * p.delta2 - l_r2 * (p.mu + p.delta2);

    AdjointVector([-dh_s1, -dh_i1, -dh_r1, -dh_s2, -dh_i2, -dh_r2])
}

/// `(∂H/∂u11, ∂H/∂u12)`.
pub fn control_gradient<T: Scalar>(
    state: &StateVector<T>,
    lam: &AdjointVector<T>,
    controls: ControlPair<T>,
    params: &ModelParams<T>,
    weights: &CostWeights<T>,
) -> ControlPair<T> {
    let two = T::lit(2.0);
    let saturation = holling_treatment(state.i2, T::one(), params.alpha);
    ControlPair::new(
        two * weights.a1 * controls.u11 - (lam.i1() - lam.r1()) * state.i1,
        two * weights.a2 * controls.u12 - (lam.i2() - lam.r2()) * saturation,
    )
}

/// Minimiser of `H` over the admissible box, node-wise.
pub fn control_update<T: Scalar>(
    state: &StateVector<T>,
    lam: &AdjointVector<T>,
    weights: &CostWeights<T>,
    bounds: &ControlBounds<T>,
    alpha: T,
) -> ControlPair<T> {
    let two = T::lit(2.0);
    let raw11 = (lam.i1() - lam.r1()) * state.i1 / (two * weights.a1);
    let i2_sq = state.i2 * state.i2;
    let raw12 = (lam.i2() - lam.r2()) * i2_sq / (two * weights.a2 * (T::one() + alpha * i2_sq));
    ControlPair::new(
        raw11.max(T::zero()).min(bounds.u11_max),
        raw12.max(T::zero()).min(bounds.u12_max),
    )
}

/// State trajectory under a time-varying control schedule.
pub fn simulate<T: Scalar>(
    params: &ModelParams<T>,
    y0: &StateVector<T>,
    schedule: &ControlSchedule<T>,
) -> Result<Trajectory<T, DIM>> {
    rk4_forward(
        |t, x| {
            params
                .field(&StateVector::from_array(*x), schedule.interpolate(t))
                .to_array()
        },
        y0.to_array(),
        schedule.grid,
    )
}

/// Costate trajectory integrated backward from `λ(T) = 0`.
pub fn solve_adjoint<T: Scalar>(
    params: &ModelParams<T>,
    states: &Trajectory<T, DIM>,
    schedule: &ControlSchedule<T>,
) -> Result<Trajectory<T, DIM>> {
    schedule.check_grid(&states.grid)?;
    rk4_backward(
        |t, lam| {
            let x = StateVector::from_array(states.interpolate(t));
            adjoint_rhs(&x, &AdjointVector(*lam), schedule.interpolate(t), params).0
        },
        [T::zero(); DIM],
        states.grid,
    )
}

/// Converged (or best) iterate of the forward-backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome<T> {
    pub strategy: Strategy,
    pub controls: ControlSchedule<T>,
    pub state: Trajectory<T, DIM>,
    pub adjoint: Trajectory<T, DIM>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
    /// Relative change measured at the last iteration.
    pub final_change: T,
}

fn relative_change<T: Scalar>(new: &[T], old: &[T]) -> T {
    new.iter()
        .zip(old)
        .map(|(n, o)| (*n - *o).abs() / (T::one() + n.abs()))
        .fold(T::zero(), T::max)
}

fn trajectory_change<T: Scalar>(new: &Trajectory<T, DIM>, old: &Trajectory<T, DIM>) -> T {
    new.samples
        .iter()
        .zip(&old.samples)
        .map(|(n, o)| relative_change(n, o))
        .fold(T::zero(), T::max)
}

/// Forward-backward sweep starting from identically zero controls.
pub fn forward_backward_sweep<T: Scalar>(
    problem: &ControlProblem<T>,
    strategy: Strategy,
    settings: &SweepSettings<T>,
) -> Result<SweepOutcome<T>> {
    forward_backward_sweep_from(problem, strategy, settings, ControlSchedule::zero(problem.grid))
}

/// Forward-backward sweep from a given initial control guess.
///
/// Each iteration integrates the state forward, the costate backward, applies
/// the projected control characterisation at every node and blends it with
/// the previous controls. Disabled controls stay at zero throughout.
pub fn forward_backward_sweep_from<T: Scalar>(
    problem: &ControlProblem<T>,
    strategy: Strategy,
    settings: &SweepSettings<T>,
    initial: ControlSchedule<T>,
) -> Result<SweepOutcome<T>> {
    problem.validate()?;
    settings.validate()?;
    initial.check_grid(&problem.grid)?;
    let ControlProblem {
        params,
        y0,
        grid,
        weights,
        bounds,
    } = problem;

    let project = |u: ControlPair<T>| {
        let u = strategy.mask(u);
        ControlPair::new(
            u.u11.max(T::zero()).min(bounds.u11_max),
            u.u12.max(T::zero()).min(bounds.u12_max),
        )
    };
    let mut controls = ControlSchedule::from_fn(*grid, |k, _| project(initial.at(k)));
    let mut state = simulate(params, y0, &controls)?;
    let mut best = (cost(&state, &controls, weights)?, controls.clone(), state.clone());
    let mut change = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    let relax = settings.relaxation;

    while iterations < settings.max_iters {
        iterations += 1;
        let adjoint = solve_adjoint(params, &state, &controls)?;
        let updated = ControlSchedule::from_fn(*grid, |k, _| {
            let x = StateVector::from_array(state.samples[k]);
            let target = project(control_update(&x, &AdjointVector(adjoint.samples[k]), weights, bounds, params.alpha));
            let old = controls.at(k);
            ControlPair::new(
                relax * target.u11 + (T::one() - relax) * old.u11,
                relax * target.u12 + (T::one() - relax) * old.u12,
            )
        });
        let next_state = simulate(params, y0, &updated)?;
        change = relative_change(&updated.u11, &controls.u11)
            .max(relative_change(&updated.u12, &controls.u12))
            .max(trajectory_change(&next_state, &state));
        controls = updated;
        state = next_state;

        let j = cost(&state, &controls, weights)?;
        if j < best.0 {
            best = (j, controls.clone(), state.clone());
        }
        if change < settings.tol {
            converged = true;
            break;
        }
    }

    if converged {
        debug!("{strategy}: converged after {iterations} iterations");
    } else {
        warn!("{strategy}: no convergence after {iterations} iterations (change {change})");
        (_, controls, state) = best;
    }
    let adjoint = solve_adjoint(params, &state, &controls)?;
    let j = cost(&state, &controls, weights)?;
    Ok(SweepOutcome {
        strategy,
        controls,
        state,
        adjoint,
        cost: j,
        iterations,
        converged,
        final_change: change,
    })
}

/// Adjoint directional derivative against a central difference of `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck<T> {
    /// `∫ ∂H/∂u · δu dt` along the costate of `controls`.
    pub adjoint_derivative: T,
    /// `(J(u + eps δu) - J(u - eps δu)) / (2 eps)`.
    pub finite_difference: T,
    pub relative_error: T,
}

/// Directional derivative of `J` at `controls` along `direction` via the costate.
pub fn directional_derivative<T: Scalar>(
    problem: &ControlProblem<T>,
    controls: &ControlSchedule<T>,
    direction: &ControlSchedule<T>,
) -> Result<T> {
    controls.check_grid(&problem.grid)?;
    direction.check_grid(&problem.grid)?;
    let state = simulate(&problem.params, &problem.y0, controls)?;
    let adjoint = solve_adjoint(&problem.params, &state, controls)?;
    let integrand: Vec<T> = (0..problem.grid.len())
        .map(|k| {
            let g = control_gradient(
                &StateVector::from_array(state.samples[k]),
                &AdjointVector(adjoint.samples[k]),
                controls.at(k),
                &problem.params,
                &problem.weights,
            );
            let d = direction.at(k);
            g.u11 * d.u11 + g.u12 * d.u12
        })
        .collect();
    Ok(trapezoid(&integrand, problem.grid.step()))
}

pub fn gradient_check<T: Scalar>(
    problem: &ControlProblem<T>,
    controls: &ControlSchedule<T>,
    direction: &ControlSchedule<T>,
    eps: T,
) -> Result<GradientCheck<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Domain("gradient check step must be > 0".into()));
    }
    let adjoint_derivative = directional_derivative(problem, controls, direction)?;
    let objective = |u: &ControlSchedule<T>| -> Result<T> {
        let s = simulate(&problem.params, &problem.y0, u)?;
        cost(&s, u, &problem.weights)
    };
    let plus = objective(&controls.perturbed(direction, eps))?;
    let minus = objective(&controls.perturbed(direction, -eps))?;
    let finite_difference = (plus - minus) / (T::lit(2.0) * eps);
    let scale = adjoint_derivative.abs().max(finite_difference.abs());
    let relative_error = if scale == T::zero() {
        T::zero()
    } else {
        (adjoint_derivative - finite_difference).abs() / scale
    };
    Ok(GradientCheck {
        adjoint_derivative,
        finite_difference,
        relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamName;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig, Strategy as PropStrategy};
    use super::Strategy;

    fn table2_problem(t_end: f64, n_steps: usize) -> ControlProblem<f64> {
        ControlProblem {
            params: ModelParams::table2(),
            y0: StateVector::new(100.0, 10.0, 5.0, 100.0, 10.0, 5.0),
            grid: TimeGrid::new(0.0, t_end, n_steps).unwrap(),
            weights: CostWeights::default(),
            bounds: ControlBounds::default(),
        }
    }

    #[test]
    fn cost_of_empty_epidemic_is_zero() {
        let grid = TimeGrid::new(0.0, 10.0, 100).unwrap();
        let traj = Trajectory::constant(grid, [50.0, 0.0, 3.0, 20.0, 0.0, 1.0]);
        let j = cost(&traj, &ControlSchedule::zero(grid), &CostWeights::default()).unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn cost_of_constant_infection() {
        let grid = TimeGrid::<f64>::new(2.0, 12.0, 37).unwrap();
        let traj = Trajectory::constant(grid, [0.0, 1.25, 0.0, 0.0, 2.0, 0.0]);
        let j = cost(&traj, &ControlSchedule::zero(grid), &CostWeights::default()).unwrap();
        assert!((j - 3.25 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_of_square() {
        let n = 999;
        let h = 1.0 / n as f64;
        let values: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powi(2)).collect();
        assert!((trapezoid(&values, h) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn cost_rejects_mismatched_grid() {
        let grid = TimeGrid::new(0.0, 10.0, 100).unwrap();
        let other = TimeGrid::new(0.0, 10.0, 50).unwrap();
        let traj = Trajectory::constant(grid, [0.0; 6]);
        assert!(matches!(
            cost(&traj, &ControlSchedule::zero(other), &CostWeights::default()),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn hamiltonian_special_cases() {
        let p = ModelParams::<f64>::table2();
        let w = CostWeights::default();
        let x = StateVector::new(30.0, 4.0, 2.0, 10.0, 6.0, 1.0);
        assert_eq!(hamiltonian(&x, &AdjointVector::zero(), ControlPair::zero(), &p, &w), 10.0);
        let lam = AdjointVector([0.7, -1.0, 2.0, 0.3, 5.0, -2.0]);
        let h = hamiltonian(&StateVector::zero(), &lam, ControlPair::zero(), &p, &w);
        assert!((h - 0.7 * p.b1).abs() < 1e-12);
    }

    #[test]
    fn adjoint_without_coupling() {
        let p = ModelParams::<f64>::table2();
        let x = StateVector::new(30.0, 0.0, 2.0, 10.0, 0.0, 1.0);
        let d = adjoint_rhs(&x, &AdjointVector::zero(), ControlPair::new(0.3, 0.2), &p);
        assert_eq!(d.0, [0.0, -1.0, 0.0, 0.0, -1.0, 0.0]);
    }

    /// The printed adjoint line for the adult infectives, relabelled to the
    /// crate's costate order. It carries no running-cost term and uses the
    /// undifferentiated Holling denominator, which agrees with the true
    /// derivative only when alpha = 0.
    fn printed_adult_infective_adjoint(x: &StateVector<f64>, lam: &AdjointVector<f64>, u12: f64, p: &ModelParams<f64>) -> f64 {
        let h = 2.0 * u12 * x.i2 / (1.0 + p.alpha * x.i2 * x.i2);
        lam.s1() * p.beta2 * x.s1 + lam.s2() * p.beta4 * x.s2 - lam.i1() * p.beta2 * x.s1
            - lam.i2() * (p.beta4 * x.s2 - p.d2 - p.mu - h)
            - lam.r2() * h
    }

    #[test]
    fn printed_adjoint_line_agrees_at_zero_saturation() {
        let p = ModelParams::<f64>::table2().with(ParamName::Alpha, 0.0);
        let x = StateVector::new(40.0, 3.0, 2.0, 25.0, 7.0, 4.0);
        let lam = AdjointVector([0.4, 1.3, -0.2, 0.8, 2.1, 0.5]);
        let ours = adjoint_rhs(&x, &lam, ControlPair::new(0.2, 0.35), &p).i2();
        let printed = printed_adult_infective_adjoint(&x, &lam, 0.35, &p);
        // -1 is the running-cost derivative absent from the printed line
        assert!((ours - (printed - 1.0)).abs() < 1e-12, "{ours} vs {printed}");

        let p = p.with(ParamName::Alpha, 0.4);
        let ours = adjoint_rhs(&x, &lam, ControlPair::new(0.2, 0.35), &p).i2();
        let printed = printed_adult_infective_adjoint(&x, &lam, 0.35, &p);
        assert!((ours - (printed - 1.0)).abs() > 1e-3);
    }

    #[test]
    fn update_examples() {
        let w = CostWeights::new(1e-4, 0.005).unwrap();
        let b = ControlBounds::new(1.0, 1.0).unwrap();
        let x = StateVector::new(10.0, 5.0, 1.0, 10.0, 10.0, 1.0);
        let lam = AdjointVector([0.0, 0.3, 0.3, 0.0, 0.0, 0.0]);
        assert_eq!(control_update(&x, &lam, &w, &b, 0.4).u11, 0.0);

        let lam = AdjointVector([0.0, 0.0, 0.0, 0.0, 0.02, 0.01]);
        let raw: f64 = 0.01 * 100.0 / (2.0 * 0.005 * 41.0);
        assert!((raw - 2.4390).abs() < 1e-4);
        let big = ControlBounds::new(1.0, 10.0).unwrap();
        assert!((control_update(&x, &lam, &w, &big, 0.4).u12 - raw).abs() < 1e-12);
        assert_eq!(control_update(&x, &lam, &w, &b, 0.4).u12, 1.0);

        let lam = AdjointVector([0.0, 0.1, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(control_update(&x, &lam, &w, &b, 0.4).u11, 0.0);
    }

    #[test]
    fn strategy_parsing() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("u11".parse::<Strategy>().unwrap(), Strategy::U11Only);
        assert!("u13".parse::<Strategy>().is_err());
    }

    #[test]
    fn no_controls_is_plain_integration() {
        let problem = table2_problem(10.0, 10_000);
        let out = forward_backward_sweep(&problem, Strategy::None, &SweepSettings::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert!(out.controls.u11.iter().chain(&out.controls.u12).all(|&u| u == 0.0));
        let plain = simulate(&problem.params, &problem.y0, &ControlSchedule::zero(problem.grid)).unwrap();
        assert_eq!(plain, out.state);
        assert_eq!(*out.adjoint.last(), [0.0; 6]);
    }

    #[test]
    fn vanishing_bounds_reproduce_uncontrolled_cost() {
        let mut problem = table2_problem(10.0, 10_000);
        problem.bounds = ControlBounds::new(1e-300, 1e-300).unwrap();
        let none = forward_backward_sweep(&problem, Strategy::None, &SweepSettings::default()).unwrap();
        let both = forward_backward_sweep(&problem, Strategy::Both, &SweepSettings::default()).unwrap();
        assert!((both.cost - none.cost).abs() <= 1e-6 * none.cost);
    }

    #[test]
    fn optimised_controls_beat_no_treatment() {
        let problem = table2_problem(10.0, 10_000);
        let settings = SweepSettings::default();
        let none = forward_backward_sweep(&problem, Strategy::None, &settings).unwrap();
        let both = forward_backward_sweep(&problem, Strategy::Both, &settings).unwrap();
        assert!(both.converged, "change {}", both.final_change);
        assert!(both.cost < none.cost);
        assert!(both.controls.within(&problem.bounds));
    }

    #[test]
    fn sweep_is_deterministic() {
        let problem = table2_problem(5.0, 5_000);
        let a = forward_backward_sweep(&problem, Strategy::Both, &SweepSettings::default()).unwrap();
        let b = forward_backward_sweep(&problem, Strategy::Both, &SweepSettings::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_settings_rejected() {
        let problem = table2_problem(1.0, 100);
        for s in [
            SweepSettings { max_iters: 0, ..SweepSettings::default() },
            SweepSettings { tol: 0.0, ..SweepSettings::default() },
            SweepSettings { relaxation: 1.5, ..SweepSettings::default() },
            SweepSettings { relaxation: 0.0, ..SweepSettings::default() },
        ] {
            assert!(forward_backward_sweep(&problem, Strategy::Both, &s).is_err());
        }
    }

    #[test]
    fn zero_direction_gives_zero_derivative() {
        let problem = table2_problem(5.0, 5_000);
        let u = ControlSchedule::constant(problem.grid, ControlPair::new(0.3, 0.4));
        let g = gradient_check(&problem, &u, &ControlSchedule::zero(problem.grid), 1e-4).unwrap();
        assert_eq!(g.adjoint_derivative, 0.0);
        assert_eq!(g.finite_difference, 0.0);
        assert_eq!(g.relative_error, 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let problem = table2_problem(20.0, 20_000);
        let u = ControlSchedule::from_fn(problem.grid, |_, t| {
            ControlPair::new(0.4 + 0.2 * (t / 13.0).sin(), 0.5 + 0.3 * (t / 29.0).cos())
        });
        let d = ControlSchedule::from_fn(problem.grid, |_, t| {
            ControlPair::new((t / 7.0).cos(), 1.0 - t / 100.0)
        });
        let g = gradient_check(&problem, &u, &d, 1e-4).unwrap();
        assert!(g.relative_error < 1e-3, "{g:?}");
    }

    fn arb_point() -> impl PropStrategy<Value = (StateVector<f64>, AdjointVector<f64>, ControlPair<f64>, f64)> {
        (
            proptest::array::uniform6(0.1..100.0f64),
            proptest::array::uniform6(-5.0..5.0f64),
            proptest::array::uniform2(0.0..1.0f64),
            0.0..2.0f64,
        )
            .prop_map(|(x, l, u, alpha)| {
                (StateVector::from_array(x), AdjointVector(l), ControlPair::new(u[0], u[1]), alpha)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn adjoint_is_negative_state_gradient((x, lam, u, alpha) in arb_point()) {
            let p = ModelParams::<f64>::table2().with(ParamName::Alpha, alpha);
            let w = CostWeights::default();
            let d = adjoint_rhs(&x, &lam, u, &p);
            for i in 0..DIM {
                let h = 1e-4 * x.to_array()[i].abs().max(1.0);
                let mut plus = x.to_array();
                let mut minus = x.to_array();
                plus[i] += h;
                minus[i] -= h;
                let fd = -(hamiltonian(&StateVector::from_array(plus), &lam, u, &p, &w)
                    - hamiltonian(&StateVector::from_array(minus), &lam, u, &p, &w))
                    / (2.0 * h);
                // H reaches 1e5 here, so cancellation limits the absolute accuracy of fd.
                let scale = fd.abs().max(d.0[i].abs()).max(1.0);
                prop_assert!((fd - d.0[i]).abs() <= 1e-6 * scale, "component {}: {} vs {}", i, d.0[i], fd);
            }
        }

        #[test]
        fn hamiltonian_is_running_cost_plus_costate_flux((x, lam, u, _a) in arb_point()) {
            let p = ModelParams::<f64>::table2();
            let w = CostWeights::default();
            let f = crate::model::rhs(&x, &p, u).unwrap();
            let expected = x.i1 + x.i2 + w.a1 * u.u11 * u.u11 + w.a2 * u.u12 * u.u12
                + lam.0.iter().zip(f.to_array()).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!((hamiltonian(&x, &lam, u, &p, &w) - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }

        #[test]
        fn update_stays_in_box((x, lam, _u, alpha) in arb_point(), scale in 0.0..100.0f64) {
            let lam = AdjointVector(lam.0.map(|v| v * scale));
            let b = ControlBounds::new(0.7, 1.3).unwrap();
            let u = control_update(&x, &lam, &CostWeights::default(), &b, alpha);
            prop_assert!(u.u11 >= 0.0 && u.u11 <= 0.7);
            prop_assert!(u.u12 >= 0.0 && u.u12 <= 1.3);
        }
    }
}
