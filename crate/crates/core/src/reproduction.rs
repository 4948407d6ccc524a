//! Equilibria, basic reproduction number and local stability.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{numerical_jacobian, ModelParams, StateVector, DEFAULT_JACOBIAN_STEP, DIM};
use crate::scalar::Scalar;

/// Residual below which a Newton iterate counts as a root.
pub const ROOT_TOL: f64 = 1e-10;
/// Residual below which [`stability_verdict`] accepts a state as an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Minimum `I1 + I2`, relative to `max(1, N(E0))`, for a root to count as endemic.
pub const ENDEMIC_MIN_INFECTED: f64 = 1e-6;
pub const NEWTON_MAX_ITERS: usize = 200;
pub const DEFAULT_STARTS: usize = 20;

/// Whether the young treatment rate enters the infectious period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum R0Variant {
    WithControl,
    NoControl,
}

/// Closed-form pieces of the reproduction number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct R0Breakdown<T> {
    /// Mean infectious period of young infectives.
    pub p: T,
    /// Mean infectious period of adult infectives.
    pub q: T,
    /// Discriminant `(b1 S1 p - b4 S2 q)^2 + 4 S1 S2 b2 b3 p q`.
    pub discriminant: T,
    pub r0: T,
    pub variant: R0Variant,
}

/// `E0 = (b1/(mu+m), 0, 0, b1 m / (mu (mu+m)), 0, 0)`.
pub fn disease_free_equilibrium<T: Scalar>(params: &ModelParams<T>) -> Result<StateVector<T>> {
    if !(params.mu > T::zero()) {
        return Err(Error::InvalidParam {
            name: "mu".into(),
            reason: "disease-free equilibrium needs mu > 0".into(),
        });
    }
    let young = params.b1 / (params.mu + params.m);
    let adult = params.b1 * params.m / (params.mu * (params.mu + params.m));
    let z = T::zero();
    Ok(StateVector::new(young, z, z, adult, z, z))
}

fn infectious_periods<T: Scalar>(params: &ModelParams<T>, variant: R0Variant) -> Result<(T, T)> {
    let young_exit = match variant {
        R0Variant::WithControl => params.d1 + params.mu + params.u11,
        R0Variant::NoControl => params.d1 + params.mu,
    };
    let adult_exit = params.d2 + params.mu;
    if !(young_exit > T::zero()) || !(adult_exit > T::zero()) {
        return Err(Error::Domain("zero removal rate in infectious period".into()));
    }
    Ok((T::one() / young_exit, T::one() / adult_exit))
}

/// Basic reproduction number from the closed-form spectral radius.
pub fn r0<T: Scalar>(params: &ModelParams<T>, variant: R0Variant) -> Result<R0Breakdown<T>> {
    let e0 = disease_free_equilibrium(params)?;
    let (p, q) = infectious_periods(params, variant)?;
    let young = params.beta1 * e0.s1 * p;
    let adult = params.beta4 * e0.s2 * q;
    let diff = young - adult;
    let discriminant = diff * diff + T::lit(4.0) * e0.s1 * e0.s2 * params.beta2 * params.beta3 * p * q;
    let r0 = (young + adult + discriminant.sqrt()) / T::lit(2.0);
    Ok(R0Breakdown {
        p,
        q,
        discriminant,
        r0,
        variant,
    })
}

/// Next-generation matrix `K = F V^-1` on the infected subsystem `(I1, I2)`.
pub fn next_generation_matrix<T: Scalar>(params: &ModelParams<T>, variant: R0Variant) -> Result<[[T; 2]; 2]> {
    let e0 = disease_free_equilibrium(params)?;
    let (p, q) = infectious_periods(params, variant)?;
    let f = [
        [params.beta1 * e0.s1, params.beta2 * e0.s1],
        [params.beta3 * e0.s2, params.beta4 * e0.s2],
    ];
    let v_inv = [[p, T::zero()], [T::zero(), q]];
    let mut k = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            k[i][j] = f[i][0] * v_inv[0][j] + f[i][1] * v_inv[1][j];
        }
    }
    Ok(k)
}

/// Spectral radius of the next-generation matrix, by eigendecomposition.
pub fn r0_from_matrix<T: Scalar>(params: &ModelParams<T>, variant: R0Variant) -> Result<f64> {
    Ok(linalg::spectral_radius(&next_generation_matrix(params, variant)?))
}

/// An equilibrium together with its residual and linear stability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport<T> {
    pub state: StateVector<T>,
    /// Max-abs of the vector field at `state`.
    pub residual_norm: T,
    pub eigen_real_parts: Vec<f64>,
    pub stable: bool,
}

fn residual<T: Scalar>(params: &ModelParams<T>, x: &StateVector<T>) -> T {
    params.field(x, params.baseline_controls()).max_abs()
}

/// Linearised stability of an equilibrium of the uncontrolled system.
pub fn stability_verdict<T: Scalar>(params: &ModelParams<T>, state: &StateVector<T>) -> Result<EquilibriumReport<T>> {
    let residual_norm = residual(params, state);
    if !(residual_norm < T::lit(EQUILIBRIUM_TOL)) {
        return Err(Error::NotEquilibrium {
            residual: residual_norm.to_f64_lossy(),
        });
    }
    let jac = numerical_jacobian(state, params, params.baseline_controls(), T::lit(DEFAULT_JACOBIAN_STEP))?;
    let mut eigen_real_parts: Vec<f64> = linalg::eigenvalues(&jac).into_iter().map(|(re, _)| re).collect();
    eigen_real_parts.sort_by(|a, b| b.total_cmp(a));
    let stable = eigen_real_parts.iter().all(|&re| re < 0.0);
    Ok(EquilibriumReport {
        state: *state,
        residual_norm,
        eigen_real_parts,
        stable,
    })
}

/// Multi-start points drawn log-uniformly in `[1e-3, 1e3] * b1/mu`.
pub fn random_starts<T: Scalar>(params: &ModelParams<T>, count: usize, seed: u64) -> Vec<StateVector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (params.b1 / params.mu).to_f64_lossy().max(f64::MIN_POSITIVE);
    (0..count)
        .map(|_| {
            let mut a = [T::zero(); DIM];
            for v in a.iter_mut() {
                let e: f64 = rng.random_range(-3.0..3.0);
                *v = T::lit(scale * 10f64.powf(e));
            }
            StateVector::from_array(a)
        })
        .collect()
}

/// Damped Newton iteration on `field(x) = 0` kept inside the non-negative orthant.
///
/// Returns the final iterate and whether it met [`ROOT_TOL`].
pub fn newton_root<T: Scalar>(params: &ModelParams<T>, start: &StateVector<T>) -> (StateVector<T>, bool) {
    let controls = params.baseline_controls();
    let tol = T::lit(ROOT_TOL);
    let mut x = *start;
    let mut res = residual(params, &x);
    for _ in 0..NEWTON_MAX_ITERS {
        if res < tol {
            return (x, true);
        }
        let jac = match numerical_jacobian(&x, params, controls, T::lit(DEFAULT_JACOBIAN_STEP)) {
            Ok(j) => j,
            Err(_) => break,
        };
        let f = params.field(&x, controls).to_array();
        let neg_f = f.map(|v| -v);
        let Some(dx) = linalg::solve(&jac, &neg_f) else {
            break;
        };
        let xa = x.to_array();
        let mut step = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = xa;
            for i in 0..DIM {
                trial[i] = (xa[i] + step * dx[i]).max(T::zero());
            }
            let trial = StateVector::from_array(trial);
            let trial_res = residual(params, &trial);
            if trial_res < res {
                x = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            step = step / T::lit(2.0);
        }
        if !accepted {
            break;
        }
    }
    (x, res < tol)
}

/// Searches for an endemic equilibrium from each start in turn.
///
/// Starts are solved in parallel; the root from the lowest start index wins.
pub fn endemic_equilibrium<T: Scalar>(
    params: &ModelParams<T>,
    starts: &[StateVector<T>],
) -> Option<EquilibriumReport<T>> {
    // Infected mass is measured against the disease-free population so that a
    // slow approach to E0 is not mistaken for a distinct root.
    let scale = disease_free_equilibrium(params)
        .map(|e0| e0.total().max(T::one()))
        .unwrap_or_else(|_| T::one());
    let candidates: Vec<Option<StateVector<T>>> = starts
        .par_iter()
        .map(|s| {
            let (root, ok) = newton_root(params, s);
            let endemic = ok
                && root.to_array().iter().all(|v| *v >= T::zero())
                && root.infected() > T::lit(ENDEMIC_MIN_INFECTED) * scale;
            endemic.then_some(root)
        })
        .collect();
    let (index, root) = candidates
        .into_iter()
        .enumerate()
        .find_map(|(i, c)| c.map(|r| (i, r)))?;
    debug!("endemic root found from start {index}");
    let residual_norm = residual(params, &root);
    match stability_verdict(params, &root) {
        Ok(report) => Some(report),
        Err(_) => Some(EquilibriumReport {
            state: root,
            residual_norm,
            eigen_real_parts: Vec::new(),
            stable: false,
        }),
    }
}

/// Printed closed-form expressions for the endemic equilibrium, evaluated verbatim.
///
/// Each component is `None` when its denominator vanishes. This is a
/// diagnostic; the root finder is the reference for `E1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormEndemic<T> {
    pub a: Option<T>,
    pub b: Option<T>,
    /// `(S1, I1, R1, S2, I2, R2)`.
    pub components: [Option<T>; DIM],
    pub zero_denominators: Vec<&'static str>,
    pub residual_norm: Option<T>,
}

impl<T: Scalar> ClosedFormEndemic<T> {
    pub fn state(&self) -> Option<StateVector<T>> {
        let mut a = [T::zero(); DIM];
        for (slot, c) in a.iter_mut().zip(self.components) {
            *slot = c?;
        }
        Some(StateVector::from_array(a))
    }
}

pub fn closed_form_e1_crosscheck<T: Scalar>(params: &ModelParams<T>) -> ClosedFormEndemic<T> {
    let p = params;
    let mut zero_denominators = Vec::new();
    let mut div = |name: &'static str, num: Option<T>, den: Option<T>| -> Option<T> {
        let (num, den) = (num?, den?);
        if den == T::zero() {
            zero_denominators.push(name);
            None
        } else {
            Some(num / den)
        }
    };
    let net_birth = p.b1 - p.d1 - p.mu - p.u11;
    let a = div("A", Some(net_birth), Some(p.mu + p.m));
    let b = div("B", Some(p.delta1), Some(p.mu + p.m));
    let r1 = div("R1", Some(p.u11), Some(p.mu + p.delta1 + p.m));
    let s1 = div("S1", r1.map(|r1| net_birth + p.delta1 * r1), Some(p.mu + p.m));
    // A + B R1 appears throughout the printed expressions.
    let ab = a.zip(b).zip(r1).map(|((a, b), r1)| a + b * r1);
    let i1 = div(
        "I1",
        ab.map(|ab| p.beta1 * ab + p.beta2 * ab),
        Some(p.d1 + p.mu + p.u11),
    );
    let i2 = div(
        "I2",
        ab.zip(r1).map(|(ab, r1)| p.b1 + p.delta1 * r1 - p.beta1 * ab - (p.mu + p.m) * ab),
        ab.map(|ab| p.beta2 * ab),
    );
    let r2 = div(
        "R2",
        r1.zip(i2).map(|(r1, i2)| {
            p.m * r1 + p.u12 * i2 * i2 / (T::one() + p.alpha * i2 * i2)
        }),
        Some(p.mu + p.delta2),
    );
    let s2 = div(
        "S2",
        ab.zip(r2).map(|(ab, r2)| p.m * ab + p.delta2 * r2),
        i2.map(|i2| p.beta3 + p.beta4 * i2 + p.mu),
    );
    let components = [s1, i1, r1, s2, i2, r2];
    let mut report = ClosedFormEndemic {
        a,
        b,
        components,
        zero_denominators,
        residual_norm: None,
    };
    report.residual_norm = report.state().map(|x| residual(params, &x));
    report
}
