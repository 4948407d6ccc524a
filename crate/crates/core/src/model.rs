//! Two-age-group SIRS model with saturated (Holling type III) adult treatment.
//!
//! Compartments are ordered `(S1, I1, R1, S2, I2, R2)` everywhere in the crate:
//! young susceptible, infected and recovered followed by the adult ones.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::scalar::Scalar;

/// Number of compartments in the state vector.
pub const DIM: usize = 6;

/// Base step of the central-difference Jacobian; component `i` uses
/// `h * max(1, |x_i|)`.
pub const DEFAULT_JACOBIAN_STEP: f64 = 1e-6;

/// Absolute tolerance used by [`check_feasible`] when none is supplied.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Rate constants of the model.
///
/// `u11` and `u12` are the baseline treatment rates; when the treatment is
/// optimised they are replaced by time-varying controls (see [`ControlPair`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    /// Constant recruitment of young susceptibles (persons/day).
    pub b1: T,
    /// Loss of immunity, young (1/day).
    pub delta1: T,
    /// Loss of immunity, adults (1/day).
    pub delta2: T,
    /// Young infected by young.
    pub beta1: T,
    /// Young infected by adults.
    pub beta2: T,
    /// Adults infected by young.
    pub beta3: T,
    /// Adults infected by adults.
    pub beta4: T,
    /// Natural mortality (1/day).
    pub mu: T,
    /// Disease-induced mortality, young.
    pub d1: T,
    /// Disease-induced mortality, adults.
    pub d2: T,
    /// Treatment/recovery rate of infected young.
    pub u11: T,
    /// Saturated treatment coefficient for infected adults.
    pub u12: T,
    /// Treatment saturation constant (1/person^2).
    pub alpha: T,
    /// Maturation rate young -> adult.
    pub m: T,
}

/// Identifies one field of [`ModelParams`] by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    B1,
    Delta1,
    Delta2,
    Beta1,
    Beta2,
    Beta3,
    Beta4,
    Mu,
    D1,
    D2,
    U11,
    U12,
    Alpha,
    M,
}

impl ParamName {
    pub const ALL: [ParamName; 14] = [
        ParamName::B1,
        ParamName::Delta1,
        ParamName::Delta2,
        ParamName::Beta1,
        ParamName::Beta2,
        ParamName::Beta3,
        ParamName::Beta4,
        ParamName::Mu,
        ParamName::D1,
        ParamName::D2,
        ParamName::U11,
        ParamName::U12,
        ParamName::Alpha,
        ParamName::M,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::B1 => "b1",
            ParamName::Delta1 => "delta1",
            ParamName::Delta2 => "delta2",
            ParamName::Beta1 => "beta1",
            ParamName::Beta2 => "beta2",
            ParamName::Beta3 => "beta3",
            ParamName::Beta4 => "beta4",
            ParamName::Mu => "mu",
            ParamName::D1 => "d1",
            ParamName::D2 => "d2",
            ParamName::U11 => "u11",
            ParamName::U12 => "u12",
            ParamName::Alpha => "alpha",
            ParamName::M => "m",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownParam(s.to_string()))
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Baseline values used by the simulations and the optimal-control study.
    pub fn table2() -> Self {
        Self {
            b1: T::lit(7.192),
            delta1: T::lit(0.0714),
            delta2: T::lit(0.0714),
            beta1: T::lit(4.0) / T::lit(3.0),
            beta2: T::lit(2.0),
            beta3: T::lit(4.0),
            beta4: T::lit(0.00000008),
            mu: T::lit(0.062),
            d1: T::lit(0.000073),
            d2: T::lit(0.0000913),
            u11: T::lit(0.1),
            u12: T::lit(0.1),
            alpha: T::lit(0.4),
            m: T::lit(0.000182),
        }
    }

    /// Low-recruitment set with a reproduction number just below one.
    pub fn table3() -> Self {
        Self {
            b1: T::lit(0.007192),
            ..Self::table2()
        }
    }

    /// Set with a reproduction number well above one.
    pub fn table4() -> Self {
        Self {
            beta1: T::lit(0.0133),
            mu: T::lit(0.62),
            alpha: T::lit(0.5),
            m: T::lit(0.00182),
            ..Self::table2()
        }
    }

    pub fn get(&self, name: ParamName) -> T {
        match name {
            ParamName::B1 => self.b1,
            ParamName::Delta1 => self.delta1,
            ParamName::Delta2 => self.delta2,
            ParamName::Beta1 => self.beta1,
            ParamName::Beta2 => self.beta2,
            ParamName::Beta3 => self.beta3,
            ParamName::Beta4 => self.beta4,
            ParamName::Mu => self.mu,
            ParamName::D1 => self.d1,
            ParamName::D2 => self.d2,
            ParamName::U11 => self.u11,
            ParamName::U12 => self.u12,
            ParamName::Alpha => self.alpha,
            ParamName::M => self.m,
        }
    }

    pub fn set(&mut self, name: ParamName, value: T) {
        let slot = match name {
            ParamName::B1 => &mut self.b1,
            ParamName::Delta1 => &mut self.delta1,
            ParamName::Delta2 => &mut self.delta2,
            ParamName::Beta1 => &mut self.beta1,
            ParamName::Beta2 => &mut self.beta2,
            ParamName::Beta3 => &mut self.beta3,
            ParamName::Beta4 => &mut self.beta4,
            ParamName::Mu => &mut self.mu,
            ParamName::D1 => &mut self.d1,
            ParamName::D2 => &mut self.d2,
            ParamName::U11 => &mut self.u11,
            ParamName::U12 => &mut self.u12,
            ParamName::Alpha => &mut self.alpha,
            ParamName::M => &mut self.m,
        };
        *slot = value;
    }

    pub fn with(mut self, name: ParamName, value: T) -> Self {
        self.set(name, value);
        self
    }

    /// All rates finite and non-negative, `mu` strictly positive.
    pub fn validate(&self) -> Result<()> {
        for name in ParamName::ALL {
            let v = self.get(name);
            if !v.is_finite() {
                return Err(Error::InvalidParam {
                    name: name.to_string(),
                    reason: format!("non-finite value {v}"),
                });
            }
            if v < T::zero() {
                return Err(Error::InvalidParam {
                    name: name.to_string(),
                    reason: format!("must be >= 0, got {v}"),
                });
            }
        }
        if self.mu <= T::zero() {
            return Err(Error::InvalidParam {
                name: "mu".into(),
                reason: "must be > 0".into(),
            });
        }
        Ok(())
    }

    /// Baseline treatment rates as a control pair.
    pub fn baseline_controls(&self) -> ControlPair<T> {
        ControlPair::new(self.u11, self.u12)
    }

    /// Evaluates the vector field without input validation.
    ///
    /// The treatment terms use `controls`; passing [`Self::baseline_controls`]
    /// gives the uncontrolled system.
    pub fn field(&self, x: &StateVector<T>, controls: ControlPair<T>) -> StateVector<T> {
        let young_force = self.beta1 * x.i1 + self.beta2 * x.i2;
        let adult_force = self.beta3 * x.i1 + self.beta4 * x.i2;
        let treated = holling_treatment(x.i2, controls.u12, self.alpha);
        StateVector {
            s1: self.b1 + self.delta1 * x.r1 - young_force * x.s1 - (self.mu + self.m) * x.s1,
            i1: young_force * x.s1 - (self.d1 + self.mu + controls.u11) * x.i1,
            r1: controls.u11 * x.i1 - (self.mu + self.delta1 + self.m) * x.r1,
            s2: self.m * x.s1 + self.delta2 * x.r2 - adult_force * x.s2 - self.mu * x.s2,
            i2: adult_force * x.s2 - (self.d2 + self.mu) * x.i2 - treated,
            r2: self.m * x.r1 + treated - (self.mu + self.delta2) * x.r2,
        }
    }
}

/// Population counts of the six compartments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector<T> {
    pub s1: T,
    pub i1: T,
    pub r1: T,
    pub s2: T,
    pub i2: T,
    pub r2: T,
}

impl<T: Scalar> StateVector<T> {
    pub const LABELS: [&'static str; DIM] = ["S1", "I1", "R1", "S2", "I2", "R2"];

    pub fn new(s1: T, i1: T, r1: T, s2: T, i2: T, r2: T) -> Self {
        Self { s1, i1, r1, s2, i2, r2 }
    }

    pub fn zero() -> Self {
        Self::from_array([T::zero(); DIM])
    }

    pub fn from_array(a: [T; DIM]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(self) -> [T; DIM] {
        [self.s1, self.i1, self.r1, self.s2, self.i2, self.r2]
    }

    /// Total population `N`.
    pub fn total(&self) -> T {
        self.to_array().into_iter().sum()
    }

    pub fn infected(&self) -> T {
        self.i1 + self.i2
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.to_array().into_iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Non-negative and finite in every component.
    pub fn validate(&self) -> Result<()> {
        for (label, v) in Self::LABELS.iter().zip(self.to_array()) {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{label} is not finite")));
            }
            if v < T::zero() {
                return Err(Error::Domain(format!("{label} is negative ({v})")));
            }
        }
        Ok(())
    }
}

/// Instantaneous treatment rates `(u11(t), u12(t))`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlPair<T> {
    pub u11: T,
    pub u12: T,
}

impl<T: Scalar> ControlPair<T> {
    pub fn new(u11: T, u12: T) -> Self {
        Self { u11, u12 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }
}

/// Saturated treatment flow `u12 I2^2 / (1 + alpha I2^2)` in persons/day.
pub fn holling_treatment<T: Scalar>(i2: T, u12: T, alpha: T) -> T {
    let sq = i2 * i2;
    u12 * sq / (T::one() + alpha * sq)
}

/// Derivative of [`holling_treatment`] with respect to `I2`.
pub fn holling_treatment_slope<T: Scalar>(i2: T, u12: T, alpha: T) -> T {
    let denom = T::one() + alpha * i2 * i2;
    T::lit(2.0) * u12 * i2 / (denom * denom)
}

/// Time derivatives of all compartments.
///
/// Rejects non-finite states, parameters or controls.
pub fn rhs<T: Scalar>(
    state: &StateVector<T>,
    params: &ModelParams<T>,
    controls: ControlPair<T>,
) -> Result<StateVector<T>> {
    if !state.is_finite() {
        return Err(Error::Domain("non-finite state".into()));
    }
    if !(controls.u11.is_finite() && controls.u12.is_finite()) {
        return Err(Error::Domain("non-finite control".into()));
    }
    if ParamName::ALL.iter().any(|&p| !params.get(p).is_finite()) {
        return Err(Error::Domain("non-finite parameter".into()));
    }
    Ok(params.field(state, controls))
}

/// Central-difference Jacobian of an arbitrary `N`-dimensional field.
///
/// Column `j` is perturbed by `h * max(1, |x_j|)`.
pub fn jacobian_of<T, F, const N: usize>(f: F, x: &[T; N], h: T) -> Result<[[T; N]; N]>
where
    T: Scalar,
    F: Fn(&[T; N]) -> [T; N],
{
    if !(h > T::zero()) {
        return Err(Error::Domain(format!("jacobian step must be > 0, got {h}")));
    }
    let mut jac = [[T::zero(); N]; N];
    for j in 0..N {
        let step = h * T::one().max(x[j].abs());
        let mut plus = *x;
        let mut minus = *x;
        plus[j] = x[j] + step;
        minus[j] = x[j] - step;
        let fp = f(&plus);
        let fm = f(&minus);
        let width = plus[j] - minus[j];
        for i in 0..N {
            jac[i][j] = (fp[i] - fm[i]) / width;
        }
    }
    Ok(jac)
}

/// Jacobian of the model field at `state`.
pub fn numerical_jacobian<T: Scalar>(
    state: &StateVector<T>,
    params: &ModelParams<T>,
    controls: ControlPair<T>,
    h: T,
) -> Result<[[T; DIM]; DIM]> {
    jacobian_of(
        |x| params.field(&StateVector::from_array(*x), controls).to_array(),
        &state.to_array(),
        h,
    )
}

/// First sample/component that broke positivity or the population bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation<T> {
    Negative { sample: usize, component: &'static str, value: T },
    Unbounded { sample: usize, total: T, bound: T },
}

/// Outcome of [`check_feasible`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport<T> {
    /// Minimum over time of each compartment.
    pub min_components: [T; DIM],
    pub max_total: T,
    /// `max(N(0), b1/mu)`.
    pub bound: T,
    pub violation: Option<Violation<T>>,
}

impl<T> FeasibilityReport<T> {
    pub fn passes(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks positivity and boundedness of a state trajectory.
///
/// A finite-horizon trajectory may start above `b1/mu`, so the population is
/// checked against `max(N(0), b1/mu)`.
pub fn check_feasible<T: Scalar>(
    traj: &Trajectory<T, DIM>,
    params: &ModelParams<T>,
    tol: T,
) -> FeasibilityReport<T> {
    let n0: T = traj.samples[0].iter().copied().sum();
    let bound = n0.max(params.b1 / params.mu);
    let mut min_components = [T::infinity(); DIM];
    let mut max_total = T::neg_infinity();
    let mut violation = None;
    for (k, sample) in traj.samples.iter().enumerate() {
        let total: T = sample.iter().copied().sum();
        max_total = max_total.max(total);
        for (c, &v) in sample.iter().enumerate() {
            min_components[c] = min_components[c].min(v);
            if violation.is_none() && v < -tol {
                violation = Some(Violation::Negative {
                    sample: k,
                    component: StateVector::<T>::LABELS[c],
                    value: v,
                });
            }
        }
        if violation.is_none() && total > bound + tol {
            violation = Some(Violation::Unbounded { sample: k, total, bound });
        }
    }
    FeasibilityReport {
        min_components,
        max_total,
        bound,
        violation,
    }
}
