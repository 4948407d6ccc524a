//! Fixed-step classical Runge-Kutta integration on a uniform grid.
//!
//! State, adjoint and control series all live on the same [`TimeGrid`], so a
//! sample index means the same instant in every series.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default step in days. The infection terms reach several hundred per day at
/// the reference parameters, which puts `h = 0.01` outside RK4's stability region.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Uniform grid `t0, t0 + h, ..., t_end` with `n_steps + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid<T> {
    pub t0: T,
    pub t_end: T,
    pub n_steps: usize,
}

impl<T: Scalar> TimeGrid<T> {
    pub fn new(t0: T, t_end: T, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t_end.is_finite()) {
            return Err(Error::InvalidGrid("non-finite end points".into()));
        }
        if !(t_end > t0) {
            return Err(Error::InvalidGrid(format!(
                "end time {t_end} must exceed start time {t0}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("at least one step required".into()));
        }
        Ok(Self { t0, t_end, n_steps })
    }

    /// Grid whose step is at most `h`, rounding the step count up.
    pub fn with_max_step(t0: T, t_end: T, h: T) -> Result<Self> {
        if !(h > T::zero() && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("step {h} must be positive")));
        }
        let n = ((t_end - t0) / h).ceil().to_f64_lossy();
        if !(n.is_finite() && n >= 1.0) {
            return Err(Error::InvalidGrid(format!("end time {t_end} must exceed start time {t0}")));
        }
        // Guard against `span / h` landing a hair above an integer.
        let n = if (n - 1.0) * h.to_f64_lossy() >= (t_end - t0).to_f64_lossy() * (1.0 - 1e-12) { n - 1.0 } else { n };
        Self::new(t0, t_end, n.max(1.0) as usize)
    }

    pub fn step(&self) -> T {
        (self.t_end - self.t0) / T::from_usize_lossy(self.n_steps)
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> T {
        self.t_end - self.t0
    }

    /// Time of node `k`.
    pub fn time(&self, k: usize) -> T {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t0 + self.step() * T::from_usize_lossy(k)
        }
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    /// Cell containing `t` and the fractional offset inside it.
    ///
    /// `t` is clamped to the grid, so the result is always a valid
    /// `(k, frac)` with `k < n_steps` and `frac` in `[0, 1]`.
    pub fn locate(&self, t: T) -> (usize, T) {
        let pos = ((t - self.t0) / self.step()).max(T::zero());
        let k = pos.floor().to_usize().unwrap_or(usize::MAX).min(self.n_steps - 1);
        let frac = (pos - T::from_usize_lossy(k)).min(T::one());
        (k, frac)
    }
}

/// Samples of an `N`-dimensional quantity at every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T, const N: usize> {
    pub grid: TimeGrid<T>,
    pub samples: Vec<[T; N]>,
}

impl<T: Scalar, const N: usize> Trajectory<T, N> {
    pub fn constant(grid: TimeGrid<T>, value: [T; N]) -> Self {
        Self {
            grid,
            samples: vec![value; grid.len()],
        }
    }

    pub fn first(&self) -> &[T; N] {
        &self.samples[0]
    }

    pub fn last(&self) -> &[T; N] {
        &self.samples[self.samples.len() - 1]
    }

    /// Component `c` across all samples.
    pub fn component(&self, c: usize) -> Vec<T> {
        self.samples.iter().map(|s| s[c]).collect()
    }

    /// Linear interpolation between the two nodes around `t`.
    ///
    /// At stage midpoints of an RK4 step this is the mean of the neighbouring
    /// nodes.
    pub fn interpolate(&self, t: T) -> [T; N] {
        let (k, frac) = self.grid.locate(t);
        lerp(&self.samples[k], &self.samples[k + 1], frac)
    }
}

pub(crate) fn lerp<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N], frac: T) -> [T; N] {
    let mut out = *a;
    for i in 0..N {
        out[i] = a[i] + (b[i] - a[i]) * frac;
    }
    out
}

/// Value of the trajectory at the node nearest to `t`.
pub fn sample_lookup<T: Scalar, const N: usize>(traj: &Trajectory<T, N>, t: T) -> Result<[T; N]> {
    let g = &traj.grid;
    let slack = g.step() * T::lit(1e-9);
    if !(t >= g.t0 - slack && t <= g.t_end + slack) {
        return Err(Error::OutOfRange {
            t: t.to_f64_lossy(),
            t0: g.t0.to_f64_lossy(),
            t_end: g.t_end.to_f64_lossy(),
        });
    }
    let pos = ((t - g.t0) / g.step()).round();
    let k = pos.to_usize().unwrap_or(0).min(g.n_steps);
    Ok(traj.samples[k])
}

fn axpy<T: Scalar, const N: usize>(y: &[T; N], a: T, k: &[T; N]) -> [T; N] {
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + a * k[i];
    }
    out
}

/// One classical RK4 step of size `h` (which may be negative).
pub fn rk4_step<T, F, const N: usize>(field: &mut F, t: T, y: &[T; N], h: T) -> [T; N]
where
    T: Scalar,
    F: FnMut(T, &[T; N]) -> [T; N],
{
    let half = h / T::lit(2.0);
    let k1 = field(t, y);
    let k2 = field(t + half, &axpy(y, half, &k1));
    let k3 = field(t + half, &axpy(y, half, &k2));
    let k4 = field(t + h, &axpy(y, h, &k3));
    let sixth = h / T::lit(6.0);
    let mut out = *y;
    for i in 0..N {
        out[i] = y[i] + sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
    }
    out
}

fn all_finite<T: Scalar, const N: usize>(y: &[T; N]) -> bool {
    y.iter().all(|v| v.is_finite())
}

/// Integrates `y' = field(t, y)` forward from `y0` at `grid.t0`.
pub fn rk4_forward<T, F, const N: usize>(mut field: F, y0: [T; N], grid: TimeGrid<T>) -> Result<Trajectory<T, N>>
where
    T: Scalar,
    F: FnMut(T, &[T; N]) -> [T; N],
{
    if !all_finite(&y0) {
        return Err(Error::NonFinite { step: 0 });
    }
    let h = grid.step();
    let mut samples = Vec::with_capacity(grid.len());
    samples.push(y0);
    let mut y = y0;
    for k in 0..grid.n_steps {
        y = rk4_step(&mut field, grid.time(k), &y, h);
        if !all_finite(&y) {
            return Err(Error::NonFinite { step: k + 1 });
        }
        samples.push(y);
    }
    Ok(Trajectory { grid, samples })
}

/// Integrates `y' = field(t, y)` backward from `y_end` at `grid.t_end`.
///
/// The returned samples are indexed forward in time, so
/// `samples[n_steps] == y_end`.
pub fn rk4_backward<T, F, const N: usize>(mut field: F, y_end: [T; N], grid: TimeGrid<T>) -> Result<Trajectory<T, N>>
where
    T: Scalar,
    F: FnMut(T, &[T; N]) -> [T; N],
{
    if !all_finite(&y_end) {
        return Err(Error::NonFinite { step: grid.n_steps });
    }
    let h = grid.step();
    let mut samples = vec![y_end; grid.len()];
    let mut y = y_end;
    for k in (1..=grid.n_steps).rev() {
        y = rk4_step(&mut field, grid.time(k), &y, -h);
        if !all_finite(&y) {
            return Err(Error::NonFinite { step: k - 1 });
        }
        samples[k - 1] = y;
    }
    Ok(Trajectory { grid, samples })
}

/// Observed order of accuracy on `y' = rate·y`, `y(0) = 1`, over `[0, t_end]`:
/// `log2(e(n) / e(2n))` where `e(n)` is the endpoint error with `n` steps.
pub fn empirical_order<T: Scalar>(rate: T, t_end: T, n: usize) -> Result<T> {
    let endpoint_error = |steps: usize| -> Result<T> {
        let grid = TimeGrid::new(T::zero(), t_end, steps)?;
        let traj = rk4_forward(|_, y: &[T; 1]| [rate * y[0]], [T::one()], grid)?;
        Ok((traj.last()[0] - (rate * t_end).exp()).abs())
    };
    let coarse = endpoint_error(n)?;
    let fine = endpoint_error(2 * n)?;
    if !(fine > T::zero()) {
        return Err(Error::Domain("fine-grid error vanished; use fewer steps".into()));
    }
    Ok((coarse / fine).log2())
}
