//! Reference computations written directly from the model equations, without
//! going through the `agesirs` solvers. The acceptance suite checks the
//! library against these.

use agesirs::model::ModelParams;

/// The six right-hand sides in (S1, I1, R1, S2, I2, R2) order.
pub fn rhs(p: &ModelParams<f64>, x: &[f64; 6], u11: f64, u12: f64) -> [f64; 6] {
    let [s1, i1, r1, s2, i2, r2] = *x;
    let g = u12 * i2 * i2 / (1.0 + p.alpha * i2 * i2);
    let lam_young = p.beta1 * i1 + p.beta2 * i2;
    let lam_adult = p.beta3 * i1 + p.beta4 * i2;
    [
        p.b1 + p.delta1 * r1 - lam_young * s1 - (p.mu + p.m) * s1,
        lam_young * s1 - (p.d1 + p.mu + u11) * i1,
        u11 * i1 - (p.mu + p.delta1 + p.m) * r1,
        p.m * s1 + p.delta2 * r2 - lam_adult * s2 - p.mu * s2,
        lam_adult * s2 - (p.d2 + p.mu) * i2 - g,
        p.m * r1 + g - (p.mu + p.delta2) * r2,
    ]
}

/// `H = I1 + I2 + a1 u11² + a2 u12² + λ·f`.
pub fn hamiltonian(p: &ModelParams<f64>, x: &[f64; 6], lam: &[f64; 6], u: (f64, f64), a: (f64, f64)) -> f64 {
    let f = rhs(p, x, u.0, u.1);
    x[1] + x[4] + a.0 * u.0 * u.0 + a.1 * u.1 * u.1 + lam.iter().zip(f).map(|(l, v)| l * v).sum::<f64>()
}

/// End state of classical RK4 under the preset treatment rates.
pub fn rk4_final(p: &ModelParams<f64>, y0: [f64; 6], t_end: f64, n: usize) -> [f64; 6] {
    let h = t_end / n as f64;
    let add = |y: &[f64; 6], k: &[f64; 6], a: f64| -> [f64; 6] { std::array::from_fn(|i| y[i] + a * k[i]) };
    let mut y = y0;
    for _ in 0..n {
        let k1 = rhs(p, &y, p.u11, p.u12);
        let k2 = rhs(p, &add(&y, &k1, h / 2.0), p.u11, p.u12);
        let k3 = rhs(p, &add(&y, &k2, h / 2.0), p.u11, p.u12);
        let k4 = rhs(p, &add(&y, &k3, h), p.u11, p.u12);
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    y
}

/// Composite trapezoid on a uniform grid of at least two samples.
pub fn trapezoid(v: &[f64], h: f64) -> f64 {
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    h * (inner + 0.5 * (v[0] + v[v.len() - 1]))
}

/// `(S1*, S2*)` of the infection-free state.
pub fn dfe(p: &ModelParams<f64>) -> (f64, f64) {
    let s1 = p.b1 / (p.mu + p.m);
    (s1, p.m * s1 / p.mu)
}

/// Spectral radius of the 2x2 next-generation matrix at the infection-free state.
pub fn ngm_radius(p: &ModelParams<f64>, young_treatment: f64) -> f64 {
    let (s1, s2) = dfe(p);
    let (a, b) = (p.d1 + p.mu + young_treatment, p.d2 + p.mu);
    let k = [[p.beta1 * s1 / a, p.beta2 * s1 / b], [p.beta3 * s2 / a, p.beta4 * s2 / b]];
    let tr = k[0][0] + k[1][1];
    let det = k[0][0] * k[1][1] - k[0][1] * k[1][0];
    0.5 * (tr + (tr * tr - 4.0 * det).sqrt())
}

/// Largest real part of the Jacobian spectrum at the infection-free state.
///
/// With no infection the Jacobian is block triangular: the infected 2x2 block
/// plus the decay rates of the susceptible and recovered compartments.
pub fn dfe_leading_eigen(p: &ModelParams<f64>) -> f64 {
    let (s1, s2) = dfe(p);
    let a = p.beta1 * s1 - (p.d1 + p.mu + p.u11);
    let d = p.beta4 * s2 - (p.d2 + p.mu);
    let (b, c) = (p.beta2 * s1, p.beta3 * s2);
    let tr = a + d;
    let disc = (a - d).powi(2) + 4.0 * b * c;
    let infected = if disc >= 0.0 { 0.5 * (tr + disc.sqrt()) } else { 0.5 * tr };
    [-(p.mu + p.m), -(p.mu + p.delta1 + p.m), -p.mu, -(p.mu + p.delta2)]
        .into_iter()
        .fold(infected, f64::max)
}
