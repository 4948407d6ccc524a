//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, then a nonzero
//! exit if any criterion failed. Quantities the library computes are checked
//! against the reference computations in `agesirs_validation`.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use agesirs::commands::{run_command, Command};
use agesirs::config::RunConfig;
use agesirs::control::{
    directional_derivative, forward_backward_sweep, simulate, ControlProblem, ControlSchedule, CostWeights, Strategy,
    SweepOutcome, SweepSettings,
};
use agesirs::experiments::scale_betas_to_r0;
use agesirs::integrator::{rk4_forward, TimeGrid};
use agesirs::model::{ControlPair, ModelParams, ParamName, StateVector};
use agesirs::reproduction::{disease_free_equilibrium, r0, stability_verdict, R0Variant};
use agesirs::sensitivity::run_reference_sweeps;
use agesirs_validation::{dfe, dfe_leading_eigen, hamiltonian, ngm_radius, rk4_final, trapezoid};

type Verdict = (bool, String);
type Criterion = (u8, &'static str, fn() -> Verdict);

fn table2_problem() -> ControlProblem<f64> {
    ControlProblem {
        params: ModelParams::table2(),
        y0: StateVector::new(100.0, 10.0, 5.0, 100.0, 10.0, 5.0),
        grid: TimeGrid::new(0.0, 100.0, 100_000).unwrap(),
        weights: CostWeights::new(1e-4, 5e-3).unwrap(),
        bounds: Default::default(),
    }
}

fn own_cost(problem: &ControlProblem<f64>, states: &[[f64; 6]], u: &ControlSchedule<f64>) -> f64 {
    let w = &problem.weights;
    let integrand: Vec<f64> = states
        .iter()
        .zip(u.u11.iter().zip(&u.u12))
        .map(|(x, (a, b))| x[1] + x[4] + w.a1 * a * a + w.a2 * b * b)
        .collect();
    trapezoid(&integrand, problem.grid.step())
}

fn objective(problem: &ControlProblem<f64>, u: &ControlSchedule<f64>) -> f64 {
    let traj = simulate(&problem.params, &problem.y0, u).unwrap();
    own_cost(problem, &traj.samples, u)
}

fn component_integral(sweep: &SweepOutcome<f64>, c: usize) -> f64 {
    let v: Vec<f64> = sweep.state.samples.iter().map(|x| x[c]).collect();
    trapezoid(&v, sweep.state.grid.step())
}

fn random_params(rng: &mut ChaCha8Rng, beta_max: f64) -> ModelParams<f64> {
    ModelParams {
        b1: rng.random_range(0.1..10.0),
        delta1: rng.random_range(0.0..1.0),
        delta2: rng.random_range(0.0..1.0),
        beta1: rng.random_range(0.0..beta_max),
        beta2: rng.random_range(0.0..beta_max),
        beta3: rng.random_range(0.0..beta_max),
        beta4: rng.random_range(0.0..beta_max),
        mu: rng.random_range(0.05..1.0),
        d1: rng.random_range(0.0..0.2),
        d2: rng.random_range(0.0..0.2),
        u11: rng.random_range(0.0..1.0),
        u12: rng.random_range(0.0..1.0),
        alpha: rng.random_range(0.0..3.0),
        m: rng.random_range(0.0..0.5),
    }
}

fn fmt_map(m: &BTreeMap<&str, f64>) -> String {
    m.iter().map(|(k, v)| format!("{k}={v:.4}")).collect::<Vec<_>>().join(" ")
}

// ------------------------------------------------------------- criteria

fn c01_reproduction_number() -> Verdict {
    let r3: f64 = r0(&ModelParams::table3(), R0Variant::WithControl).unwrap().r0;
    let r4: f64 = r0(&ModelParams::table4(), R0Variant::WithControl).unwrap().r0;
    let (o3, o4) = (ngm_radius(&ModelParams::table3(), 0.1), ngm_radius(&ModelParams::table4(), 0.1));
    let ok = (r3 - 0.98).abs() <= 0.01 && (r4 - 2.7615).abs() <= 0.005 && (r3 - o3).abs() < 1e-12 && (r4 - o4).abs() < 1e-12;
    (ok, format!("table3 r0={r3:.6} (oracle {o3:.6}), table4 r0={r4:.6} (oracle {o4:.6})"))
}

fn c02_disease_free_state() -> Verdict {
    let e0 = disease_free_equilibrium(&ModelParams::<f64>::table3()).unwrap().to_array();
    let expected = [0.1157, 0.0, 0.0, 0.00039, 0.0, 0.0];
    let worst = e0.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (s1, s2) = dfe(&ModelParams::table3());
    let oracle_gap = (e0[0] - s1).abs().max((e0[3] - s2).abs());
    (
        worst <= 5e-4 && oracle_gap < 1e-12,
        format!("E0 S1={:.6} S2={:.6}, max deviation {worst:.2e}", e0[0], e0[3]),
    )
}

fn c03_stability() -> Verdict {
    let (p3, p4) = (ModelParams::<f64>::table3(), ModelParams::<f64>::table4());
    let lib3 = stability_verdict(&p3, &disease_free_equilibrium(&p3).unwrap()).unwrap().eigen_real_parts[0];
    let lib4 = stability_verdict(&p4, &disease_free_equilibrium(&p4).unwrap()).unwrap().eigen_real_parts[0];
    let (own3, own4) = (dfe_leading_eigen(&p3), dfe_leading_eigen(&p4));
    let agree = (lib3 - own3).abs() < 1e-5 && (lib4 - own4).abs() < 1e-5;

    let (s1, s2) = dfe(&p3);
    let e0 = [s1, 0.0, 0.0, s2, 0.0, 0.0];
    let y0 = [100.0, 5.0, 10.0, 150.0, 70.0, 30.0];
    let dist = |x: &[f64; 6]| x.iter().zip(e0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let end = rk4_final(&p3, y0, 500.0, 500_000);
    let lib_end = *simulate(
        &p3,
        &StateVector::from_array(y0),
        &ControlSchedule::constant(TimeGrid::new(0.0, 500.0, 500_000).unwrap(), p3.baseline_controls()),
    )
    .unwrap()
    .last();
    let ok = lib3 < 0.0 && lib4 > 0.0 && agree && dist(&end) < dist(&y0) && dist(&lib_end) < dist(&y0);
    (
        ok,
        format!(
            "lead eigen table3 {lib3:.5} table4 {lib4:.5}; distance to E0 {:.3} -> {:.3e} over 500 days",
            dist(&y0),
            dist(&lib_end)
        ),
    )
}

fn c04_feasibility() -> Verdict {
    // Force of infection bounded by 0.15 * 900 per day keeps h = 0.01 stable.
    let mut rng = ChaCha8Rng::seed_from_u64(20_231);
    let grid = TimeGrid::new(0.0, 100.0, 10_000).unwrap();
    let mut bad = Vec::new();
    let mut min_seen = f64::INFINITY;
    for draw in 0..50 {
        let p = random_params(&mut rng, 0.15);
        let y0: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..150.0));
        let traj = simulate(&p, &StateVector::from_array(y0), &ControlSchedule::constant(grid, p.baseline_controls()));
        let Ok(traj) = traj else {
            bad.push(draw);
            continue;
        };
        let bound = y0.iter().sum::<f64>().max(p.b1 / p.mu);
        let ok = traj.samples.iter().all(|x| {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            min_seen = min_seen.min(lo);
            lo >= -1e-9 && x.iter().sum::<f64>() <= bound * (1.0 + 1e-9)
        });
        if !ok {
            bad.push(draw);
        }
    }
    (bad.is_empty(), format!("{} of 50 draws feasible, smallest component {min_seen:.3e}", 50 - bad.len()))
}

fn c05_adjoint() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5_150);
    let w = CostWeights::new(1e-4, 5e-3).unwrap();
    let mut worst_costate: f64 = 0.0;
    for _ in 0..100 {
        let p = random_params(&mut rng, 8.0);
        let x: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..200.0));
        let lam: [f64; 6] = std::array::from_fn(|_| rng.random_range(-5.0..5.0));
        let (u11, u12) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let h_of = |y: &[f64; 6]| hamiltonian(&p, y, &lam, (u11, u12), (w.a1, w.a2));
        let numeric: [f64; 6] = std::array::from_fn(|i| {
            let h = 1e-4 * x[i].abs().max(1.0);
            let (mut hi, mut lo) = (x, x);
            hi[i] += h;
            lo[i] -= h;
            -(h_of(&hi) - h_of(&lo)) / (2.0 * h)
        });
        let analytic = agesirs::control::adjoint_rhs(
            &StateVector::from_array(x),
            &agesirs::control::AdjointVector(lam),
            ControlPair::new(u11, u12),
            &p,
        )
        .0;
        let num = analytic.iter().zip(numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let den = numeric.iter().map(|v| v.abs()).fold(1.0, f64::max);
        worst_costate = worst_costate.max(num / den);
    }

    let problem = table2_problem();
    let mut worst_gradient: f64 = 0.0;
    for _ in 0..10 {
        let base = ControlPair::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9));
        let (a, b, w1, w2) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(3.0..30.0),
            rng.random_range(3.0..30.0),
        );
        let u = ControlSchedule::constant(problem.grid, base);
        let d = ControlSchedule::from_fn(problem.grid, |_, t| ControlPair::new(a * (t / w1).sin(), b * (t / w2).cos()));
        let eps = 1e-4;
        let fd = (objective(&problem, &u.perturbed(&d, eps)) - objective(&problem, &u.perturbed(&d, -eps))) / (2.0 * eps);
        let adj = directional_derivative(&problem, &u, &d).unwrap();
        worst_gradient = worst_gradient.max((adj - fd).abs() / fd.abs().max(1e-12));
    }
    (
        worst_costate < 1e-6 && worst_gradient < 1e-3,
        format!("costate relative error {worst_costate:.2e} (100 points), gradient relative error {worst_gradient:.2e} (10 directions)"),
    )
}

struct Comparison {
    sweeps: Vec<SweepOutcome<f64>>,
}

fn comparison() -> &'static Comparison {
    static CELL: OnceLock<Comparison> = OnceLock::new();
    CELL.get_or_init(|| {
        let problem = table2_problem();
        let sweeps = Strategy::ALL
            .par_iter()
            .map(|&s| forward_backward_sweep(&problem, s, &SweepSettings::default()).unwrap())
            .collect();
        Comparison { sweeps }
    })
}

fn strictly_increasing(values: &BTreeMap<&str, f64>, order: [&str; 4]) -> bool {
    order.windows(2).all(|w| values[w[0]] < values[w[1]])
}

fn c06_strategy_ranking() -> Verdict {
    let c = comparison();
    let span = 100.0;
    let avg = |c_idx: usize| -> BTreeMap<&str, f64> {
        c.sweeps
            .iter()
            .map(|s| (s.strategy.as_str(), component_integral(s, c_idx) / span))
            .collect()
    };
    let (i1, i2) = (avg(1), avg(4));
    let i2_ok = strictly_increasing(&i2, ["u12-only", "both", "u11-only", "none"]);
    let i1_ok = strictly_increasing(&i1, ["both", "u11-only", "u12-only", "none"]);
    let converged = c.sweeps.iter().all(|s| s.converged);
    (
        i1_ok && i2_ok,
        format!(
            "avg_I2 [{}] order {}; avg_I1 [{}] order {}; all converged {converged}",
            fmt_map(&i2),
            if i2_ok { "holds" } else { "violated" },
            fmt_map(&i1),
            if i1_ok { "holds" } else { "violated" },
        ),
    )
}

fn c07_optimality() -> Verdict {
    let problem = table2_problem();
    let j_zero = objective(&problem, &ControlSchedule::zero(problem.grid));
    let mut lines = Vec::new();
    let mut ok = true;
    for s in &comparison().sweeps {
        let j_opt = own_cost(&problem, &s.state.samples, &s.controls);
        let half = ControlPair::new(
            if s.strategy.uses_u11() { 0.5 } else { 0.0 },
            if s.strategy.uses_u12() { 0.5 } else { 0.0 },
        );
        let j_half = objective(&problem, &ControlSchedule::constant(problem.grid, half));
        ok &= j_opt <= j_zero && j_opt <= j_half && (j_opt - s.cost).abs() <= 1e-9 * j_opt.abs().max(1.0);
        lines.push(format!("{} J*={j_opt:.2} J0={j_zero:.2} Jhalf={j_half:.2}", s.strategy));
    }
    (ok, lines.join("; "))
}

/// `(I1 burden, I2 burden)` of one strategy at rescaled transmission.
fn burdens(base: &ModelParams<f64>, target: f64, strategy: Strategy) -> (f64, f64) {
    let params = scale_betas_to_r0(base, target).unwrap();
    let achieved = ngm_radius(&params, 0.0);
    assert!((achieved - target).abs() < 1e-6 * target, "scaled r0 {achieved} vs {target}");
    let problem = ControlProblem { params, ..table2_problem() };
    let s = forward_backward_sweep(&problem, strategy, &SweepSettings::default()).unwrap();
    (component_integral(&s, 1), component_integral(&s, 4))
}

fn c08_r0_sweep() -> Verdict {
    let base = ModelParams::table2();
    let grid = [1.2, 1.4, 2.0, 3.0, 5.0];
    let cells: Vec<(f64, Strategy, (f64, f64))> = grid
        .iter()
        .flat_map(|&r| Strategy::ALL.iter().map(move |&s| (r, s)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(r, s)| (r, s, burdens(&base, r, s)))
        .collect();
    let get = |r: f64, s: Strategy| cells.iter().find(|c| c.0 == r && c.1 == s).unwrap().2;
    let mut notes = Vec::new();
    let mut ok = true;
    for r in grid {
        let best = Strategy::ALL
            .iter()
            .min_by(|a, b| get(r, **a).1.total_cmp(&get(r, **b).1))
            .unwrap();
        if *best != Strategy::U12Only {
            ok = false;
            notes.push(format!(
                "r0={r}: lowest I2 burden is {best} ({:.1}) not u12-only ({:.1})",
                get(r, *best).1,
                get(r, Strategy::U12Only).1
            ));
        }
    }
    for r in [3.0, 5.0] {
        let (a, b) = (get(r, Strategy::U11Only).0, get(r, Strategy::U12Only).0);
        notes.push(format!("r0={r}: I1 burden u11-only {a:.1} vs u12-only {b:.1}"));
        ok &= a < b;
    }
    let (a, b) = (get(1.2, Strategy::U11Only).0, get(1.2, Strategy::U12Only).0);
    notes.push(format!("r0=1.2: I1 burden u11-only {a:.1} vs u12-only {b:.1} (claim: u11-only loses)"));
    ok &= a > b;
    (ok, notes.join("; "))
}

fn c09_alpha_sweep() -> Verdict {
    let alphas = [0.0, 0.4, 1.0, 2.0];
    let totals: Vec<f64> = alphas
        .par_iter()
        .map(|&alpha| {
            let base = ModelParams { alpha, ..ModelParams::table2() };
            let (i1, i2) = burdens(&base, 3.0, Strategy::Both);
            i1 + i2
        })
        .collect();
    let ok = totals.windows(2).all(|w| w[1] >= w[0]);
    let text = alphas
        .iter()
        .zip(&totals)
        .map(|(a, t)| format!("alpha={a} burden={t:.2}"))
        .collect::<Vec<_>>()
        .join(" ");
    (ok, text)
}

fn c10_sensitivity() -> Verdict {
    let grid = TimeGrid::new(0.0, 100.0, 100_000).unwrap();
    let y0 = StateVector::new(100.0, 5.0, 10.0, 150.0, 70.0, 30.0);
    let (table, sweeps) = run_reference_sweeps(&ModelParams::table2(), &y0, grid, 100, 0.05).unwrap();

    let mut agree = 0;
    let mut wrong = Vec::new();
    let mut score_gap: f64 = 0.0;
    for (row, sweep) in table.rows.iter().zip(&sweeps) {
        let n = sweep.curves.len() as f64;
        let own_score = (0..sweep.times.len())
            .map(|k| {
                let mean = sweep.curves.iter().map(|c| c[k]).sum::<f64>() / n;
                let mse = sweep.curves.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>() / n;
                mse / (1.0 + mean * mean)
            })
            .fold(0.0, f64::max);
        score_gap = score_gap.max((own_score - row.score).abs() / own_score.max(1e-300));
        let sensitive = own_score > 0.05;
        if sensitive == row.row.reference_sensitive {
            agree += 1;
        }
        let expected = match (row.row.param, row.row.lo) {
            (ParamName::U11 | ParamName::Beta1 | ParamName::Mu, 0.0) => Some(true),
            (ParamName::M | ParamName::Delta1 | ParamName::Delta2 | ParamName::Beta4, _) => Some(false),
            _ => None,
        };
        if let Some(e) = expected {
            if e != sensitive {
                wrong.push(format!(
                    "{} [{}, {}] score {own_score:.2e} classified {}",
                    row.row.param,
                    row.row.lo,
                    row.row.hi,
                    if sensitive { "sensitive" } else { "insensitive" }
                ));
            }
        }
    }
    let ok = wrong.is_empty() && score_gap < 1e-9;
    (
        ok,
        format!(
            "agreement {agree}/{} with the reference table; separated-row mismatches: {}",
            table.rows.len(),
            if wrong.is_empty() { "none".to_string() } else { wrong.join("; ") }
        ),
    )
}

fn c11_integrator_order() -> Verdict {
    let err = |rate: f64, n: usize| {
        let traj = rk4_forward(|_, y: &[f64; 1]| [rate * y[0]], [1.0], TimeGrid::new(0.0, 1.0, n).unwrap()).unwrap();
        (traj.last()[0] - rate.exp()).abs()
    };
    let orders: Vec<f64> = [(-1.0, 10), (-1.0, 20), (1.0, 10), (2.0, 20)]
        .into_iter()
        .map(|(rate, n)| (err(rate, n) / err(rate, 2 * n)).log2())
        .collect();
    (
        orders.iter().all(|p| (3.8..=4.2).contains(p)),
        format!("observed orders {orders:.3?}"),
    )
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn c12_determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let cfg = RunConfig {
            output_dir: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        run_command(Command::Replicate, &cfg, None).unwrap();
    }
    let (fa, fb) = (read_dir(a.path()), read_dir(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let ok = !fa.is_empty() && fa.keys().eq(fb.keys()) && differing.is_empty();
    (
        ok,
        format!(
            "{} files, {} bytes compared, differing: {differing:?}",
            fa.len(),
            fa.values().map(Vec::len).sum::<usize>()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "reproduction number", c01_reproduction_number),
        (2, "disease-free equilibrium", c02_disease_free_state),
        (3, "stability dichotomy", c03_stability),
        (4, "positivity and boundedness", c04_feasibility),
        (5, "adjoint correctness", c05_adjoint),
        (6, "strategy ranking", c06_strategy_ranking),
        (7, "optimality", c07_optimality),
        (8, "r0 sweep claims", c08_r0_sweep),
        (9, "alpha monotonicity", c09_alpha_sweep),
        (10, "sensitivity agreement", c10_sensitivity),
        (11, "integrator order", c11_integrator_order),
        (12, "determinism", c12_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let (passed, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {id:>2} {} {name} ({:.1}s): {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !passed {
            failed.push(id);
        }
    }
    println!("acceptance: {} passed, {} failed {failed:?}", 12 - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
