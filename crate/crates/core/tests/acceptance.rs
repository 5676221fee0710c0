//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::time::Instant;

use glmcf::angle::{angle_gradient_residual, AngleBundle, GraphState};
use glmcf::checkpoint::{decode, encode};
use glmcf::config::ExperimentConfig;
use glmcf::covariant::covariant_hessian;
use glmcf::flow::{run_flow_from, stable_dt, step_rk4, FlowConfig, FlowStart};
use glmcf::grid::PeriodicGrid;
use glmcf::metric::{build_metric, MetricSpec};
use glmcf::monitors::{decay_fit, MonitorSuite};
use glmcf::scenarios::{emit_outputs, run_bootstrap, run_scenario, Details, MaxPrincipleCheck, Runner, ScenarioOutcome};
use glmcf::trig::TrigPoly;
use glmcf::{Result, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(bool, String)>;

const CONFORMAL: &str = "[metric]\nfamily = \"conformal\"\nf = \"0.1*sin(q1)\"\n";
const FLAT: &str = "[metric]\nfamily = \"flat\"\n";

fn config(scenario: &str, points: usize, metric: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        "scenario = \"{scenario}\"\nn = 2\nN = {points}\nharmonic = [0.3, 0.0]\ninitial = \"0.05*sin(q1)*sin(q2)\"\n{extra}\n{metric}"
    );
    ExperimentConfig::from_toml_str(&text, &[]).expect("acceptance config")
}

fn scenario(cfg: ExperimentConfig) -> Result<ScenarioOutcome> {
    run_scenario(&mut Runner::new(cfg))
}

fn conformal() -> MetricSpec {
    MetricSpec::conformal("0.1*sin(q1)".parse().unwrap())
}

fn c1_angle_consistency() -> Check {
    let grid = PeriodicGrid::new(2, 64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut counted, mut skipped, mut lam) = (0.0f64, 0, 0, 0.0f64);
    for spec in [MetricSpec::flat(), conformal()] {
        let m = build_metric(&spec, grid)?;
        for _ in 0..100 {
            let amp = 0.002 * 50f64.powf(rng.gen::<f64>());
            let u = TrigPoly::random_band_limited(&mut rng, 2, 3, amp).sample(grid);
            let c = vec![0.3, -0.2];
            let b = AngleBundle::compute(&GraphState::new(c, ScalarField::zeros(grid, 0), u)?, &m)?;
            if b.lambda_max <= 5.0 {
                worst = worst.max(b.branch_residual);
                lam = lam.max(b.lambda_max);
                counted += 1;
            } else {
                skipped += 1;
            }
        }
    }
    Ok((
        worst <= 1e-9 && counted > 0,
        format!("{counted} states up to lambda_max {lam:.2} (skipped {skipped} above 5), max branch residual {worst:.2e}"),
    ))
}

fn c2_gradient_identity() -> Check {
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, spec) in [("flat", MetricSpec::flat()), ("conformal", conformal())] {
        let mut r = Vec::new();
        for points in [64, 128] {
            let grid = PeriodicGrid::new(2, points)?;
            let m = build_metric(&spec, grid)?;
            let u = ScalarField::from_fn(grid, |q| 0.2 * q[0].sin() * q[1].sin() + 0.1 * (2.0 * q[1]).cos());
            let b = AngleBundle::compute(&GraphState::new(vec![0.3, 0.0], ScalarField::zeros(grid, 0), u)?, &m)?;
            r.push(angle_gradient_residual(&b.theta, &b.chi_prime, &m)?);
        }
        let ratio = r[0] / r[1];
        ok &= ratio >= 12.0;
        msg.push(format!("{name}: {:.2e} -> {:.2e} ratio {ratio:.1}", r[0], r[1]));
    }
    Ok((ok, msg.join("; ")))
}

fn c3_evolution_identities() -> Check {
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, metric) in [("flat", FLAT), ("conformal", CONFORMAL)] {
        let out = scenario(config("lemma_check", 64, metric, ""))?;
        let Details::Lemma(l) = out.details else { unreachable!() };
        // tau, vartheta, rho, bigtheta
        for k in 1..5 {
            ok &= l.ratios[k] >= 11.0 && l.fine[k] <= 1e-4;
        }
        msg.push(format!(
            "{name}: ratios {} max fine {:.1e}",
            l.ratios[1..].iter().map(|r| format!("{r:.1}")).collect::<Vec<_>>().join("/"),
            l.fine[1..].iter().fold(0.0f64, |a, &b| a.max(b))
        ));
    }
    Ok((ok, msg.join("; ")))
}

const LADDER: &str = "initial = \"sin(q1)*sin(q2)\"\n[flow]\nt_max = 5.0\n[stability]\namplitude_min = 0.0055\namplitude_max = 0.044\nfit_window = [1.0, 5.0]\n";

fn stability_rows() -> Result<Vec<(String, Vec<glmcf::scenarios::StabilityRow>)>> {
    let mut out = Vec::new();
    for (name, metric) in [("flat", FLAT), ("conformal", CONFORMAL)] {
        let cfg = ExperimentConfig::from_toml_str(
            &format!("scenario = \"stability\"\nn = 2\nN = 32\nharmonic = [0.3, 0.0]\n{LADDER}\n{metric}"),
            &[],
        )?;
        let o = scenario(cfg)?;
        let Details::Stability(rows) = o.details else { unreachable!() };
        out.push((name.to_string(), rows));
    }
    Ok(out)
}

fn c4_max_principle(rows: &[(String, Vec<glmcf::scenarios::StabilityRow>)]) -> Check {
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, rs) in rows {
        let mut total = MaxPrincipleCheck::default();
        let mut runs = 0;
        for r in rs.iter().filter(|r| r.termination != "diverged") {
            runs += 1;
            total.osc_violations += r.max_principle.osc_violations;
            total.sup_violations += r.max_principle.sup_violations;
            total.inf_violations += r.max_principle.inf_violations;
        }
        ok &= total.ok() && runs > 0;
        msg.push(format!(
            "{name}: {runs} runs, violations osc/sup/inf {}/{}/{}",
            total.osc_violations, total.sup_violations, total.inf_violations
        ));
    }
    Ok((ok, msg.join("; ")))
}

fn c5_exponential_convergence() -> Check {
    let mut ok = true;
    let mut msg = Vec::new();
    for (name, metric, r2_min) in [("flat", FLAT, 0.995), ("conformal", CONFORMAL, 0.99)] {
        let cfg = config("convergence", 32, metric, "[flow]\nt_max = 10.0\nosc_tol = 0.0\nsample_every = 5\n");
        let o = scenario(cfg)?;
        let s = &o.primary.trajectory.samples;
        let t: Vec<f64> = s.iter().map(|x| x.t).collect();
        let y: Vec<f64> = s.iter().map(|x| x.theta_dot_sup - x.theta_dot_inf).collect();
        let fit = decay_fit(&t, &y, [1.0, 10.0])?;
        let term = o.primary.trajectory.termination.label();
        ok &= fit.c2 > 0.0 && fit.r_squared >= r2_min && term != "diverged";
        msg.push(format!("{name}: C2 {:.4} R^2 {:.6} ({term})", fit.c2, fit.r_squared));
    }
    Ok((ok, msg.join("; ")))
}

fn c6_smallness(rows: &[(String, Vec<glmcf::scenarios::StabilityRow>)]) -> Check {
    let mut ok = true;
    let mut checked = 0;
    let mut worst = (0.0f64, 0.0f64);
    for (_, rs) in rows {
        for r in rs.iter().filter(|r| r.rho0 > 0.0 && r.rho0 <= 1e-3) {
            checked += 1;
            let (a, b) = (r.rho_sup / r.rho0, r.q_sup / r.q0);
            worst = (worst.0.max(a), worst.1.max(b));
            ok &= a <= 4.0 && b <= 4.0;
        }
    }
    Ok((
        ok && checked > 0,
        format!("{checked} runs with rho(0) <= 1e-3, max sup rho/rho(0) {:.3}, max sup Q/Q(0) {:.3}", worst.0, worst.1),
    ))
}

fn c7_uniqueness() -> Check {
    let mut cfg = config(
        "uniqueness",
        32,
        FLAT,
        "[flow]\nt_max = 40.0\nosc_tol = 1e-8\n[uniqueness]\ntwin = \"0.05*cos(q2)\"\n",
    );
    cfg.initial = "0.05*sin(q1)".parse()?;
    let o = scenario(cfg)?;
    let Details::Uniqueness(u) = o.details else { unreachable!() };
    Ok((u.limit_distance <= 1e-6, format!("limit distance {:.2e}", u.limit_distance)))
}

fn c8_stationarity() -> Check {
    let cfg = ExperimentConfig::from_toml_str(
        "scenario = \"bootstrap\"\nn = 2\nN = 32\nharmonic = [0.0, 0.3]\n[metric]\nfamily = \"diagonal\"\nd = [\"1 + 0.2*sin(q2)\", \"1\"]\n",
        &[],
    )?;
    let mut runner = Runner::new(cfg.clone());
    let m = runner.metric()?;
    let b = run_bootstrap(&mut runner, &m, &cfg.harmonic)?;
    let flow = FlowConfig {
        t_max: 1.0,
        osc_tol: 0.0,
        ..cfg.flow
    };
    let suite = MonitorSuite {
        theta_hat: b.theta_hat,
        ..MonitorSuite::default()
    };
    let u0 = b.reference.u.clone();
    let mut worst = 0.0f64;
    let traj = run_flow_from(FlowStart::fresh(b.reference.clone()), &m, &flow, &suite, |ev| {
        let d = ev.state.u.add_scalar(-b.theta_hat * ev.state.t).sub(&u0).sup_abs();
        worst = worst.max(d);
        Ok(())
    })?;
    Ok((
        worst <= 1e-8 && traj.final_state.t >= 1.0 - 1e-12,
        format!(
            "bootstrap osc theta {:.1e}, sup |u - u0 - theta_hat t| {worst:.2e} over [0, 1]",
            b.residual
        ),
    ))
}

fn c9_harnack() -> Check {
    let cfg = config("harnack", 32, CONFORMAL, "[flow]\nt_max = 12.0\nosc_tol = 0.0\nsample_every = 5\n");
    let o = scenario(cfg)?;
    let Details::Harnack(h) = o.details else { unreachable!() };
    let (ok_tail, tail) = match h.ratio_tail {
        Some((mean, spread)) => (mean < 1.0 && spread <= 0.05, format!("last five ratios mean {mean:.4} +- {spread:.4}")),
        None => (false, "fewer than five unit ratios".into()),
    };
    Ok((
        h.violations == 0 && ok_tail,
        format!("companion violations {}, {tail}, sup v(t1)/inf v(t2) {:.4}", h.violations, h.sup_v_t1 / h.inf_v_t2),
    ))
}

fn c10_solver_orders() -> Check {
    let grid = PeriodicGrid::new(2, 32)?;
    let m = build_metric(&conformal(), grid)?;
    let u = ScalarField::from_fn(grid, |q| 0.05 * q[0].sin() * q[1].sin());
    let s0 = GraphState::new(vec![0.3, 0.0], ScalarField::zeros(grid, 0), u)?;
    let dt = stable_dt(&m, 0.2)?;
    let integrate = |k: usize| -> Result<ScalarField> {
        let mut s = s0.clone();
        for _ in 0..(8 * k) {
            s = step_rk4(&s, &m, dt / k as f64)?;
        }
        Ok(s.u)
    };
    let (a, b, c) = (integrate(1)?, integrate(2)?, integrate(4)?);
    let temporal = a.sup_distance(&b) / b.sup_distance(&c);

    let err = |points: usize| -> Result<f64> {
        let g = PeriodicGrid::new(2, points)?;
        let m = build_metric(&conformal(), g)?;
        let u = ScalarField::from_fn(g, |q| q[0].sin() * q[1].cos());
        let h = covariant_hessian(&u, &m)?;
        let mut e = 0.0f64;
        for p in 0..g.len() {
            let q = g.coords(p);
            let f = [0.1 * q[0].cos(), 0.0];
            let du = [q[0].cos() * q[1].cos(), -q[0].sin() * q[1].sin()];
            let d2 = [
                [-q[0].sin() * q[1].cos(), -q[0].cos() * q[1].sin()],
                [-q[0].cos() * q[1].sin(), -q[0].sin() * q[1].cos()],
            ];
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = d2[i][j];
                    for k in 0..2 {
                        let gamma = f[j] * (k == i) as u8 as f64 + f[i] * (k == j) as u8 as f64
                            - f[k] * (i == j) as u8 as f64;
                        v -= gamma * du[k];
                    }
                    e = e.max((h.get(p, &[i, j]) - v).abs());
                }
            }
        }
        Ok(e)
    };
    let spatial = err(64)? / err(128)?;

    let bytes = encode(&s0);
    let back = decode(&bytes).map_err(glmcf::Error::InvalidArgument)?;
    let round_trip = encode(&back) == bytes && back.u.data().iter().zip(s0.u.data()).all(|(x, y)| x.to_bits() == y.to_bits());

    let small = config("harnack", 16, CONFORMAL, "[flow]\nt_max = 0.5\nosc_tol = 0.0\nsample_every = 7\n");
    let mut outputs = Vec::new();
    for threads in [1, 4] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| -> Result<()> {
            let o = scenario(small.clone())?;
            emit_outputs(&small, &o, dir.path())
        })?;
        let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        outputs.push([read("monitors.csv"), read("companion.csv"), read("report.txt")]);
    }
    let identical = outputs[0] == outputs[1];
    Ok((
        temporal >= 12.0 && spatial >= 12.0 && round_trip && identical,
        format!(
            "temporal ratio {temporal:.2}, spatial ratio {spatial:.2}, checkpoint bit-exact {round_trip}, reruns identical (1 vs 4 threads) {identical}"
        ),
    ))
}

fn report(id: usize, name: &str, start: Instant, result: Check, failures: &mut usize) {
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok((true, msg)) => println!("PASS  {id:>2} {name}: {msg} [{secs:.1}s]"),
        Ok((false, msg)) => {
            *failures += 1;
            println!("FAIL  {id:>2} {name}: {msg} [{secs:.1}s]");
        }
        Err(e) => {
            *failures += 1;
            println!("FAIL  {id:>2} {name}: error: {e} [{secs:.1}s]");
        }
    }
}

fn main() {
    let mut failures = 0;
    let t = Instant::now();
    report(1, "angle consistency", t, c1_angle_consistency(), &mut failures);
    let t = Instant::now();
    report(2, "gradient identity", t, c2_gradient_identity(), &mut failures);
    let t = Instant::now();
    report(3, "evolution identities", t, c3_evolution_identities(), &mut failures);
    let t = Instant::now();
    let rows = stability_rows();
    let ladder_secs = t.elapsed().as_secs_f64();
    let (r4, r6) = match &rows {
        Ok(rows) => (c4_max_principle(rows), c6_smallness(rows)),
        Err(e) => (
            Err(glmcf::Error::InvalidArgument(format!("stability ladder: {e}"))),
            Err(glmcf::Error::InvalidArgument(format!("stability ladder: {e}"))),
        ),
    };
    println!("      (stability ladders shared by 4 and 6: {ladder_secs:.1}s)");
    report(4, "maximum principle", Instant::now(), r4, &mut failures);
    let t = Instant::now();
    report(5, "exponential convergence", t, c5_exponential_convergence(), &mut failures);
    report(6, "smallness preservation", Instant::now(), r6, &mut failures);
    let t = Instant::now();
    report(7, "uniqueness", t, c7_uniqueness(), &mut failures);
    let t = Instant::now();
    report(8, "stationarity of special Lagrangians", t, c8_stationarity(), &mut failures);
    let t = Instant::now();
    report(9, "companion and Harnack", t, c9_harnack(), &mut failures);
    let t = Instant::now();
    report(10, "solver orders and reproducibility", t, c10_solver_orders(), &mut failures);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
