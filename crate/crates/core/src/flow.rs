//! Time integration of `∂u/∂t = θ(χ̂ + du)` and of the companion equation
//! `∂v/∂t = η^{ij} v_ij`.

use serde::{Deserialize, Serialize};

use crate::angle::{AngleBundle, GraphState};
use crate::covariant::{contract, covariant_hessian};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SymTensorField};
use crate::metric::MetricField;
use crate::monitors::{scalar_monitors, LemmaWindow, MonitorSample, MonitorSuite, Residuals};
use crate::stencil::pairwise_sum;

/// Largest `|λ_i|` tolerated before a run is declared diverged.
pub const LAMBDA_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub cfl: f64,
    pub t_max: f64,
    pub osc_tol: f64,
    pub sample_every: u64,
    /// Zero disables checkpoints.
    pub checkpoint_every: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            cfl: 0.2,
            t_max: 10.0,
            osc_tol: 1e-10,
            sample_every: 10,
            checkpoint_every: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::Config(format!("flow.cfl = {} not in (0, 0.5]", self.cfl)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Config(format!("flow.t_max = {} must be positive", self.t_max)));
        }
        if !(self.osc_tol >= 0.0) {
            return Err(Error::Config(format!("flow.osc_tol = {} must be non-negative", self.osc_tol)));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("flow.sample_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    TMax,
    Diverged { step: u64, t: f64, reason: String },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::TMax => "t_max",
            Termination::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<MonitorSample>,
    pub termination: Termination,
    pub final_state: GraphState,
    /// Index of the step that produced `final_state`.
    pub steps: u64,
    pub dt: f64,
}

/// `∂u/∂t = θ(χ̂ + du)`.
pub fn flow_rhs(state: &GraphState, metric: &MetricField) -> Result<ScalarField> {
    Ok(AngleBundle::compute(state, metric)?.theta)
}

/// `cfl · h² / (2n · sup λ_max(g^{-1}))`.
pub fn stable_dt(metric: &MetricField, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0) {
        return Err(Error::InvalidArgument(format!("cfl = {cfl} must be positive")));
    }
    let h = metric.grid().spacing();
    Ok(cfl * h * h / (2.0 * metric.dim() as f64 * metric.sup_inverse_eigenvalue()))
}

/// Uniform step that lands on `t_max`, never above the stable step, and the step count.
pub fn flow_dt(metric: &MetricField, cfg: &FlowConfig) -> Result<(f64, u64)> {
    let dt = stable_dt(metric, cfg.cfl)?;
    // the small offset keeps exact ratios such as 16.000000000000004 at 16 steps
    let steps = (cfg.t_max / dt - 1e-9).ceil().max(1.0) as u64;
    Ok((cfg.t_max / steps as f64, steps))
}

fn check_finite(f: &ScalarField, t: f64) -> Result<()> {
    if f.all_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            step: 0,
            t,
            reason: "non-finite values".into(),
        })
    }
}

fn rk4_from(state: &GraphState, metric: &MetricField, dt: f64, k1: &ScalarField) -> Result<GraphState> {
    let u = &state.u;
    let stage = |k: &ScalarField, a: f64| -> Result<ScalarField> {
        let trial = state.with_u(u.lincomb(1.0, k, a), state.t + a);
        let r = flow_rhs(&trial, metric)?;
        check_finite(&r, trial.t)?;
        Ok(r)
    };
    let k2 = stage(k1, 0.5 * dt)?;
    let k3 = stage(&k2, 0.5 * dt)?;
    let k4 = stage(&k3, dt)?;
    let mut next = u.clone();
    let w = dt / 6.0;
    let (d, a, b, c, e) = (next.data_mut(), k1.data(), k2.data(), k3.data(), k4.data());
    for i in 0..d.len() {
        d[i] += w * (a[i] + 2.0 * (b[i] + c[i]) + e[i]);
    }
    let next = state.with_u(next, state.t + dt);
    check_finite(&next.u, next.t)?;
    Ok(next)
}

/// One classical RK4 step of the flow.
pub fn step_rk4(state: &GraphState, metric: &MetricField, dt: f64) -> Result<GraphState> {
    let k1 = flow_rhs(state, metric)?;
    check_finite(&k1, state.t)?;
    rk4_from(state, metric, dt, &k1)
}

/// What the observer sees before each step (and at the final state).
pub struct StepEvent<'a> {
    pub step: u64,
    pub state: &'a GraphState,
    pub bundle: &'a AngleBundle,
    pub dt: f64,
    /// Samples recorded at earlier steps.
    pub samples_before: &'a [MonitorSample],
    /// Sample taken at this step, if any.
    pub sample: Option<&'a MonitorSample>,
    /// State one step earlier, kept while residuals are evaluated.
    pub prev: Option<&'a GraphState>,
    /// No update follows this event.
    pub last: bool,
}

/// Where an integration starts: a fresh state or a resumed one.
#[derive(Debug, Clone)]
pub struct FlowStart {
    pub state: GraphState,
    pub step: u64,
    pub samples: Vec<MonitorSample>,
    pub prev: Option<GraphState>,
}

impl FlowStart {
    pub fn fresh(state: GraphState) -> Self {
        Self {
            state,
            step: 0,
            samples: Vec::new(),
            prev: None,
        }
    }
}

/// Integrates from `state0` until `osc θ ≤ osc_tol` or `t ≥ t_max`.
pub fn run_flow(state0: &GraphState, metric: &MetricField, cfg: &FlowConfig, suite: &MonitorSuite) -> Result<Trajectory> {
    run_flow_from(FlowStart::fresh(state0.clone()), metric, cfg, suite, |_| Ok(()))
}

fn divergence(err: Error) -> Result<String> {
    match err {
        Error::Diverged { reason, .. } => Ok(reason),
        Error::JacobiNoConvergence { point } => Ok(format!("eigenvalue iteration failed at point {point}")),
        Error::Singular { point } => Ok(format!("singular induced metric at point {point}")),
        other => Err(other),
    }
}

/// [`run_flow`] from an arbitrary start with an observer called once per
/// step before the update.
pub fn run_flow_from(
    start: FlowStart,
    metric: &MetricField,
    cfg: &FlowConfig,
    suite: &MonitorSuite,
    mut observer: impl FnMut(&StepEvent<'_>) -> Result<()>,
) -> Result<Trajectory> {
    cfg.validate()?;
    start.state.grid().ensure_same(metric.grid())?;
    let (dt, total) = flow_dt(metric, cfg)?;
    let FlowStart {
        mut state,
        mut step,
        mut samples,
        mut prev,
    } = start;
    let diverged = |step: u64, t: f64, reason: String, samples: Vec<MonitorSample>, state: GraphState| Trajectory {
        samples,
        termination: Termination::Diverged { step, t, reason },
        final_state: state,
        steps: step,
        dt,
    };
    loop {
        let bundle = match AngleBundle::compute(&state, metric) {
            Ok(b) => b,
            Err(e) => return Ok(diverged(step, state.t, divergence(e)?, samples, state)),
        };
        if !bundle.theta.all_finite() || !state.u.all_finite() {
            return Ok(diverged(step, state.t, "non-finite values".into(), samples, state));
        }
        if bundle.lambda_max > LAMBDA_LIMIT {
            let reason = format!("lambda_max {:.3e} above {LAMBDA_LIMIT}", bundle.lambda_max);
            return Ok(diverged(step, state.t, reason, samples, state));
        }
        let converged = bundle.theta.osc() <= cfg.osc_tol;
        let last = converged || step >= total;
        let before = samples.len();
        let mut pending = None;
        if (step % cfg.sample_every == 0 || last) && samples.last().is_none_or(|s| s.t < state.t) {
            let sample = scalar_monitors(&state, metric, &bundle, suite.theta_hat, state.anchor, suite)?;
            if !sample.is_finite() {
                return Ok(diverged(step, state.t, "non-finite monitor".into(), samples, state));
            }
            samples.push(sample);
            if suite.residuals && prev.is_some() && !last {
                pending = Some(before);
            }
        }
        observer(&StepEvent {
            step,
            state: &state,
            bundle: &bundle,
            dt,
            samples_before: &samples[..before],
            sample: samples.get(before),
            prev: if suite.residuals { prev.as_ref() } else { None },
            last,
        })?;
        if last {
            return Ok(Trajectory {
                samples,
                termination: if converged {
                    Termination::Converged
                } else {
                    Termination::TMax
                },
                final_state: state,
                steps: step,
                dt,
            });
        }
        let mut next = match rk4_from(&state, metric, dt, &bundle.theta) {
            Ok(s) => s,
            Err(e) => return Ok(diverged(step, state.t, divergence(e)?, samples, state)),
        };
        next.t = (step + 1) as f64 * dt;
        if let Some(idx) = pending {
            let p = prev.as_ref().expect("pending residual needs a previous state");
            let window = LemmaWindow::new(&[p, &state, &next])?;
            samples[idx].residuals = Residuals::compute(&window, metric, suite.theta_hat)?;
        }
        let old = std::mem::replace(&mut state, next);
        prev = if suite.residuals { Some(old) } else { None };
        step += 1;
    }
}

/// `ũ = u − ∫u dV_g / ∫dV_g`, quadrature weights `√det g · h^n`.
pub fn recenter(u: &ScalarField, metric: &MetricField) -> Result<(ScalarField, f64)> {
    u.grid().ensure_same(metric.grid())?;
    let w = metric.sqrt_det_g.data();
    let weighted: Vec<f64> = u.data().iter().zip(w).map(|(a, b)| a * b).collect();
    let mean = pairwise_sum(&weighted) / pairwise_sum(w);
    Ok((u.add_scalar(-mean), mean))
}

/// Positive solution of the companion equation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionState {
    pub v: ScalarField,
    pub t: f64,
}

fn companion_rhs(v: &ScalarField, eta_inv: &SymTensorField, metric: &MetricField) -> Result<ScalarField> {
    Ok(contract(&covariant_hessian(v, metric)?, eta_inv))
}

/// One RK4 step of `∂v/∂t = η^{ij} v_ij` with `η` frozen over the step.
pub fn companion_step(
    state: &CompanionState,
    eta_inv: &SymTensorField,
    metric: &MetricField,
    dt: f64,
) -> Result<CompanionState> {
    let v = &state.v;
    let k1 = companion_rhs(v, eta_inv, metric)?;
    let k2 = companion_rhs(&v.lincomb(1.0, &k1, 0.5 * dt), eta_inv, metric)?;
    let k3 = companion_rhs(&v.lincomb(1.0, &k2, 0.5 * dt), eta_inv, metric)?;
    let k4 = companion_rhs(&v.lincomb(1.0, &k3, dt), eta_inv, metric)?;
    let mut next = v.clone();
    let w = dt / 6.0;
    let (d, a, b, c, e) = (next.data_mut(), k1.data(), k2.data(), k3.data(), k4.data());
    for i in 0..d.len() {
        d[i] += w * (a[i] + 2.0 * (b[i] + c[i]) + e[i]);
    }
    let t = state.t + dt;
    let min_v = next.min();
    if !(min_v > 0.0) {
        return Err(Error::MaxPrincipleViolation { t, min_v });
    }
    Ok(CompanionState { v: next, t })
}
