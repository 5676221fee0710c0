//! Experiment orchestration: the six scenarios, checkpointing and outputs.

use std::path::{Path, PathBuf};

use log::info;

use crate::angle::{assemble_chi, AngleBundle, GraphState};
use crate::checkpoint::{self, CheckpointMeta, SampleRecord};
use crate::config::{ExperimentConfig, Scenario};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::flow::{
    companion_step, flow_dt, recenter, run_flow_from, step_rk4, CompanionState, FlowConfig, FlowStart, StepEvent,
    Termination, Trajectory,
};
use crate::metric::{build_metric, MetricField};
use crate::monitors::{
    decay_fit, harnack_functional, oscillation_series, residual_rho, DecayFit, LemmaWindow, MonitorSample,
    MonitorSuite, OscillationSeries,
};
use crate::output::{self, fmt_f64, table_csv, write_atomic};

/// Per-sample values besides the monitor row.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct AuxRecord {
    pub t: f64,
    /// `sup |ũ|` of the recentered potential.
    pub utilde_sup: f64,
    pub v_sup: Option<f64>,
    pub v_inf: Option<f64>,
    pub harnack_sup: Option<f64>,
}

/// One integrated run of a scenario.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub label: String,
    pub trajectory: Trajectory,
    pub aux: Vec<AuxRecord>,
    /// Steps where `sup v` rose or `inf v` fell.
    pub companion_violations: u64,
    pub companion_final: Option<CompanionState>,
}

/// Resumption data for the run with index `run_index`.
#[derive(Debug, Clone)]
pub struct ResumePoint {
    pub run_index: usize,
    pub start: FlowStart,
    pub aux: Vec<AuxRecord>,
    pub companion: Option<CompanionState>,
    pub companion_violations: u64,
}

/// Runs flows for one scenario, numbering them and writing checkpoints.
pub struct Runner {
    pub cfg: ExperimentConfig,
    resume: Option<ResumePoint>,
    next_index: usize,
    checkpoint_dir: Option<PathBuf>,
}

struct CompanionTrack {
    state: CompanionState,
    violations: u64,
    alpha: f64,
}

/// Counters for `sup/inf` monotonicity of `θ̇` and the slack check on `osc θ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MaxPrincipleCheck {
    pub osc_violations: usize,
    pub sup_violations: usize,
    pub inf_violations: usize,
}

impl MaxPrincipleCheck {
    /// `osc θ` may grow by at most `slack` per unit time; `sup θ̇` and
    /// `inf θ̇` are checked with zero slack.
    pub fn of(samples: &[MonitorSample], slack: f64) -> Self {
        let mut c = Self::default();
        for w in samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.osc_theta > a.osc_theta + slack * (b.t - a.t) {
                c.osc_violations += 1;
            }
            if b.theta_dot_sup > a.theta_dot_sup {
                c.sup_violations += 1;
            }
            if b.theta_dot_inf < a.theta_dot_inf {
                c.inf_violations += 1;
            }
        }
        c
    }

    pub fn ok(&self) -> bool {
        self.osc_violations == 0 && self.sup_violations == 0 && self.inf_violations == 0
    }
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Self {
            cfg,
            resume: None,
            next_index: 0,
            checkpoint_dir: None,
        }
    }

    pub fn with_resume(mut self, resume: ResumePoint) -> Self {
        self.resume = Some(resume);
        self
    }

    /// Enables checkpoints (per `flow.checkpoint_every`) under `dir`.
    pub fn with_checkpoints(mut self, dir: PathBuf) -> Self {
        self.checkpoint_dir = Some(dir);
        self
    }

    pub fn metric(&self) -> Result<MetricField> {
        build_metric(&self.cfg.metric, crate::grid::PeriodicGrid::new(self.cfg.n, self.cfg.points)?)
    }

    /// Integrates one run; `v0` attaches the companion equation.
    pub fn flow(
        &mut self,
        label: &str,
        state0: GraphState,
        metric: &MetricField,
        flow: &FlowConfig,
        suite: &MonitorSuite,
        v0: Option<ScalarField>,
    ) -> Result<RunRecord> {
        let index = self.next_index;
        self.next_index += 1;
        let resume = match &self.resume {
            Some(r) if r.run_index == index => self.resume.take(),
            _ => None,
        };
        let (start, mut aux, companion, violations) = match resume {
            Some(r) => (r.start, r.aux, r.companion, r.companion_violations),
            None => {
                let comp = v0.map(|v| CompanionState { v, t: state0.t });
                (FlowStart::fresh(state0), Vec::new(), comp, 0)
            }
        };
        if let Some(c) = &companion {
            if !(c.v.min() > 0.0) {
                return Err(Error::Config("companion initial datum must be positive".into()));
            }
        }
        let mut track = companion.map(|state| CompanionTrack {
            state,
            violations,
            alpha: self.cfg.harnack.alpha,
        });
        info!("run {index} `{label}` from step {}", start.step);
        let ckpt_dir = self.checkpoint_dir.clone();
        let ckpt_every = flow.checkpoint_every;
        let cfg = &self.cfg;
        let traj = run_flow_from(start, metric, flow, suite, |ev: &StepEvent<'_>| {
            if let Some(dir) = &ckpt_dir {
                if ckpt_every > 0 && ev.step.is_multiple_of(ckpt_every) && !ev.last {
                    save_checkpoint(dir, cfg, index, label, ev, suite.theta_hat, &aux, track.as_ref())?;
                }
            }
            if let Some(sample) = ev.sample {
                let (utilde, _) = recenter(&ev.state.u, metric)?;
                let mut rec = AuxRecord {
                    t: sample.t,
                    utilde_sup: utilde.sup_abs(),
                    ..Default::default()
                };
                if let Some(tr) = &track {
                    rec.v_sup = Some(tr.state.v.max());
                    rec.v_inf = Some(tr.state.v.min());
                    let f = harnack_functional(&tr.state.v, &ev.bundle.eta_inv, metric, ev.state.t, tr.alpha)?;
                    rec.harnack_sup = Some(f.max());
                }
                aux.push(rec);
            }
            if let Some(tr) = track.as_mut() {
                if !ev.last {
                    let (s, i) = (tr.state.v.max(), tr.state.v.min());
                    tr.state = companion_step(&tr.state, &ev.bundle.eta_inv, metric, ev.dt)?;
                    tr.state.t = (ev.step + 1) as f64 * ev.dt;
                    if tr.state.v.max() > s || tr.state.v.min() < i {
                        tr.violations += 1;
                    }
                }
            }
            Ok(())
        })?;
        info!(
            "run `{label}` finished: {} at t = {:.4} after {} steps",
            traj.termination.label(),
            traj.final_state.t,
            traj.steps
        );
        Ok(RunRecord {
            label: label.to_string(),
            trajectory: traj,
            aux,
            companion_violations: track.as_ref().map_or(0, |t| t.violations),
            companion_final: track.map(|t| t.state),
        })
    }
}

#[allow(clippy::too_many_arguments)]
fn save_checkpoint(
    dir: &Path,
    cfg: &ExperimentConfig,
    index: usize,
    label: &str,
    ev: &StepEvent<'_>,
    theta_hat: f64,
    aux: &[AuxRecord],
    track: Option<&CompanionTrack>,
) -> Result<()> {
    let path = dir.join(format!("{label}.ckpt"));
    checkpoint::write_checkpoint(&path, ev.state)?;
    let prev = match ev.prev {
        Some(p) => {
            let pp = dir.join(format!("{label}.prev.ckpt"));
            checkpoint::write_checkpoint(&pp, p)?;
            Some(pp)
        }
        None => None,
    };
    let companion = match track {
        Some(tr) => {
            let cp = dir.join(format!("{label}.companion.ckpt"));
            let grid = *tr.state.v.grid();
            let mut holder = GraphState::new(vec![0.0; grid.dim()], ScalarField::zeros(grid, 0), tr.state.v.clone())?;
            holder.t = tr.state.t;
            checkpoint::write_checkpoint(&cp, &holder)?;
            Some(cp)
        }
        None => None,
    };
    let meta = CheckpointMeta {
        config: cfg.clone(),
        run_index: index,
        run_label: label.to_string(),
        step: ev.step,
        anchor: ev.state.anchor,
        theta_hat,
        samples: ev.samples_before.iter().map(SampleRecord::from).collect(),
        aux: aux.to_vec(),
        prev,
        companion,
        companion_violations: track.map_or(0, |t| t.violations),
    };
    checkpoint::write_meta(&path, &meta)
}

/// Loads a checkpoint written by [`Runner`] into a config and resume point.
pub fn load_resume(path: &Path) -> Result<(ExperimentConfig, ResumePoint)> {
    let meta = checkpoint::read_meta(path)?;
    let mut state = checkpoint::read_checkpoint(path)?;
    state.anchor = meta.anchor;
    let load_side = |p: &Option<PathBuf>| -> Result<Option<GraphState>> {
        p.as_ref()
            .map(|p| {
                let mut s = checkpoint::read_checkpoint(p)?;
                s.anchor = meta.anchor;
                Ok(s)
            })
            .transpose()
    };
    let prev = load_side(&meta.prev)?;
    let companion = load_side(&meta.companion)?.map(|s| CompanionState { v: s.u, t: s.t });
    let start = FlowStart {
        state,
        step: meta.step,
        samples: meta.samples.iter().map(MonitorSample::from).collect(),
        prev,
    };
    Ok((
        meta.config,
        ResumePoint {
            run_index: meta.run_index,
            start,
            aux: meta.aux,
            companion,
            companion_violations: meta.companion_violations,
        },
    ))
}

/// Headline numbers of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Headline {
    pub termination: String,
    pub final_osc_theta: f64,
    pub c2: Option<f64>,
    pub rho_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// `χ̂ = c·dq + dφ̂` as a state with `u = 0`.
    pub reference: GraphState,
    pub theta_hat: f64,
    /// `osc θ(χ̂)`.
    pub residual: f64,
    pub record: RunRecord,
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub amplitude: f64,
    pub rho0: f64,
    pub rho_sup: f64,
    pub q0: f64,
    pub q_sup: f64,
    pub termination: String,
    pub fit: Option<DecayFit>,
    pub max_principle: MaxPrincipleCheck,
}

#[derive(Debug, Clone)]
pub struct UniquenessResult {
    pub limit_distance: f64,
    pub harmonic_difference: Vec<f64>,
    /// `sup |χ_∞ − χ′_∞ − (c − c′)|`.
    pub exact_part_distance: f64,
}

#[derive(Debug, Clone)]
pub struct LemmaResult {
    pub coarse_points: usize,
    /// `[θ, τ, ϑ, ρ, Θ]` residual sup over samples, coarse and fine.
    pub coarse: [f64; 5],
    pub fine: [f64; 5],
    pub ratios: [f64; 5],
    /// `ρ` residual without the curvature commutator, coarse and fine.
    pub rho_without_xi1: [f64; 2],
    pub passed: bool,
}

pub const LEMMA_NAMES: [&str; 5] = ["theta", "tau", "vartheta", "rho", "bigtheta"];

#[derive(Debug, Clone)]
pub struct HarnackResult {
    pub violations: u64,
    pub sup_v_t1: f64,
    pub inf_v_t2: f64,
    pub harnack_sup: f64,
    /// `sup_t sup_x F / (1 + t)`.
    pub harnack_bound: f64,
    pub oscillation: OscillationSeries,
    /// Mean of the last five unit ratios and their spread (max − min) / 2.
    pub ratio_tail: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub theta_dot_fit: DecayFit,
    pub utilde_fit: DecayFit,
    pub relative_gap: f64,
}

#[derive(Debug, Clone)]
pub enum Details {
    Bootstrap,
    Stability(Vec<StabilityRow>),
    Uniqueness(UniquenessResult),
    Lemma(LemmaResult),
    Harnack(HarnackResult),
    Convergence(ConvergenceResult),
}

/// Extra CSV written beside `monitors.csv`.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: Scenario,
    pub bootstrap: Option<BootstrapResult>,
    pub primary: RunRecord,
    pub runs: Vec<RunRecord>,
    pub headline: Headline,
    pub lines: Vec<String>,
    pub tables: Vec<Table>,
    pub details: Details,
    /// Pass/fail for checks that have one (lemma_check).
    pub verdict: Option<bool>,
}

fn osc_fit(samples: &[MonitorSample], window: [f64; 2]) -> Option<DecayFit> {
    let t: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.theta_dot_sup - s.theta_dot_inf).collect();
    decay_fit(&t, &y, window).ok()
}

fn sup_over<F: Fn(&MonitorSample) -> f64>(samples: &[MonitorSample], f: F) -> f64 {
    samples.iter().map(f).fold(0.0, f64::max)
}

fn headline(rec: &RunRecord, window: [f64; 2]) -> Headline {
    let s = &rec.trajectory.samples;
    let rho0 = s.first().map_or(0.0, |x| x.rho_max);
    Headline {
        termination: rec.trajectory.termination.label().to_string(),
        final_osc_theta: s.last().map_or(f64::NAN, |x| x.osc_theta),
        c2: osc_fit(s, window).map(|f| f.c2),
        rho_ratio: (rho0 > 0.0).then(|| sup_over(s, |x| x.rho_max) / rho0),
    }
}

fn suite_for(cfg: &ExperimentConfig, theta_hat: f64) -> MonitorSuite {
    MonitorSuite {
        k1: cfg.k1,
        k2: cfg.k2,
        theta_hat,
        upsilon: true,
        residuals: false,
    }
}

/// Runs the flow from `c·dq` until it is special Lagrangian.
pub fn run_bootstrap(runner: &mut Runner, metric: &MetricField, harmonic: &[f64]) -> Result<BootstrapResult> {
    let cfg = runner.cfg.clone();
    let grid = *metric.grid();
    let state0 = GraphState::harmonic_only(grid, harmonic.to_vec())?;
    let flow = FlowConfig {
        t_max: cfg.bootstrap.t_max,
        osc_tol: cfg.bootstrap.osc_tol,
        ..cfg.flow
    };
    let record = runner.flow("bootstrap", state0, metric, &flow, &suite_for(&cfg, 0.0), None)?;
    let traj = &record.trajectory;
    if traj.termination != Termination::Converged {
        return Err(Error::NotConverged {
            t_max: flow.t_max,
            osc: traj.samples.last().map_or(f64::NAN, |s| s.osc_theta),
        });
    }
    let (phi, _) = recenter(&traj.final_state.u, metric)?;
    let reference = GraphState::new(harmonic.to_vec(), phi, ScalarField::zeros(grid, 0))?;
    let theta = AngleBundle::compute(&reference, metric)?.theta;
    let theta_hat = 0.5 * (theta.max() + theta.min());
    Ok(BootstrapResult {
        reference,
        theta_hat,
        residual: theta.osc(),
        record,
    })
}

fn perturbed(reference: &GraphState, u0: ScalarField) -> Result<GraphState> {
    GraphState::new(reference.harmonic.clone(), reference.base_potential.clone(), u0)
}

/// Runs the configured scenario and returns its outcome without writing files.
pub fn run_scenario(runner: &mut Runner) -> Result<ScenarioOutcome> {
    let cfg = runner.cfg.clone();
    cfg.validate()?;
    let metric = runner.metric()?;
    let grid = *metric.grid();
    match cfg.scenario {
        Scenario::Bootstrap => {
            let b = run_bootstrap(runner, &metric, &cfg.harmonic)?;
            let lines = vec![
                format!("measured reference angle theta_hat = {}", fmt_f64(b.theta_hat)),
                format!("special Lagrangian residual osc theta(chi_hat) = {}", fmt_f64(b.residual)),
                format!("sup |phi_hat| = {}", fmt_f64(b.reference.base_potential.sup_abs())),
            ];
            Ok(ScenarioOutcome {
                scenario: cfg.scenario,
                headline: headline(&b.record, cfg.convergence.window),
                primary: b.record.clone(),
                runs: vec![b.record.clone()],
                bootstrap: Some(b),
                lines,
                tables: Vec::new(),
                details: Details::Bootstrap,
                verdict: None,
            })
        }
        Scenario::Stability => stability(runner, &metric),
        Scenario::Uniqueness => uniqueness(runner, &metric),
        Scenario::LemmaCheck => lemma_check(runner, &metric),
        Scenario::Harnack => harnack(runner, &metric),
        Scenario::Convergence => {
            let b = run_bootstrap(runner, &metric, &cfg.harmonic)?;
            let u0 = cfg.initial_potential().sample(grid);
            let rec = runner.flow(
                "convergence",
                perturbed(&b.reference, u0)?,
                &metric,
                &cfg.flow,
                &suite_for(&cfg, b.theta_hat),
                None,
            )?;
            let w = cfg.convergence.window;
            let s = &rec.trajectory.samples;
            let theta_dot_fit = osc_fit(s, w).ok_or(Error::NoSamples)?;
            let t: Vec<f64> = rec.aux.iter().map(|a| a.t).collect();
            let y: Vec<f64> = rec.aux.iter().map(|a| a.utilde_sup).collect();
            let utilde_fit = decay_fit(&t, &y, w)?;
            let relative_gap = (utilde_fit.c2 - theta_dot_fit.c2).abs() / theta_dot_fit.c2.abs();
            let lines = vec![
                format!(
                    "osc theta_dot fit on [{}, {}]: C1 = {}, C2 = {}, R^2 = {}",
                    w[0],
                    w[1],
                    fmt_f64(theta_dot_fit.c1),
                    fmt_f64(theta_dot_fit.c2),
                    fmt_f64(theta_dot_fit.r_squared)
                ),
                format!(
                    "sup |u_tilde| fit: C1 = {}, C2 = {}, R^2 = {}",
                    fmt_f64(utilde_fit.c1),
                    fmt_f64(utilde_fit.c2),
                    fmt_f64(utilde_fit.r_squared)
                ),
                format!("relative gap between rates = {}", fmt_f64(relative_gap)),
            ];
            let rows = rec
                .aux
                .iter()
                .zip(s)
                .map(|(a, m)| vec![Some(a.t), Some(a.utilde_sup), Some(m.theta_dot_sup - m.theta_dot_inf)])
                .collect();
            Ok(ScenarioOutcome {
                scenario: cfg.scenario,
                headline: headline(&rec, w),
                primary: rec.clone(),
                runs: vec![b.record.clone(), rec],
                bootstrap: Some(b),
                lines,
                tables: vec![Table {
                    file: "convergence.csv".into(),
                    header: vec!["t".into(), "utilde_sup".into(), "osc_theta_dot".into()],
                    rows,
                }],
                details: Details::Convergence(ConvergenceResult {
                    theta_dot_fit,
                    utilde_fit,
                    relative_gap,
                }),
                verdict: None,
            })
        }
    }
}

fn stability(runner: &mut Runner, metric: &MetricField) -> Result<ScenarioOutcome> {
    let cfg = runner.cfg.clone();
    let grid = *metric.grid();
    let b = run_bootstrap(runner, metric, &cfg.harmonic)?;
    let shape = cfg.initial_potential().sample(grid);
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for a in cfg.stability.ladder() {
        let rec = runner.flow(
            &format!("amplitude_{}", fmt_f64(a)),
            perturbed(&b.reference, shape.scale(a))?,
            metric,
            &cfg.flow,
            &suite_for(&cfg, b.theta_hat),
            None,
        )?;
        let s = &rec.trajectory.samples;
        let first = s.first().copied().unwrap_or_default();
        rows.push(StabilityRow {
            amplitude: a,
            rho0: first.rho_max,
            rho_sup: sup_over(s, |x| x.rho_max),
            q0: first.q_max,
            q_sup: sup_over(s, |x| x.q_max),
            termination: rec.trajectory.termination.label().to_string(),
            fit: osc_fit(s, cfg.stability.fit_window),
            max_principle: MaxPrincipleCheck::of(s, 1e-8),
        });
        runs.push(rec);
    }
    let threshold = rows
        .iter()
        .filter(|r| r.termination != "diverged" && r.rho_sup <= 4.0 * r.rho0)
        .map(|r| r.amplitude)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))));
    let mut lines = vec![
        "amplitude  rho(0)  sup rho  sup Q / Q(0)  termination  C2  R^2  max-principle violations".to_string(),
    ];
    for r in &rows {
        let (c2, r2) = r.fit.map_or(("n/a".into(), "n/a".into()), |f| (fmt_f64(f.c2), fmt_f64(f.r_squared)));
        let qr = if r.q0 > 0.0 { fmt_f64(r.q_sup / r.q0) } else { "n/a".into() };
        let mp = r.max_principle;
        lines.push(format!(
            "{}  {}  {}  {}  {}  {}  {}  {}/{}/{}",
            fmt_f64(r.amplitude),
            fmt_f64(r.rho0),
            fmt_f64(r.rho_sup),
            qr,
            r.termination,
            c2,
            r2,
            mp.osc_violations,
            mp.sup_violations,
            mp.inf_violations
        ));
    }
    lines.push(match threshold {
        Some(a) => format!("empirical stability threshold: largest amplitude without divergence and with sup rho <= 4 rho(0) is {}", fmt_f64(a)),
        None => "empirical stability threshold: no amplitude met sup rho <= 4 rho(0)".into(),
    });
    let table_rows = rows
        .iter()
        .map(|r| {
            vec![
                Some(r.amplitude),
                Some(r.rho0),
                Some(r.rho_sup),
                Some(r.q0),
                Some(r.q_sup),
                Some(if r.termination == "diverged" { 0.0 } else { 1.0 }),
                r.fit.map(|f| f.c2),
                r.fit.map(|f| f.r_squared),
                Some((r.max_principle.osc_violations + r.max_principle.sup_violations + r.max_principle.inf_violations) as f64),
            ]
        })
        .collect();
    let primary_idx = rows.iter().position(|r| r.amplitude > 0.0).unwrap_or(0);
    let primary = runs[primary_idx].clone();
    Ok(ScenarioOutcome {
        scenario: cfg.scenario,
        headline: headline(&primary, cfg.stability.fit_window),
        primary,
        runs,
        bootstrap: Some(b),
        lines,
        tables: vec![Table {
            file: "stability.csv".into(),
            header: ["amplitude", "rho0", "rho_sup", "q0", "q_sup", "survived", "c2", "r_squared", "max_principle_violations"]
                .map(String::from)
                .to_vec(),
            rows: table_rows,
        }],
        details: Details::Stability(rows),
        verdict: None,
    })
}

fn uniqueness(runner: &mut Runner, metric: &MetricField) -> Result<ScenarioOutcome> {
    let cfg = runner.cfg.clone();
    let grid = *metric.grid();
    let b = run_bootstrap(runner, metric, &cfg.harmonic)?;
    let c_twin = cfg.uniqueness.harmonic_twin.clone().unwrap_or_else(|| cfg.harmonic.clone());
    let b_twin = if c_twin == cfg.harmonic {
        None
    } else {
        Some(run_bootstrap(runner, metric, &c_twin)?)
    };
    let suite = suite_for(&cfg, b.theta_hat);
    let run_a = runner.flow(
        "primary",
        perturbed(&b.reference, cfg.initial_potential().sample(grid))?,
        metric,
        &cfg.flow,
        &suite,
        None,
    )?;
    let ref_twin = b_twin.as_ref().map_or(&b.reference, |x| &x.reference);
    let suite_twin = suite_for(&cfg, b_twin.as_ref().map_or(b.theta_hat, |x| x.theta_hat));
    let run_b = runner.flow(
        "twin",
        perturbed(ref_twin, cfg.uniqueness.twin.sample(grid))?,
        metric,
        &cfg.flow,
        &suite_twin,
        None,
    )?;
    for r in [&run_a, &run_b] {
        if r.trajectory.termination != Termination::Converged {
            return Err(Error::NotConverged {
                t_max: cfg.flow.t_max,
                osc: r.trajectory.samples.last().map_or(f64::NAN, |s| s.osc_theta),
            });
        }
    }
    let chi_a = assemble_chi(&run_a.trajectory.final_state, metric)?;
    let chi_b = assemble_chi(&run_b.trajectory.final_state, metric)?;
    let diff = chi_a.sub(&chi_b);
    let harmonic_difference: Vec<f64> = cfg.harmonic.iter().zip(&c_twin).map(|(a, b)| a - b).collect();
    let n = grid.dim();
    let mut exact = diff.clone();
    for p in 0..grid.len() {
        for (k, h) in harmonic_difference.iter().enumerate().take(n) {
            exact.at_mut(p)[k] -= h;
        }
    }
    let res = UniquenessResult {
        limit_distance: diff.sup_abs(),
        harmonic_difference,
        exact_part_distance: exact.sup_abs(),
    };
    let lines = vec![
        format!("sup distance between limit 1-forms = {}", fmt_f64(res.limit_distance)),
        format!(
            "harmonic difference c - c' = [{}]",
            res.harmonic_difference.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
        ),
        format!("sup distance after removing c - c' = {}", fmt_f64(res.exact_part_distance)),
    ];
    Ok(ScenarioOutcome {
        scenario: cfg.scenario,
        headline: headline(&run_a, cfg.convergence.window),
        primary: run_a.clone(),
        runs: vec![run_a, run_b],
        bootstrap: Some(b),
        lines,
        tables: Vec::new(),
        details: Details::Uniqueness(res),
        verdict: None,
    })
}

fn residual_maxima(samples: &[MonitorSample]) -> [f64; 5] {
    let mut out = [0.0f64; 5];
    for s in samples {
        for (o, r) in out.iter_mut().zip(s.residuals.as_array()) {
            if let Some(r) = r {
                *o = o.max(r);
            }
        }
    }
    out
}

fn lemma_check(runner: &mut Runner, metric: &MetricField) -> Result<ScenarioOutcome> {
    let cfg = runner.cfg.clone();
    let coarse_grid = *metric.grid();
    let fine = build_metric(&cfg.metric, coarse_grid.refined())?;
    let (dt_coarse, _) = flow_dt(
        metric,
        &FlowConfig {
            t_max: 1.0,
            ..cfg.flow
        },
    )?;
    let t_check = cfg
        .lemma
        .t_check
        .unwrap_or(4.0 * crate::flow::stable_dt(metric, cfg.flow.cfl)?);
    let _ = dt_coarse;
    let flow = FlowConfig {
        t_max: t_check,
        osc_tol: 0.0,
        sample_every: 1,
        checkpoint_every: cfg.flow.checkpoint_every,
        ..cfg.flow
    };
    let shape = cfg.initial_potential();
    let mut maxima = Vec::new();
    let mut ablation = Vec::new();
    let mut runs = Vec::new();
    for (label, m) in [("coarse", metric), ("fine", &fine)] {
        let grid = *m.grid();
        let reference = GraphState::harmonic_only(grid, cfg.harmonic.clone())?;
        let theta = AngleBundle::compute(&reference, m)?.theta;
        let theta_hat = 0.5 * (theta.max() + theta.min());
        let state0 = perturbed(&reference, shape.sample(grid))?;
        let suite = MonitorSuite {
            residuals: true,
            ..suite_for(&cfg, theta_hat)
        };
        let rec = runner.flow(label, state0.clone(), m, &flow, &suite, None)?;
        if let Termination::Diverged { reason, .. } = &rec.trajectory.termination {
            return Err(Error::Diverged {
                step: rec.trajectory.steps,
                t: rec.trajectory.final_state.t,
                reason: reason.clone(),
            });
        }
        maxima.push(residual_maxima(&rec.trajectory.samples));
        let dt = rec.trajectory.dt;
        let s1 = step_rk4(&state0, m, dt)?;
        let s2 = step_rk4(&s1, m, dt)?;
        ablation.push(residual_rho(&LemmaWindow::new(&[&state0, &s1, &s2])?, m, false)?);
        runs.push(rec);
    }
    let (coarse, fine_r) = (maxima[0], maxima[1]);
    let mut ratios = [0.0; 5];
    for k in 0..5 {
        ratios[k] = coarse[k] / fine_r[k];
    }
    // identically vanishing residuals (e.g. u0 = 0) pass trivially
    let passed = (0..5).all(|k| ratios[k] >= cfg.lemma.min_ratio || coarse[k] < 1e-13);
    let mut lines = vec![format!(
        "refinement pair N = {} -> {}, t_check = {}",
        coarse_grid.points_per_axis(),
        coarse_grid.points_per_axis() * 2,
        fmt_f64(t_check)
    )];
    for k in 0..5 {
        lines.push(format!(
            "residual {:<9} coarse {}  fine {}  ratio {}",
            LEMMA_NAMES[k],
            fmt_f64(coarse[k]),
            fmt_f64(fine_r[k]),
            fmt_f64(ratios[k])
        ));
    }
    lines.push(format!(
        "rho residual without curvature commutator: coarse {}  fine {}",
        fmt_f64(ablation[0]),
        fmt_f64(ablation[1])
    ));
    lines.push(format!("verdict: {}", if passed { "PASS" } else { "FAIL" }));
    let res = LemmaResult {
        coarse_points: coarse_grid.points_per_axis(),
        coarse,
        fine: fine_r,
        ratios,
        rho_without_xi1: [ablation[0], ablation[1]],
        passed,
    };
    let table_rows = (0..5)
        .map(|k| vec![Some(k as f64), Some(coarse[k]), Some(fine_r[k]), Some(ratios[k])])
        .collect();
    Ok(ScenarioOutcome {
        scenario: cfg.scenario,
        headline: headline(&runs[0], cfg.convergence.window),
        primary: runs[0].clone(),
        runs,
        bootstrap: None,
        lines,
        tables: vec![Table {
            file: "lemma_residuals.csv".into(),
            header: ["lemma", "coarse", "fine", "ratio"].map(String::from).to_vec(),
            rows: table_rows,
        }],
        details: Details::Lemma(res),
        verdict: Some(passed),
    })
}

/// Value at the first aux record with `t >= at`.
fn aux_at(aux: &[AuxRecord], at: f64, f: impl Fn(&AuxRecord) -> Option<f64>) -> Option<f64> {
    aux.iter().find(|a| a.t >= at - 1e-12).and_then(f)
}

fn harnack(runner: &mut Runner, metric: &MetricField) -> Result<ScenarioOutcome> {
    let cfg = runner.cfg.clone();
    let grid = *metric.grid();
    let b = run_bootstrap(runner, metric, &cfg.harmonic)?;
    let v0 = cfg.harnack.v0.sample(grid);
    let rec = runner.flow(
        "harnack",
        perturbed(&b.reference, cfg.initial_potential().sample(grid))?,
        metric,
        &cfg.flow,
        &suite_for(&cfg, b.theta_hat),
        Some(v0),
    )?;
    let h = cfg.harnack.config();
    let sup_v_t1 = aux_at(&rec.aux, h.t1, |a| a.v_sup).unwrap_or(f64::NAN);
    let inf_v_t2 = aux_at(&rec.aux, h.t2, |a| a.v_inf).unwrap_or(f64::NAN);
    let harnack_sup = rec.aux.iter().filter_map(|a| a.harnack_sup).fold(f64::NEG_INFINITY, f64::max);
    let harnack_bound = rec
        .aux
        .iter()
        .filter_map(|a| a.harnack_sup.map(|f| f / (1.0 + a.t)))
        .fold(f64::NEG_INFINITY, f64::max);
    let oscillation = oscillation_series(&rec.trajectory.samples);
    let tail = &oscillation.unit_ratios;
    let ratio_tail = (tail.len() >= 5).then(|| {
        let last = &tail[tail.len() - 5..];
        let mean = last.iter().sum::<f64>() / 5.0;
        let (lo, hi) = last.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        (mean, 0.5 * (hi - lo))
    });
    let mut lines = vec![
        format!("companion maximum-principle violations: {}", rec.companion_violations),
        format!(
            "sup v(t1 = {}) = {}, inf v(t2 = {}) = {}, ratio = {}",
            h.t1,
            fmt_f64(sup_v_t1),
            h.t2,
            fmt_f64(inf_v_t2),
            fmt_f64(sup_v_t1 / inf_v_t2)
        ),
        format!("sup F = {}, sup F / (1 + t) = {}", fmt_f64(harnack_sup), fmt_f64(harnack_bound)),
        format!("osc theta_dot monotone: {}", oscillation.monotone_ok),
        format!(
            "unit-time contraction ratios: [{}]",
            tail.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
        ),
    ];
    if let Some((m, spread)) = ratio_tail {
        lines.push(format!("last five ratios: mean {m:.4}, half-spread {spread:.4}"));
    }
    let rows = rec
        .aux
        .iter()
        .map(|a| vec![Some(a.t), a.v_sup, a.v_inf, a.harnack_sup])
        .collect();
    let result = HarnackResult {
        violations: rec.companion_violations,
        sup_v_t1,
        inf_v_t2,
        harnack_sup,
        harnack_bound,
        oscillation,
        ratio_tail,
    };
    Ok(ScenarioOutcome {
        scenario: cfg.scenario,
        headline: headline(&rec, cfg.convergence.window),
        primary: rec.clone(),
        runs: vec![b.record.clone(), rec],
        bootstrap: Some(b),
        lines,
        tables: vec![Table {
            file: "companion.csv".into(),
            header: ["t", "v_sup", "v_inf", "harnack_sup"].map(String::from).to_vec(),
            rows,
        }],
        details: Details::Harnack(result),
        verdict: None,
    })
}

/// Report text: termination, headline numbers, scenario lines.
pub fn report_text(cfg: &ExperimentConfig, outcome: &ScenarioOutcome) -> String {
    let h = &outcome.headline;
    let opt = |x: Option<f64>| x.map_or("n/a".to_string(), fmt_f64);
    let mut s = format!(
        "scenario: {}\nmetric: {}\ngrid: n = {}, N = {}\n",
        cfg.scenario.name(),
        cfg.metric.family,
        cfg.n,
        cfg.points
    );
    s.push_str(&format!("termination: {}\n", h.termination));
    if let Termination::Diverged { step, t, reason } = &outcome.primary.trajectory.termination {
        s.push_str(&format!("divergence: step {step}, t = {}, {reason}\n", fmt_f64(*t)));
    }
    s.push_str(&format!("final osc theta: {}\n", fmt_f64(h.final_osc_theta)));
    s.push_str(&format!("fitted C2: {}\n", opt(h.c2)));
    s.push_str(&format!("sup_t rho / rho(0): {}\n", opt(h.rho_ratio)));
    s.push_str(&format!(
        "samples: {} (dt = {}, steps = {})\n",
        outcome.primary.trajectory.samples.len(),
        fmt_f64(outcome.primary.trajectory.dt),
        outcome.primary.trajectory.steps
    ));
    if let Some(b) = &outcome.bootstrap {
        s.push_str(&format!(
            "reference angle theta_hat: {} (osc theta(chi_hat) = {})\n",
            fmt_f64(b.theta_hat),
            fmt_f64(b.residual)
        ));
    }
    s.push_str("fourth-derivative quantity upsilon uses nested covariant stencils\n\n");
    for l in &outcome.lines {
        s.push_str(l);
        s.push('\n');
    }
    s
}

/// Writes `monitors.csv`, `report.txt`, `plots/*.svg` and scenario tables.
pub fn emit_outputs(cfg: &ExperimentConfig, outcome: &ScenarioOutcome, dir: &Path) -> Result<()> {
    let samples = &outcome.primary.trajectory.samples;
    write_atomic(&dir.join("monitors.csv"), &output::monitors_csv(samples)?)?;
    for run in &outcome.runs {
        if run.label != outcome.primary.label && !run.trajectory.samples.is_empty() {
            write_atomic(
                &dir.join("runs").join(format!("{}.csv", run.label)),
                &output::monitors_csv(&run.trajectory.samples)?,
            )?;
        }
    }
    for t in &outcome.tables {
        let header: Vec<&str> = t.header.iter().map(String::as_str).collect();
        write_atomic(&dir.join(&t.file), &table_csv(&header, &t.rows)?)?;
    }
    for (name, svg) in output::trajectory_plots(samples) {
        write_atomic(&dir.join("plots").join(name), svg.as_bytes())?;
    }
    write_atomic(&dir.join("report.txt"), report_text(cfg, outcome).as_bytes())
}

/// Runs a scenario end to end: checkpoints while running, outputs at the end.
pub fn execute(cfg: ExperimentConfig, resume: Option<ResumePoint>) -> Result<ScenarioOutcome> {
    let dir = cfg.output_dir.clone();
    let mut runner = Runner::new(cfg.clone()).with_checkpoints(dir.join("checkpoints"));
    if let Some(r) = resume {
        runner = runner.with_resume(r);
    }
    let outcome = run_scenario(&mut runner)?;
    emit_outputs(&cfg, &outcome, &dir)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_principle_counter() {
        let mk = |t: f64, sup: f64, inf: f64| MonitorSample {
            t,
            theta_dot_sup: sup,
            theta_dot_inf: inf,
            osc_theta: sup - inf,
            ..Default::default()
        };
        let ok = [mk(0.0, 1.0, -1.0), mk(1.0, 0.5, -0.5)];
        assert!(MaxPrincipleCheck::of(&ok, 1e-8).ok());
        let bad = [mk(0.0, 1.0, -1.0), mk(1.0, 1.0 + 1e-15, -0.5)];
        let c = MaxPrincipleCheck::of(&bad, 1e-8);
        assert_eq!(c.sup_violations, 1);
        assert_eq!(c.osc_violations, 0);
    }

    #[test]
    fn aux_lookup_takes_first_time_at_or_after() {
        let aux: Vec<AuxRecord> = (0..5)
            .map(|k| AuxRecord {
                t: k as f64 * 0.5,
                v_sup: Some(k as f64),
                ..Default::default()
            })
            .collect();
        assert_eq!(aux_at(&aux, 1.0, |a| a.v_sup), Some(2.0));
        assert_eq!(aux_at(&aux, 0.9, |a| a.v_sup), Some(2.0));
        assert_eq!(aux_at(&aux, 9.0, |a| a.v_sup), None);
    }
}
