//! Experiment configuration: TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::metric::MetricSpec;
use crate::monitors::HarnackConfig;
use crate::trig::TrigPoly;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Bootstrap,
    Stability,
    Uniqueness,
    LemmaCheck,
    Harnack,
    Convergence,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Bootstrap => "bootstrap",
            Scenario::Stability => "stability",
            Scenario::Uniqueness => "uniqueness",
            Scenario::LemmaCheck => "lemma_check",
            Scenario::Harnack => "harnack",
            Scenario::Convergence => "convergence",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub osc_tol: f64,
    pub t_max: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            osc_tol: 1e-10,
            t_max: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    /// Smallest nonzero amplitude; the ladder doubles up to `amplitude_max`.
    pub amplitude_min: f64,
    pub amplitude_max: f64,
    pub include_zero: bool,
    pub fit_window: [f64; 2],
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            amplitude_min: 0.0125,
            amplitude_max: 0.1,
            include_zero: true,
            fit_window: [1.0, 10.0],
        }
    }
}

impl StabilityConfig {
    pub fn ladder(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.include_zero {
            out.push(0.0);
        }
        let mut a = self.amplitude_min;
        while a > 0.0 && a <= self.amplitude_max * (1.0 + 1e-12) {
            out.push(a);
            a *= 2.0;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniquenessConfig {
    /// Second initial potential `u₀′`.
    pub twin: TrigPoly,
    /// Harmonic part of the twin; defaults to the primary one.
    pub harmonic_twin: Option<Vec<f64>>,
}

impl Default for UniquenessConfig {
    fn default() -> Self {
        Self {
            twin: TrigPoly::zero(),
            harmonic_twin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    /// Integration time per grid; defaults to four coarse steps.
    pub t_check: Option<f64>,
    /// Minimum residual ratio between `N` and `2N`.
    pub min_ratio: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            t_check: None,
            min_ratio: 11.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackSection {
    pub alpha: f64,
    pub t1: f64,
    pub t2: f64,
    /// Positive initial datum of the companion equation.
    pub v0: TrigPoly,
}

impl Default for HarnackSection {
    fn default() -> Self {
        let h = HarnackConfig::default();
        Self {
            alpha: h.alpha,
            t1: h.t1,
            t2: h.t2,
            v0: "1 + 0.1*cos(q1)".parse().expect("valid default"),
        }
    }
}

impl HarnackSection {
    pub fn config(&self) -> HarnackConfig {
        HarnackConfig {
            alpha: self.alpha,
            t1: self.t1,
            t2: self.t2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub window: [f64; 2],
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { window: [1.0, 10.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomInitial {
    pub kmax: u32,
    pub amplitude: f64,
}

fn default_metric() -> MetricSpec {
    MetricSpec::flat()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub k1: f64,
    #[serde(default = "one")]
    pub k2: f64,
    #[serde(default)]
    pub harmonic: Vec<f64>,
    #[serde(default = "TrigPoly::zero")]
    pub initial: TrigPoly,
    /// Replaces `initial` by a seeded band-limited random potential.
    #[serde(default)]
    pub random_initial: Option<RandomInitial>,
    #[serde(default = "default_metric")]
    pub metric: MetricSpec,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub uniqueness: UniquenessConfig,
    #[serde(default)]
    pub lemma: LemmaConfig,
    #[serde(default)]
    pub harnack: HarnackSection,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
}

/// Every configuration key with its default and meaning.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("scenario", "-", "bootstrap | stability | uniqueness | lemma_check | harnack | convergence"),
    ("n", "-", "torus dimension, 1..=3"),
    ("N", "-", "grid points per axis, power of two >= 16"),
    ("seed", "0", "seed for randomized initial data"),
    ("output_dir", "out", "directory for monitors.csv, report.txt, plots/, checkpoints/"),
    ("k1", "1", "weight of vartheta in Q"),
    ("k2", "1", "weight of tau in Q"),
    ("harmonic", "zeros", "constant coefficients c of the harmonic part"),
    ("initial", "0", "initial potential u0 (trig polynomial); amplitude shape for stability"),
    ("random_initial.kmax", "-", "band limit of a seeded random u0 (replaces initial)"),
    ("random_initial.amplitude", "-", "amplitude of the seeded random u0"),
    ("metric.family", "flat", "flat | conformal | diagonal"),
    ("metric.f", "-", "conformal factor f in g = exp(2f) delta"),
    ("metric.d", "-", "diagonal entries d_i of g (one per axis)"),
    ("metric.derivatives", "analytic", "analytic | stencil"),
    ("flow.cfl", "0.2", "step factor in dt = cfl h^2 / (2n sup lambda_max(g^-1)), in (0, 0.5]"),
    ("flow.t_max", "10", "final time"),
    ("flow.osc_tol", "1e-10", "stop once osc theta falls below this"),
    ("flow.sample_every", "10", "steps between monitor samples"),
    ("flow.checkpoint_every", "0", "steps between checkpoints (0 disables)"),
    ("bootstrap.osc_tol", "1e-10", "osc theta accepted as special Lagrangian"),
    ("bootstrap.t_max", "60", "time budget of the bootstrap run"),
    ("stability.amplitude_min", "0.0125", "smallest nonzero amplitude of the x2 ladder"),
    ("stability.amplitude_max", "0.1", "largest amplitude of the ladder"),
    ("stability.include_zero", "true", "add a zero-amplitude row"),
    ("stability.fit_window", "[1, 10]", "time window of the decay fit"),
    ("uniqueness.twin", "0", "second initial potential u0'"),
    ("uniqueness.harmonic_twin", "harmonic", "harmonic part of the twin run"),
    ("lemma.t_check", "4 coarse steps", "integration time of each refinement run"),
    ("lemma.min_ratio", "11", "required residual ratio between N and 2N"),
    ("harnack.alpha", "1.5", "Harnack exponent, in (1, 2)"),
    ("harnack.t1", "1", "earlier comparison time"),
    ("harnack.t2", "2", "later comparison time"),
    ("harnack.v0", "1 + 0.1*cos(q1)", "positive initial datum of the companion equation"),
    ("convergence.window", "[1, 10]", "time window of the decay fits"),
];

/// Help text listing [`CONFIG_KEYS`].
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (TOML; override with --set key=value):\n");
    for (k, d, m) in CONFIG_KEYS {
        s.push_str(&format!("  {k:<28} [{d}] {m}\n"));
    }
    s
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `key.path=value` to a TOML table, creating sections as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if cfg.harmonic.is_empty() {
            cfg.harmonic = vec![0.0; cfg.n];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n) {
            return Err(Error::Config(format!("n = {} not in 1..=3", self.n)));
        }
        if self.points < 16 || !self.points.is_power_of_two() {
            return Err(Error::Config(format!("N = {} must be a power of two >= 16", self.points)));
        }
        if self.harmonic.len() != self.n {
            return Err(Error::Config(format!(
                "harmonic has {} entries, n = {}",
                self.harmonic.len(),
                self.n
            )));
        }
        let axes = |p: &TrigPoly, name: &str| match p.max_axis() {
            Some(a) if a >= self.n => Err(Error::Config(format!("{name} uses q{} but n = {}", a + 1, self.n))),
            _ => Ok(()),
        };
        axes(&self.initial, "initial")?;
        axes(&self.uniqueness.twin, "uniqueness.twin")?;
        axes(&self.harnack.v0, "harnack.v0")?;
        if let Some(h) = &self.uniqueness.harmonic_twin {
            if h.len() != self.n {
                return Err(Error::Config("uniqueness.harmonic_twin length must equal n".into()));
            }
        }
        self.metric.validate(self.n)?;
        self.flow.validate()?;
        self.harnack.config().validate()?;
        if !(self.stability.amplitude_min > 0.0 && self.stability.amplitude_max >= self.stability.amplitude_min) {
            return Err(Error::Config("stability amplitudes must satisfy 0 < amplitude_min <= amplitude_max".into()));
        }
        for (name, w) in [("stability.fit_window", self.stability.fit_window), ("convergence.window", self.convergence.window)] {
            if !(w[0] < w[1]) {
                return Err(Error::Config(format!("{name} must be increasing")));
            }
        }
        if let Some(r) = &self.random_initial {
            if r.kmax == 0 || !(r.amplitude >= 0.0) {
                return Err(Error::Config("random_initial needs kmax >= 1 and amplitude >= 0".into()));
            }
        }
        Ok(())
    }

    /// `initial`, or the seeded random potential when configured.
    pub fn initial_potential(&self) -> TrigPoly {
        match &self.random_initial {
            Some(r) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                TrigPoly::random_band_limited(&mut rng, self.n, r.kmax, r.amplitude)
            }
            None => self.initial.clone(),
        }
    }
}
