//! Binary flow-state checkpoints.
//!
//! Layout (little-endian): magic `GLMCF01\n`, `u32` version, `u32` n,
//! `u32` N, `f64` t, `c` (n × `f64`), `φ̂` and `u` (Nⁿ × `f64` each, row-major,
//! axis 0 slowest).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::angle::GraphState;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::PeriodicGrid;
use crate::monitors::MonitorSample;
use crate::output::write_atomic;

pub const MAGIC: &[u8; 8] = b"GLMCF01\n";
pub const VERSION: u32 = 1;

pub fn encode(state: &GraphState) -> Vec<u8> {
    let grid = state.grid();
    let mut out = Vec::with_capacity(8 + 12 + 8 * (1 + grid.dim() + 2 * grid.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    for x in state
        .harmonic
        .iter()
        .chain(state.base_potential.data())
        .chain(state.u.data())
    {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Decodes a checkpoint; the anchor is taken from `u` at the origin unless
/// the caller overrides it.
pub fn decode(bytes: &[u8]) -> std::result::Result<GraphState, String> {
    let mut pos = 0usize;
    let mut take = |k: usize| -> std::result::Result<&[u8], String> {
        let s = bytes
            .get(pos..pos + k)
            .ok_or_else(|| format!("truncated at byte {pos}"))?;
        pos += k;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("four bytes"));
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n = u32_at(take(4)?) as usize;
    let pts = u32_at(take(4)?) as usize;
    let grid = PeriodicGrid::new(n, pts).map_err(|e| e.to_string())?;
    let mut f64s = |k: usize| -> std::result::Result<Vec<f64>, String> {
        let raw = take(8 * k)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect())
    };
    let t = f64s(1)?[0];
    let harmonic = f64s(n)?;
    let base = f64s(grid.len())?;
    let u = f64s(grid.len())?;
    if pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - pos));
    }
    let mut state = GraphState::new(
        harmonic,
        ScalarField::from_vec(grid, 0, base),
        ScalarField::from_vec(grid, 0, u),
    )
    .map_err(|e| e.to_string())?;
    state.t = t;
    Ok(state)
}

pub fn write_checkpoint(path: &Path, state: &GraphState) -> Result<()> {
    write_atomic(path, &encode(state))
}

pub fn read_checkpoint(path: &Path) -> Result<GraphState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

/// Run bookkeeping stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ExperimentConfig,
    /// Index of the run within the scenario.
    pub run_index: usize,
    pub run_label: String,
    pub step: u64,
    pub anchor: f64,
    pub theta_hat: f64,
    pub samples: Vec<SampleRecord>,
    pub aux: Vec<crate::scenarios::AuxRecord>,
    /// State one step earlier, needed for residual windows.
    pub prev: Option<PathBuf>,
    /// Companion solution at the same step, if the scenario carries one.
    pub companion: Option<PathBuf>,
    pub companion_violations: u64,
}

/// Serializable mirror of [`MonitorSample`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord(pub [f64; 13], pub [Option<f64>; 5]);

impl From<&MonitorSample> for SampleRecord {
    fn from(s: &MonitorSample) -> Self {
        Self(
            [
                s.t,
                s.osc_theta,
                s.theta_dot_sup,
                s.theta_dot_inf,
                s.tau_max,
                s.vartheta_max,
                s.rho_max,
                s.bigtheta_max,
                s.upsilon_max,
                s.q_max,
                s.branch_residual,
                s.lambda_max,
                s.eigen_product_max,
            ],
            s.residuals.as_array(),
        )
    }
}

impl From<&SampleRecord> for MonitorSample {
    fn from(r: &SampleRecord) -> Self {
        let [t, osc_theta, theta_dot_sup, theta_dot_inf, tau_max, vartheta_max, rho_max, bigtheta_max, upsilon_max, q_max, branch_residual, lambda_max, eigen_product_max] =
            r.0;
        let [theta, tau, vartheta, rho, bigtheta] = r.1;
        MonitorSample {
            t,
            osc_theta,
            theta_dot_sup,
            theta_dot_inf,
            tau_max,
            vartheta_max,
            rho_max,
            bigtheta_max,
            upsilon_max,
            q_max,
            branch_residual,
            lambda_max,
            eigen_product_max,
            residuals: crate::monitors::Residuals {
                theta,
                tau,
                vartheta,
                rho,
                bigtheta,
            },
        }
    }
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_meta(checkpoint: &Path, meta: &CheckpointMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Checkpoint {
        path: checkpoint.to_path_buf(),
        reason: e.to_string(),
    })?;
    write_atomic(&meta_path(checkpoint), text.as_bytes())
}

pub fn read_meta(checkpoint: &Path) -> Result<CheckpointMeta> {
    let path = meta_path(checkpoint);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path,
        reason: e.to_string(),
    })
}
