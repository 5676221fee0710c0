//! Per-slice diagnostics of a flow state, evolution-identity residuals,
//! the Harnack functional and time-series analysis.

mod lemmas;
mod series;

pub use lemmas::{
    residual_bigtheta, residual_rho, residual_tau, residual_theta_evolution, residual_vartheta, LemmaWindow,
    Residuals,
};
pub use series::{decay_fit, harnack_functional, oscillation_series, DecayFit, HarnackConfig, OscillationSeries};

use serde::{Deserialize, Serialize};

use crate::angle::{AngleBundle, GraphState};
use crate::covariant::{
    contract, covariant_derivative, covariant_hessian, gradient, norm_squared, raise_all, raise_slot,
};
use crate::error::Result;
use crate::field::{CovectorField, ScalarField, SymTensorField, TensorField, ThirdTensorField};
use crate::metric::MetricField;

/// Which monitors to compute and with which constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorSuite {
    pub k1: f64,
    pub k2: f64,
    /// Constant angle of the reference special Lagrangian.
    pub theta_hat: f64,
    /// Compute the fourth-derivative contraction `Υ`.
    pub upsilon: bool,
    /// Evaluate the evolution-identity residuals at sample times.
    pub residuals: bool,
}

impl Default for MonitorSuite {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 1.0,
            theta_hat: 0.0,
            upsilon: true,
            residuals: false,
        }
    }
}

/// One time slice of diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonitorSample {
    pub t: f64,
    pub osc_theta: f64,
    pub theta_dot_sup: f64,
    pub theta_dot_inf: f64,
    pub tau_max: f64,
    pub vartheta_max: f64,
    pub rho_max: f64,
    pub bigtheta_max: f64,
    pub upsilon_max: f64,
    pub q_max: f64,
    pub branch_residual: f64,
    pub lambda_max: f64,
    pub eigen_product_max: f64,
    pub residuals: Residuals,
}

impl MonitorSample {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.osc_theta,
            self.theta_dot_sup,
            self.theta_dot_inf,
            self.tau_max,
            self.vartheta_max,
            self.rho_max,
            self.bigtheta_max,
            self.upsilon_max,
            self.q_max,
            self.branch_residual,
            self.lambda_max,
            self.eigen_product_max,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

/// Covariant derivatives `u_i, u_ij, u_ijk, u_ijkl` of a scalar.
#[derive(Debug, Clone)]
pub struct Jet {
    pub d1: CovectorField,
    pub d2: SymTensorField,
    pub d3: ThirdTensorField,
    pub d4: Option<TensorField>,
}

impl Jet {
    pub fn compute(u: &ScalarField, metric: &MetricField, fourth: bool) -> Result<Self> {
        let d1 = gradient(u)?;
        let d2 = covariant_hessian(u, metric)?;
        let d3 = covariant_derivative(&d2, metric)?;
        let d4 = if fourth {
            Some(covariant_derivative(&d3, metric)?)
        } else {
            None
        };
        Ok(Self { d1, d2, d3, d4 })
    }
}

/// `τ = (u − u₀(p) − θ̂ t)²` pointwise.
pub fn tau_field(state: &GraphState, theta_hat: f64) -> ScalarField {
    let shift = state.anchor + theta_hat * state.t;
    state.u.map(|x| (x - shift) * (x - shift))
}

/// `Υ = η^{ms} g^{ip} g^{jq} g^{kr} u_{ijkm} u_{pqrs}` pointwise.
pub fn upsilon_field(d4: &TensorField, eta_inv: &SymTensorField, metric: &MetricField) -> ScalarField {
    let mut up = d4.clone();
    for slot in 0..3 {
        up = raise_slot(&up, slot, &metric.g_inv);
    }
    contract(d4, &raise_slot(&up, 3, eta_inv))
}

/// Scalar diagnostics of one slice.
pub fn scalar_monitors(
    state: &GraphState,
    metric: &MetricField,
    bundle: &AngleBundle,
    theta_hat: f64,
    u0_at_p: f64,
    suite: &MonitorSuite,
) -> Result<MonitorSample> {
    let jet = Jet::compute(&state.u, metric, suite.upsilon)?;
    let mut anchored = state.clone();
    anchored.anchor = u0_at_p;
    let tau = tau_field(&anchored, theta_hat);
    let vartheta = norm_squared(&jet.d1, metric);
    let rho = norm_squared(&jet.d2, metric);
    let bigtheta = norm_squared(&jet.d3, metric);
    let upsilon_max = match &jet.d4 {
        Some(d4) => upsilon_field(d4, &bundle.eta_inv, metric).max(),
        None => 0.0,
    };
    let q = rho.lincomb(1.0, &vartheta, suite.k1).lincomb(1.0, &tau, suite.k2);
    let theta = &bundle.theta;
    Ok(MonitorSample {
        t: state.t,
        osc_theta: theta.osc(),
        theta_dot_sup: theta.max(),
        theta_dot_inf: theta.min(),
        tau_max: tau.max(),
        vartheta_max: vartheta.max(),
        rho_max: rho.max(),
        bigtheta_max: bigtheta.max(),
        upsilon_max,
        q_max: q.max(),
        branch_residual: bundle.branch_residual,
        lambda_max: bundle.lambda_max,
        eigen_product_max: bundle.eigen_product_max,
        residuals: Residuals::default(),
    })
}

/// `g`-norm squared of every derivative order, used by tests and reports.
pub fn derivative_norms(u: &ScalarField, metric: &MetricField) -> Result<[f64; 3]> {
    let jet = Jet::compute(u, metric, false)?;
    Ok([
        norm_squared(&jet.d1, metric).max(),
        norm_squared(&jet.d2, metric).max(),
        contract(&jet.d3, &raise_all(&jet.d3, metric)).max(),
    ])
}
