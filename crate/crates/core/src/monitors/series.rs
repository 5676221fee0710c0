//! Harnack functional, oscillation series and exponential-decay fits.

use crate::covariant::{contract, covariant_hessian, gradient, raise_slot};
use crate::error::{Error, Result};
use crate::field::{ScalarField, SymTensorField, TensorField};
use crate::metric::MetricField;

use super::MonitorSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnackConfig {
    pub alpha: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Default for HarnackConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            t1: 1.0,
            t2: 2.0,
        }
    }
}

impl HarnackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::Config(format!("harnack alpha {} not in (1, 2)", self.alpha)));
        }
        if !(self.t1 < self.t2) {
            return Err(Error::Config(format!("harnack t1 = {} must be below t2 = {}", self.t1, self.t2)));
        }
        Ok(())
    }
}

/// `F = t (η^{ij} f_i f_j − α ḟ)` with `f = log v` and `ḟ = η^{ij} v_ij / v`.
pub fn harnack_functional(
    v: &ScalarField,
    eta_inv: &SymTensorField,
    metric: &MetricField,
    t: f64,
    alpha: f64,
) -> Result<ScalarField> {
    let min = v.min();
    if !(min > 0.0) {
        return Err(Error::MaxPrincipleViolation { t, min_v: min });
    }
    let f = v.map(f64::ln);
    let df = gradient(&f)?;
    let grad2 = contract(&df, &raise_slot(&df, 0, eta_inv));
    let lap_v = contract(&covariant_hessian(v, metric)?, eta_inv);
    Ok(TensorField::from_point_fn(*v.grid(), 0, |p, out| {
        let fdot = lap_v.value(p) / v.value(p);
        out[0] = t * (grad2.value(p) - alpha * fdot);
    }))
}

/// `χ(t_k) = sup θ̇ − inf θ̇` with monotonicity flag and unit-time ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationSeries {
    pub times: Vec<f64>,
    pub chi: Vec<f64>,
    /// Non-increasing within `1e-10`.
    pub monotone_ok: bool,
    /// `χ(m + 1) / χ(m)` for integer `m` inside the sampled range.
    pub unit_ratios: Vec<f64>,
}

pub fn oscillation_series(samples: &[MonitorSample]) -> OscillationSeries {
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let chi: Vec<f64> = samples.iter().map(|s| s.theta_dot_sup - s.theta_dot_inf).collect();
    let monotone_ok = chi.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    let unit_ratios = unit_ratios(&times, &chi);
    OscillationSeries {
        times,
        chi,
        monotone_ok,
        unit_ratios,
    }
}

/// Log-linear interpolation of a positive series at time `t`.
fn interpolate_log(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let k = times.partition_point(|&x| x < t);
    if k < times.len() && times[k] == t {
        return Some(values[k]);
    }
    if k == 0 || k >= times.len() {
        return None;
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let (y0, y1) = (values[k - 1], values[k]);
    if !(y0 > 0.0 && y1 > 0.0) {
        return None;
    }
    let s = (t - t0) / (t1 - t0);
    Some((y0.ln() * (1.0 - s) + y1.ln() * s).exp())
}

fn unit_ratios(times: &[f64], values: &[f64]) -> Vec<f64> {
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut m = first.ceil();
    while m + 1.0 <= last {
        match (interpolate_log(times, values, m), interpolate_log(times, values, m + 1.0)) {
            (Some(a), Some(b)) if a > 0.0 => out.push(b / a),
            _ => break,
        }
        m += 1.0;
    }
    out
}

/// Fit of `y ≈ C₁ e^{−C₂ t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
}

/// Least squares on `(t, ln y)` over `window = [t_a, t_b]`.
pub fn decay_fit(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window[0] && **t <= window[1])
        .map(|(t, y)| (*t, *y))
        .collect();
    if let Some(&(t, y)) = pts.iter().find(|(_, y)| !(*y > 0.0)) {
        return Err(Error::NonPositiveSeries { t, value: y });
    }
    if pts.len() < 2 {
        return Err(Error::NoSamples);
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / k;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        let (dx, dy) = (t - mt, y.ln() - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("decay window spans a single time".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayFit {
        c1: (my - slope * mt).exp(),
        c2: -slope,
        r_squared,
    })
}
