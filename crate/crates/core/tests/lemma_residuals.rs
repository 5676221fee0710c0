use glmcf::angle::GraphState;
use glmcf::flow::{stable_dt, step_rk4};
use glmcf::grid::PeriodicGrid;
use glmcf::metric::{build_metric, MetricSpec};
use glmcf::monitors::{residual_rho, LemmaWindow, Residuals};
use glmcf::ScalarField;

fn residuals(spec: &MetricSpec, points: usize) -> ([f64; 5], f64) {
    let grid = PeriodicGrid::new(2, points).unwrap();
    let m = build_metric(spec, grid).unwrap();
    let u = ScalarField::from_fn(grid, |q| 0.05 * q[0].sin() * q[1].sin());
    let s0 = GraphState::new(vec![0.3, 0.0], ScalarField::zeros(grid, 0), u).unwrap();
    let dt = stable_dt(&m, 0.2).unwrap();
    let s1 = step_rk4(&s0, &m, dt).unwrap();
    let s2 = step_rk4(&s1, &m, dt).unwrap();
    let w = LemmaWindow::new(&[&s0, &s1, &s2]).unwrap();
    let r = Residuals::compute(&w, &m, 0.0).unwrap();
    (r.as_array().map(|x| x.unwrap()), residual_rho(&w, &m, false).unwrap())
}

#[test]
fn evolution_identities_converge_on_three_metrics() {
    let specs = [
        MetricSpec::flat(),
        MetricSpec::conformal("0.1*sin(q1)".parse().unwrap()),
        MetricSpec::diagonal(vec!["1 + 0.2*sin(q2)".parse().unwrap(), "1".parse().unwrap()]),
    ];
    for spec in &specs {
        let (a, _) = residuals(spec, 32);
        let (b, _) = residuals(spec, 64);
        for k in 0..5 {
            assert!(a[k] / b[k] >= 12.0, "{:?} residual {k}: {} -> {}", spec.family, a[k], b[k]);
        }
    }
}

#[test]
fn rho_needs_the_curvature_commutator_on_curved_metrics() {
    let spec = MetricSpec::conformal("0.1*sin(q1)".parse().unwrap());
    let (_, coarse) = residuals(&spec, 32);
    let (full, fine) = residuals(&spec, 64);
    // without the commutator the residual stalls at the size of the dropped term
    assert!(coarse / fine < 2.0);
    assert!(fine > 100.0 * full[3]);
    let (_, flat) = residuals(&MetricSpec::flat(), 32);
    let (flat_full, _) = residuals(&MetricSpec::flat(), 32);
    assert_eq!(flat, flat_full[3]);
}
