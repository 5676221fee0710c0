use glmcf::angle::GraphState;
use glmcf::checkpoint::{read_checkpoint, write_checkpoint};
use glmcf::flow::{run_flow, step_rk4, FlowConfig};
use glmcf::grid::PeriodicGrid;
use glmcf::metric::{build_metric, MetricSpec};
use glmcf::monitors::MonitorSuite;
use glmcf::ScalarField;

#[test]
fn reloaded_state_reproduces_next_sample() {
    let grid = PeriodicGrid::new(2, 16).unwrap();
    let m = build_metric(&MetricSpec::conformal("0.1*sin(q1)".parse().unwrap()), grid).unwrap();
    let u = ScalarField::from_fn(grid, |q| 0.05 * q[0].sin() * q[1].sin());
    let mut s = GraphState::new(vec![0.3, 0.0], ScalarField::zeros(grid, 0), u).unwrap();
    for _ in 0..3 {
        s = step_rk4(&s, &m, 1e-3).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ckpt");
    write_checkpoint(&path, &s).unwrap();
    let mut r = read_checkpoint(&path).unwrap();
    r.anchor = s.anchor;
    assert_eq!(r.u, s.u);
    assert_eq!(r.t.to_bits(), s.t.to_bits());
    let cfg = FlowConfig {
        t_max: 0.01,
        sample_every: 1,
        osc_tol: 0.0,
        ..FlowConfig::default()
    };
    let suite = MonitorSuite::default();
    let a = run_flow(&s, &m, &cfg, &suite).unwrap();
    let b = run_flow(&r, &m, &cfg, &suite).unwrap();
    assert_eq!(a.samples.len(), b.samples.len());
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
    }
}
