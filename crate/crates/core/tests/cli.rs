use std::path::Path;
use std::process::Command;

fn glmcf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_glmcf"))
}

const SMALL: &str = r#"
scenario = "harnack"
n = 2
N = 16
harmonic = [0.3, 0.0]
initial = "0.05*sin(q1)*sin(q2)"

[metric]
family = "conformal"
f = "0.1*sin(q1)"

[flow]
t_max = 0.5
osc_tol = 0.0
sample_every = 7
checkpoint_every = 60
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_lists_config_keys() {
    let out = glmcf().arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for key in ["flow.cfl", "stability.amplitude_min", "harnack.v0", "metric.family"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = glmcf().arg("run").arg(&cfg).args(["--set", "N=24"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = glmcf().arg("run").arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = glmcf().arg("run").arg(&cfg).args(["--set", "flow.bogus=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("scenario = \"harnack\"", "scenario = \"lemma_check\"").replace("0.05*sin", "40*sin");
    let cfg = write_config(dir.path(), &text);
    let out = glmcf().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reruns_are_byte_identical_and_resume_continues_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let st = glmcf().arg("run").arg(&cfg).arg("--out").arg(d).status().unwrap();
        assert!(st.success());
    }
    let files = ["monitors.csv", "companion.csv", "report.txt", "plots/osc_theta.svg"];
    for f in files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    let st = glmcf()
        .arg("resume")
        .arg(a.join("checkpoints/harnack.ckpt"))
        .arg("--out")
        .arg(&c)
        .status()
        .unwrap();
    assert!(st.success());
    for f in files {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(c.join(f)).unwrap(), "{f}");
    }
    let rows = std::fs::read_to_string(a.join("monitors.csv")).unwrap().lines().count();
    assert!(rows > 2);
}

#[test]
fn verify_passes_on_flat_metric() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("family = \"conformal\"\nf = \"0.1*sin(q1)\"", "family = \"flat\"");
    let cfg = write_config(dir.path(), &text);
    let out = glmcf()
        .arg("verify")
        .arg(&cfg)
        .args(["--set", "N=32"])
        .arg("--out")
        .arg(dir.path().join("v"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("v/report.txt")).unwrap();
    assert!(report.contains("verdict: PASS"));
    assert!(dir.path().join("v/lemma_residuals.csv").exists());
}
