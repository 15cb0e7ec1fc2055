use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn driftdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftdyn"))
        .args(args)
        .env("DRIFTDYN_WORKERS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn lists_every_preset() {
    let o = driftdyn(&["list-scenarios"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["fig1", "fig2", "fig3", "fig4a", "fig4b", "fig5", "fig6"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing in\n{text}");
    }
}

#[test]
fn critical_drift_for_erf() {
    let dir = tempfile::tempdir().unwrap();
    let o = driftdyn(&[
        "critical",
        "--activation",
        "erf",
        "--gamma",
        "0",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let value: f64 = line.split("delta_c = ").nth(1).unwrap().trim().parse().unwrap();
    assert!((value - 0.0615).abs() <= 0.003, "{line}");
    let written: toml::Table = fs::read_to_string(dir.path().join("critical.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((written["delta_c"].as_float().unwrap() - value).abs() <= 1e-6);
    assert!(dir.path().join("manifest.toml").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = driftdyn(&["ode", "fig9", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fig4a"), "{}", stderr(&o));

    let o = driftdyn(&["ode", "fig1", "--set", "ode.colour=3", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let o = driftdyn(&["ode", "fig1", "--delta", "0.1", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let o = driftdyn(&["ode", "fig1", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\nseed = 1\nextra = true\n").unwrap();
    let o = driftdyn(&["ode", bad.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = driftdyn(&[
        "mc",
        "fig1",
        "--set",
        "model.eta=1000",
        "--set",
        "mc.n=10",
        "--set",
        "mc.runs=1",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn compare_reruns_are_identical() {
    let args = |dir: &Path| {
        vec![
            "compare".to_string(),
            "fig4b".into(),
            "--seed".into(),
            "7".into(),
            "--set".into(),
            "mc.runs=2".into(),
            "--set".into(),
            "mc.n=100".into(),
            "--set".into(),
            "mc.alpha_max=3".into(),
            "--set".into(),
            "ode.t_end=3".into(),
            "--out".into(),
            out_arg(dir),
        ]
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let argv = args(dir);
        let o = driftdyn(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 4 * 3 + 1);
    for name in names {
        let (x, y) = (
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
        );
        assert_eq!(x, y, "{name:?}");
    }
    let manifest = fs::read_to_string(a.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 7"));
}

#[test]
fn ode_with_weight_decay_writes_lvq_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = driftdyn(&["ode", "fig1", "--gamma", "0.05", "--out", &out_arg(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("ode.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time,R11,R12,R21,R22,Q11,Q12,Q22,eps_g,eps1,eps2,eps_ref,eps_track"
    );
    let split_at = |t: f64| -> f64 {
        let row: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect::<Vec<f64>>())
            .find(|r| (r[0] - t).abs() < 1e-9)
            .unwrap();
        (row[9] - row[10]).abs()
    };
    // the class errors separate once the priors change
    assert!(split_at(200.0) > split_at(20.0));
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("gamma = 0.05"));
}
