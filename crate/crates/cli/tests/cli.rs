use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "plant": {"type": "single_integrator", "dim": 2},
    "formula": "G[2,10] ball(0,1;3,4;5)",
    "x0": [-3, -4],
    "noise": 0.2,
    "seed": 7
}"#;

fn etstl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etstl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn metric(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("metrics.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in metrics"))
        .to_string()
}

#[test]
fn run_writes_outputs_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.json", SMALL);
    let out = tmp.path().join("out");
    let o = etstl(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "events.csv", "funnel.csv", "inputs.csv", "metrics.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(metric(&out, "outcome"), "completed");
    assert_eq!(metric(&out, "satisfied"), "true");
    let head = fs::read_to_string(out.join("funnel.csv")).unwrap();
    assert!(head.starts_with("t,mode,rho,lower,upper\n"));
}

#[test]
fn outputs_are_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.json", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = etstl(&["run", "--scenario", &sc, "--out", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "events.csv", "funnel.csv", "inputs.csv", "metrics.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    etstl(&["run", "--scenario", &sc, "--out", c.to_str().unwrap(), "--seed", "8"]);
    assert_ne!(
        fs::read(a.join("trajectory.csv")).unwrap(),
        fs::read(c.join("trajectory.csv")).unwrap()
    );
}

#[test]
fn malformed_formula_exits_two_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.json", &SMALL.replace("3,4;5)", "3,4"));
    let o = etstl(&["run", "--scenario", &sc, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("position 20"), "{err}");
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let unknown = write(tmp.path(), "u.json", &SMALL.replace("\"seed\"", "\"speed\": 1, \"seed\""));
    assert_eq!(etstl(&["run", "--scenario", &unknown, "--out", out]).status.code(), Some(2));
    let sc = write(tmp.path(), "s.json", SMALL);
    assert_eq!(etstl(&["run", "--scenario", &sc]).status.code(), Some(2));
    assert_eq!(etstl(&["run", "--scenario", &sc, "--out", out, "--dt", "-1"]).status.code(), Some(2));
    let missing = tmp.path().join("none.json");
    assert_eq!(
        etstl(&["run", "--scenario", missing.to_str().unwrap(), "--out", out]).status.code(),
        Some(2)
    );
}

#[test]
fn excessive_noise_exits_four_with_timestamp() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.json", &SMALL.replace("\"noise\": 0.2", "\"noise\": 30"));
    let out = tmp.path().join("out");
    let o = etstl(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(metric(&out, "outcome"), "funnel_violation");
    let t: f64 = metric(&out, "failure_time").parse().unwrap();
    assert!(t > 0.0 && t < 10.0, "{t}");
}

#[test]
fn infeasible_task_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.json", &SMALL.replace("G[2,10]", "G[0,10]"));
    let out = tmp.path().join("out");
    let o = etstl(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(metric(&out, "outcome"), "synthesis_failure");
}

#[test]
fn optimize_prints_each_task() {
    let tmp = tempfile::tempdir().unwrap();
    let f = write(tmp.path(), "f.stl", "F[0,5] ball(0;2;1) and F[5,9] band(0;0;3)");
    let o = etstl(&["optimize", "--formula", &f]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let v: Vec<f64> = text
        .lines()
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(v.len(), 2);
    assert!((v[0] - 1.0).abs() < 1e-6 && (v[1] - 3.0).abs() < 1e-6, "{v:?}");
    let o = etstl(&["optimize", "--formula", &f, "--eta", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn monitor_agrees_with_run_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = write(tmp.path(), "s.json", SMALL);
    let out = tmp.path().join("out");
    etstl(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]);
    let f = write(tmp.path(), "f.stl", "G[2,10] ball(0,1;3,4;5)");
    let traj = out.join("trajectory.csv");
    let o = etstl(&["monitor", "--trajectory", traj.to_str().unwrap(), "--formula", &f]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let rho: f64 = text.lines().next().unwrap().strip_prefix("rho = ").unwrap().parse().unwrap();
    let expected: f64 = metric(&out, "rho_theta").parse().unwrap();
    assert_eq!(rho, expected);
    assert!(text.contains("satisfied = true"));

    let wide = write(tmp.path(), "w.stl", "G[0,10] ball(2,3;0,0;1)");
    let o = etstl(&["monitor", "--trajectory", traj.to_str().unwrap(), "--formula", &wide]);
    assert_eq!(o.status.code(), Some(2));
}
