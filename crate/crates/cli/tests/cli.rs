use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ocn_cli::{cmd_run, read_trace_csv};
use ocn_core::scenario::{load_scenario, parse_scenario};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ocn-rgp"))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn report_topology_path3() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.toml", "[topology]\nkind = \"path\"\nm = 3\n");
    let out = bin().args(["report-topology", "--json", "--scenario"]).arg(&f).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["d_min"], 1);
    assert_eq!(v["d_max"], 1);
    assert_eq!(v["omega"], 1.0);
    assert_eq!(v["xi_lower"], 0.5);
    assert_eq!(v["rho"], 1);
    assert_eq!(v["phi"], 1);
    assert_eq!(v["r_index"], 1.0);
    assert!(v["eta_upper"].is_null());

    let text = bin().args(["report-topology", "--scenario"]).arg(&f).output().unwrap();
    let s = String::from_utf8(text.stdout).unwrap();
    assert!(s.lines().any(|l| l.starts_with("eta_H") && l.ends_with("n/a")));
}

#[test]
fn run_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let scen = scenarios_dir().join("synthetic_nominal.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let st = bin().args(["run", "--scenario"]).arg(&scen).arg("--out").arg(out).output().unwrap().status;
        assert_eq!(st.code(), Some(0));
    }
    for f in ["trace.csv", "report.json", "scenario.resolved.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let resolved: serde_json::Value = serde_json::from_slice(&fs::read(a.join("scenario.resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["scenario"]["init"]["seed"], 1);

    let c = dir.path().join("c");
    let st = bin().args(["run", "--seed", "2", "--scenario"]).arg(&scen).arg("--out").arg(&c).output().unwrap().status;
    assert_eq!(st.code(), Some(0));
    assert_ne!(fs::read(a.join("trace.csv")).unwrap(), fs::read(c.join("trace.csv")).unwrap());
}

#[test]
fn trace_csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let scen = scenarios_dir().join("ring_compare.toml");
    let summary = cmd_run(&scen, dir.path(), None, None).unwrap();
    let rows = read_trace_csv(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(rows.len(), summary.run.outcome.trace.len());
    for ((k, x, eta), row) in rows.iter().zip(&summary.run.outcome.trace) {
        assert_eq!(*k, row.k);
        assert_eq!(x, &row.x);
        assert_eq!(*eta, row.eta);
    }
    let central = summary.run.centralized.as_ref().unwrap();
    for ((_, x, eta), row) in rows.iter().zip(&central.trace) {
        assert_eq!(*eta, row.eta);
        for (u, v) in x.iter().zip(&row.x) {
            assert!((u - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn non_convergence_exits_with_two_and_keeps_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(
        dir.path(),
        "s.toml",
        "k_max = 3\ngamma = 1e-9\n[topology]\nkind = \"star\"\nm = 5\n[init]\nkind = \"random\"\nseed = 4\n",
    );
    let out = dir.path().join("out");
    let st = bin().args(["run", "--scenario"]).arg(&f).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
    assert!(out.join("trace.csv").exists());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["convergence"]["status"]["status"], "not_converged");
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "bad.toml", "foo = 3\n[topology]\nkind = \"path\"\nm = 3\n");
    let out = bin().args(["report-topology", "--scenario"]).arg(&f).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));

    write(dir.path(), "bad.edges", "1 2\n2 x\n");
    let f = write(dir.path(), "e.toml", "[topology]\nkind = \"file\"\npath = \"bad.edges\"\n");
    let out = bin().args(["report-topology", "--scenario"]).arg(&f).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin().args(["run", "--out"]).arg(dir.path()).args(["--scenario", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_command_reports_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["compare", "--scenario"])
        .arg(scenarios_dir().join("path_flow_limits.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["compare"]["max_state_deviation"].as_f64().unwrap() <= 1e-12);
    assert!(report["total_messages"].as_u64().unwrap() > 0);
}

#[test]
fn shipped_scenarios_parse_round_trip_and_run() {
    let mut seen = 0;
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        seen += 1;
        let (s, _) = load_scenario(&path).unwrap();
        assert_eq!(parse_scenario(&s.to_toml().unwrap()).unwrap(), s, "{}", path.display());
        let dir = tempfile::tempdir().unwrap();
        let summary = cmd_run(&path, dir.path(), None, None).unwrap();
        assert!(summary.converged, "{}", path.display());
    }
    assert!(seen >= 5);
}
