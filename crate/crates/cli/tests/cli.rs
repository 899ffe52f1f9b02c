use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn netlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(out: &Path, seed: &str) {
    let o = netlab(&[
        "--seed",
        seed,
        "--out",
        path(out),
        "simulate",
        "--mechanism",
        "homophily",
        "--n-persons",
        "600",
        "--naming-rate",
        "1",
        "--observability",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    simulate(&a, "11");
    simulate(&b, "11");
    simulate(&c, "12");
    for f in ["persons.csv", "exams.csv", "ties.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let truth = |d: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(d.join("ground_truth.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("run_config");
        v
    };
    assert_eq!(truth(&a), truth(&b));
    assert_ne!(
        fs::read(a.join("exams.csv")).unwrap(),
        fs::read(c.join("exams.csv")).unwrap()
    );
    let rc = fs::read_to_string(a.join("run_config.json")).unwrap();
    assert!(rc.contains("\"seed\": 11"));
}

#[test]
fn config_replays_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    simulate(&a, "5");
    let b = dir.path().join("b");
    let o = netlab(&["--config", path(&a.join("run_config.json")), "--out", path(&b)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(a.join("ties.csv")).unwrap(),
        fs::read(b.join("ties.csv")).unwrap()
    );
}

#[test]
fn audit_table1_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = netlab(&["--out", path(dir.path()), "audit", "--fixtures", "table1"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("audit.json")).unwrap()).unwrap();
    let pairs = v["report"]["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 22);
    // every published pair of intervals overlaps, so none is distinguishable
    for p in pairs {
        assert_eq!(p["verdict"]["overlap"], true, "{p}");
        assert_eq!(p["verdict"]["distinguishable"], false, "{p}");
    }
    let csv = fs::read_to_string(dir.path().join("verdicts.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("pair,")).count(), 22);
    for f in ["audit.json", "forest_percent.svg", "run_config.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn fit_on_a_single_wave_panel_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    simulate(&full, "1");
    let one = dir.path().join("one");
    fs::create_dir_all(&one).unwrap();
    fs::copy(full.join("persons.csv"), one.join("persons.csv")).unwrap();
    for (f, col) in [("exams.csv", 1), ("ties.csv", 0)] {
        let text = fs::read_to_string(full.join(f)).unwrap();
        let kept: Vec<&str> = text
            .lines()
            .enumerate()
            .filter(|(i, l)| *i == 0 || l.split(',').nth(col) == Some("1"))
            .map(|(_, l)| l)
            .collect();
        fs::write(one.join(f), kept.join("\n") + "\n").unwrap();
    }
    let out = dir.path().join("fit");
    let o = netlab(&["--out", path(&out), "fit", "--panel", path(&one)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lagged traits are unavailable"));
    assert!(!out.exists(), "no files on failure");
}

#[test]
fn unknown_flag_exits_1() {
    let o = netlab(&["simulate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    let o = netlab(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unreadable_panel_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = netlab(&["--out", path(dir.path()), "fit", "--panel", "/nonexistent/panel"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_then_check_model_and_permtest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "2");
    let o = netlab(&["--out", path(d), "fit", "--panel", path(d)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "fit_mutual.json",
        "fit_fp_names_lp.json",
        "fit_lp_names_fp.json",
        "fits.csv",
        "forest.svg",
    ] {
        assert!(d.join(f).exists(), "{f}");
    }
    let o = netlab(&["--out", path(d), "check-model", "--panel", path(d)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8_lossy(&o.stdout);
    assert!(report.contains("[cyclic identity]"));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(d.join("check_model.json")).unwrap()).unwrap();
    let beta1 = v["params"]["beta1"].as_f64().unwrap();
    assert!((v["cyclic_identity"]["residual"].as_f64().unwrap() - beta1).abs() < 1e-9);

    let o = netlab(&[
        "--out",
        path(&d.join("p")),
        "permtest",
        "--panel",
        path(d),
        "--n-perms",
        "50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(d.join("p/permtest.csv"))
        .unwrap()
        .starts_with("degree,"));
}

#[test]
fn nnball_and_design_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = netlab(&["--out", path(d), "nnball", "--replicates", "20", "--n-perms", "49"]);
    assert!(o.status.success());
    assert!(d.join("cdf.svg").exists() && d.join("dominance.json").exists());
    simulate(&d.join("panel"), "4");
    let o = netlab(&["--out", path(d), "design", "export", "--panel", path(&d.join("panel"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(d.join("design.csv")).unwrap().lines().count() > 1);
}
