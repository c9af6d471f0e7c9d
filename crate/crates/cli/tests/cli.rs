use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lagmhd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lagmhd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn cell_rows(snapshot: &str) -> usize {
    snapshot.lines().skip(2).take_while(|l| !l.is_empty()).count()
}

#[test]
fn help_lists_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagmhd(dir.path(), &["--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for cmd in [
        "simulate",
        "stationary",
        "decay",
        "stability",
        "bounds",
        "representation",
        "diffquot",
        "convergence",
        "verify-all",
    ] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    for flag in ["--config", "--N", "--t-end", "--scenario", "--out", "--seed"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}

#[test]
fn stationary_re3_writes_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagmhd(dir.path(), &["stationary", "--N", "16", "--out", "res"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("stationary: PASS"));
    let snap = fs::read_to_string(dir.path().join("res/stationary.txt")).unwrap();
    assert_eq!(snap.lines().next(), Some("# C0=1.5000000000000000e0"));
    assert_eq!(cell_rows(&snap), 16);
    let report = fs::read_to_string(dir.path().join("res/reports.jsonl")).unwrap();
    assert!(report.contains("\"name\":\"stationary\""));
    assert!(report.contains("\"passed\":true"));
}

#[test]
fn gamma_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[params]\ngamma = 1.0\n").unwrap();
    let o = lagmhd(dir.path(), &["simulate", "--config", "bad.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gamma must exceed 1"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_and_scenarios_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("typo.toml"), "t_final = 3\n").unwrap();
    let o = lagmhd(dir.path(), &["simulate", "--config", "typo.toml"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("t_final"), "{}", stderr(&o));

    let o = lagmhd(dir.path(), &["simulate", "--scenario", "vortex"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown scenario"));

    let o = lagmhd(dir.path(), &["simulate", "--config", "missing.toml"]);
    assert!(!o.status.success());
}

#[test]
fn flag_overrides_file_value() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "scenario = \"re3\"\nN = 128\nt_end = 0.05\n[output]\ndir = \"from_file\"\n",
    )
    .unwrap();
    let o = lagmhd(dir.path(), &["simulate", "--config", "run.toml", "--N", "32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = fs::read_to_string(dir.path().join("from_file/invariants_final.txt")).unwrap();
    assert_eq!(cell_rows(&snap), 32);
    assert_eq!(snap.lines().next(), Some("# t=5.0000000000000003e-2"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = lagmhd(
            dir.path(),
            &["simulate", "--scenario", "smooth", "--N", "32", "--t-end", "0.5", "--out", out],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["invariants_timeseries.csv", "invariants_final.txt"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    // artifact paths carry the output directory
    let a = fs::read_to_string(dir.path().join("a/reports.jsonl")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/reports.jsonl")).unwrap();
    assert_eq!(a.replace("\"a/", "\"b/"), b);
    let csv = fs::read_to_string(dir.path().join("a/invariants_timeseries.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,mass,energy0,min_tau,max_tau,max_abs_b,l2_u,l2_dtau,l2_db,h1_u,h1_dtau,lyap_E,lyap_H,lyap_combined,dt"
    );
}

#[test]
fn snapshot_can_seed_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = lagmhd(dir.path(), &["simulate", "--scenario", "rough", "--N", "16", "--t-end", "0.2", "--out", "first"]);
    assert!(o.status.success(), "{}", stderr(&o));
    fs::write(
        dir.path().join("restart.toml"),
        "scenario = { snapshot = \"first/invariants_final.txt\" }\nt_end = 0.1\n[params]\nA = 1\ngamma = 1.4\nmu = 10\n",
    )
    .unwrap();
    let o = lagmhd(dir.path(), &["simulate", "--config", "restart.toml", "--out", "second"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = fs::read_to_string(dir.path().join("second/invariants_initial.txt")).unwrap();
    assert_eq!(cell_rows(&snap), 16);
}

#[test]
fn failed_check_gives_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // the rough profile is still relaxing at t = 2, so the plateau check fails
    let o = lagmhd(
        dir.path(),
        &["bounds", "--scenario", "rough", "--N", "32", "--t-end", "2", "--out", "o"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("bounds: FAIL"));
}

#[test]
fn small_experiments_run() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 5] = [
        &["diffquot", "--N", "64", "--t-end", "1", "--shifts", "2,4,8"],
        &["convergence", "--t-end", "0.5", "--sizes", "16,32,64"],
        &["stability", "--N", "32", "--t-end", "1"],
        &["representation", "--N", "32", "--t-end", "1"],
        &["decay", "--scenario", "re3", "--N", "16"],
    ];
    for args in runs {
        let mut a = args.to_vec();
        a.extend(["--out", "o"]);
        let o = lagmhd(dir.path(), &a);
        assert!(o.status.code().is_some_and(|c| c < 2), "{args:?}: {}", stderr(&o));
    }
    let reports = fs::read_to_string(dir.path().join("o/reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 5);
    assert!(dir.path().join("o/diff_quotient_diff_quotient.csv").is_file());
    assert!(dir.path().join("o/stability_stability.csv").is_file());
}
