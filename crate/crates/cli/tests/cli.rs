use std::path::Path;
use std::process::{Command, Output};

fn xrk(refcache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xrk"))
        .args(args)
        .env("XRK_REFCACHE", refcache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_methods_prints_the_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = xrk(dir.path(), &["list-methods"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["MVERK1", "MVERK3_2", "SVERK3_1", "EEULER", "ERK2", "ERK3"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn convergence_writes_the_csv_and_caches_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("wind.csv");
    let cache = dir.path().join("cache");
    let args = [
        "convergence",
        "--problem",
        "wind",
        "--methods",
        "MVERK2_1,eeuler",
        "--kmin",
        "3",
        "--kmax",
        "5",
        "--out",
        csv.to_str().unwrap(),
    ];
    let o = xrk(&cache, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "problem,method,h,ge_max,cpu_ns,n_steps,n_f_evals,n_matvec,n_exp_builds"
    );
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("wind,MVERK2_1,0.125,"));
    assert!(lines[6].starts_with("wind,EEULER,0.03125,"));
    assert!(stderr(&o).contains("slope"));
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 2);

    // every column except the timing one repeats exactly
    let again = dir.path().join("again.csv");
    let mut args2 = args;
    args2[10] = again.to_str().unwrap();
    assert!(xrk(&cache, &args2).status.success());
    let strip = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(4);
                f.join(",")
            })
            .collect()
    };
    assert_eq!(strip(text), strip(std::fs::read_to_string(&again).unwrap()));
}

#[test]
fn efficiency_reports_timings() {
    let dir = tempfile::tempdir().unwrap();
    let o = xrk(
        dir.path(),
        &[
            "efficiency",
            "--methods",
            "MVERK1",
            "--kmin",
            "3",
            "--kmax",
            "4",
            "--reps",
            "5",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for row in text.lines().skip(1) {
        let cpu: u64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!(cpu > 0);
    }
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["convergence", "--methods", "RK4"],
        vec!["convergence", "--kmin", "6", "--kmax", "3"],
        vec!["convergence", "--problem", "heat"],
        vec!["convergence", "--problem", "nls", "--zeta", "0.5"],
        vec!["adaptive", "--eps", "-1"],
        vec!["adaptive", "--h0", "0.5", "--maxh", "0.1", "--minih", "1"],
    ] {
        let o = xrk(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn adaptive_emits_a_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = xrk(
        dir.path(),
        &[
            "adaptive",
            "--problem",
            "wind",
            "--eps",
            "1e-3",
            "--out",
            trace.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next(), Some("t,h,est,verdict"));
    let summary = stderr(&o);
    assert!(summary.contains("terminated=false"), "{summary}");
    assert!(!summary.contains("violation"), "{summary}");
}

#[test]
fn early_termination_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = xrk(
        dir.path(),
        &[
            "adaptive", "--eps", "1e-12", "--h0", "0.1", "--minih", "1e-3",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("terminated=true"));
    assert!(stdout(&o).lines().any(|l| l.ends_with(",terminated")));
}

#[test]
fn verify_passes_on_the_shipped_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let o = xrk(dir.path(), &["verify", "--seed", "7"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert!(text.contains("empirical-order"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn folded_split_is_selectable() {
    let dir = tempfile::tempdir().unwrap();
    let run = |k: &str| {
        xrk(
            dir.path(),
            &[
                "convergence",
                "--problem",
                "allen-cahn",
                "--split",
                "folded",
                "--methods",
                "EEULER",
                "--kmin",
                k,
                "--kmax",
                k,
            ],
        )
    };
    let o = run("13");
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 2);
    // too coarse a reference for this split: certification fails, exit 1
    let o = run("9");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("could not certify"));
}
