mod support;

use std::path::Path;

use support::{check_csv, csv_contents, read_csv, run_ok, starnoma, summary_column};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn smoke_ca_run_writes_tables_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let args = ["run", "--scenario", "tiny", "--algo", "ca", "--seeds", "0", "--out", s(&out), "--dump-channels"];
    run_ok(&args);
    for f in ["summary.csv", "ca_p1_s0_rates.csv", "ca_p1_s0_bcd.csv", "ca_p1_s0_sca.csv", "ca_p1_s0_channels.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    for f in std::fs::read_dir(&out).unwrap() {
        check_csv(&f.unwrap().path());
    }
    let again = starnoma(&args);
    assert_eq!(again.status.code(), Some(2));
    let mut forced = args.to_vec();
    forced.push("--force");
    run_ok(&forced);
}

#[test]
fn ca_power_sweep_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["run", "--scenario", "tiny", "--algo", "ca", "--seeds", "1", "--power-sweep", "4,1,2", "--out", s(dir.path())]);
    let summary = dir.path().join("summary.csv");
    check_csv(&summary);
    assert_eq!(summary_column(&summary, "p_max_w"), vec![1.0, 2.0, 4.0]);
    let mean = summary_column(&summary, "mean_throughput");
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
}

#[test]
fn policy_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run_ok(&["run", "--scenario", "tiny", "--algo", "camappo", "--seeds", "4", "--steps", "40", "--out", s(out)]);
    }
    let (ca, cb) = (csv_contents(&a), csv_contents(&b));
    assert_eq!(ca.keys().collect::<Vec<_>>(), cb.keys().collect::<Vec<_>>());
    assert!(ca.contains_key("camappo_p1_s4_training.csv"));
    for (name, text) in &ca {
        assert_eq!(text, &cb[name], "{name} differs");
        check_csv(&a.join(name));
    }
    assert_eq!(std::fs::read(a.join("camappo_p1_s4.ckpt")).unwrap(), std::fs::read(b.join("camappo_p1_s4.ckpt")).unwrap());
}

#[test]
fn compare_of_identical_summaries_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["run", "--scenario", "tiny", "--algo", "mappo", "--seeds", "0,1", "--steps", "40", "--out", s(dir.path())]);
    let summary = dir.path().join("summary.csv");
    let table = dir.path().join("cmp.csv");
    let out = run_ok(&["compare", s(&summary), s(&summary), "--out", s(&table)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mappo"));
    check_csv(&table);
    for name in ["delta_mean_throughput", "delta_min_throughput"] {
        assert!(summary_column(&table, name).iter().all(|&d| d == 0.0));
    }
    let (_, rows) = read_csv(&table);
    assert_eq!(rows.len(), 2);
    assert_eq!(starnoma(&["compare", s(&summary), s(&summary), "--out", s(&table)]).status.code(), Some(2));
}

#[test]
fn dump_scenario_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let toml = dir.path().join("tiny.toml");
    let channels = dir.path().join("ch.csv");
    run_ok(&["dump-scenario", "--scenario", "tiny", "--seed", "9", "--out", s(&toml), "--dump-channels", s(&channels)]);
    check_csv(&channels);
    let text = std::fs::read_to_string(&toml).unwrap();
    assert!(text.contains("seed = 9"));
    run_ok(&["run", "--scenario", s(&toml), "--algo", "ca", "--seeds", "9", "--out", s(&dir.path().join("r"))]);
}

#[test]
fn bad_input_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    assert_eq!(starnoma(&["run", "--scenario", "nope", "--algo", "ca", "--seeds", "0", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(starnoma(&["run", "--scenario", "tiny", "--algo", "ca", "--seeds", "0", "--power-sweep", "-1", "--out", s(&out)]).status.code(), Some(1));
    assert!(!out.join("summary.csv").exists());
}
