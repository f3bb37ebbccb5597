use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_matrep");

/// Small scenario so each invocation takes well under a second.
fn run(out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .args(["--protocol", "uniform,deep", "--p", "0.2,0.7", "--trials", "4"])
        .args(["--set", "topology.rows=20", "--set", "topology.cols=20"])
        .args(["--set", "sim.t_end_ms=8000"])
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn matrep")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run(&a, &[]).status.success());
    assert!(run(&b, &[]).status.success());
    assert!(run(&c, &["--serial"]).status.success());
    for name in ["trials.csv", "aggregate.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs between runs");
        assert_eq!(read(&a, name), read(&c, name), "{name} differs serial vs parallel");
    }
}

#[test]
fn trial_and_aggregate_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(tmp.path(), &["--dump-topology", "--dump-storage"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut trials = csv::Reader::from_path(tmp.path().join("trials.csv")).unwrap();
    let header = trials.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        [
            "protocol", "p", "trial", "seed", "existence_ratio", "seg0_count", "seg1_count",
            "seg2_count", "avg_energy_j", "reachability", "retx_nodes"
        ]
    );
    let rows: Vec<csv::StringRecord> = trials.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 2 * 4);

    // aggregate means equal the mean of the per-trial rows
    let mut agg = csv::Reader::from_path(tmp.path().join("aggregate.csv")).unwrap();
    let agg_rows: Vec<csv::StringRecord> = agg.records().map(Result::unwrap).collect();
    assert_eq!(agg_rows.len(), 4);
    for a in &agg_rows {
        assert_eq!(&a[2], "4");
        let mine: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == a[0] && r[1] == a[1])
            .map(|r| r[8].parse().unwrap())
            .collect();
        let mean = mine.iter().sum::<f64>() / mine.len() as f64;
        let reported: f64 = a[3 + 2 * 4].parse().unwrap();
        assert!((mean - reported).abs() < 1e-12, "{mean} vs {reported}");
    }

    let topo = std::fs::read_to_string(tmp.path().join("topology.csv")).unwrap();
    assert_eq!(topo.lines().count(), 401);
    assert!(tmp.path().join("storage_uniform_p0.2.csv").exists());
    assert!(tmp.path().join("storage_deep_p0.7.csv").exists());
    assert!(!tmp.path().join("failures.csv").exists());

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("uniform") && stdout.contains("deep"));
}

#[test]
fn bad_configuration_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    for bad in [
        vec!["--set", "protocol.importance=1.5"],
        vec!["--set", "no.such_key=1"],
        vec!["--p", "1.2"],
        vec!["--config", "/nonexistent/scenario.conf"],
    ] {
        let out = Command::new(BIN)
            .args(&bad)
            .arg("--out")
            .arg(tmp.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
        assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    }
}

#[test]
fn shipped_scenario_is_the_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.conf");
    let loaded = matrep_core::ScenarioConfig::load(&path).unwrap();
    assert_eq!(loaded, matrep_core::ScenarioConfig::default());

    let printed = Command::new(BIN).arg("--print-default-config").output().unwrap();
    assert!(printed.status.success());
    let parsed =
        matrep_core::ScenarioConfig::parse_str(&String::from_utf8(printed.stdout).unwrap()).unwrap();
    assert_eq!(parsed, loaded);
}
