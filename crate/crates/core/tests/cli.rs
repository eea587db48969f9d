use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_amm-mfg");

/// Overrides that shrink every experiment to a few seconds.
const SMALL: &[&str] = &[
    "grid.steps=10",
    "grid.state_points=41",
    "grid.control_atoms=5",
    "harness.population=16",
    "harness.n_values=[4, 8]",
    "harness.replications=6",
    "solver.search_budget=10",
    "arb.draws=60",
    "arb.grid_points=256",
    "lvr.paths=100",
    "lvr.dt_list=[1e-2, 1e-3]",
];

fn run(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().unwrap()
}

fn small_args(sub: &str) -> Vec<String> {
    let mut v = vec![sub.to_owned(), "--seed".into(), "5".into()];
    for o in SMALL {
        v.push("--override".into());
        v.push((*o).to_owned());
    }
    v
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn every_subcommand_is_byte_reproducible() {
    for sub in ["simulate", "solve-mfg", "solve-major-minor", "arb-check", "lvr-check", "nash-test", "print-config"] {
        let args = small_args(sub);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = run(&args, Some(a.path()));
        let rb = run(&args, Some(b.path()));
        assert!(ra.status.code() == Some(0) || ra.status.code() == Some(1), "{sub}: {ra:?}");
        assert_eq!(ra.status.code(), rb.status.code());
        assert_eq!(ra.stdout, rb.stdout);
        let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
        assert!(!sa.is_empty(), "{sub} wrote nothing");
        assert_eq!(sa, sb, "{sub}");
    }
}

#[test]
fn outputs_carry_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let args = small_args("solve-mfg");
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let r = run(&args, Some(dir.path()));
    assert_eq!(r.status.code(), Some(0), "{r:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let obj = summary.as_object().unwrap();
    assert_eq!(obj.keys().next().map(String::as_str), Some("header"));
    assert_eq!(obj["status"], "ok");
    assert!(obj["runtime_seconds"].is_null());
    assert_eq!(obj["header"]["seed"], 5);
    assert_eq!(obj["header"]["command"], "solve-mfg");
    let hash = obj["header"]["config_sha256"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for name in ["residuals.csv", "flows.csv", "policy.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.starts_with('#'), "{name}");
        assert!(text.contains(hash), "{name}");
        assert!(!text.contains('\r'));
    }
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["arb-check", "--override", "arb.draws=5", "--timing"], Some(dir.path()));
    assert_eq!(r.status.code(), Some(0), "{r:?}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["runtime_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = run(&["solve-mfg", "--override", "pool.depth=3"], Some(dir.path()));
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("pool.depth"));

    let range = run(&["solve-mfg", "--override", "pool.tau=1.5"], Some(dir.path()));
    assert_eq!(range.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&range.stderr).contains("pool.tau"));

    let file = dir.path().join("bad.toml");
    std::fs::write(&file, "pool.x0 = 10\npool.x0 = 20\n").unwrap();
    let dup = run(&["print-config", "--config", file.to_str().unwrap()], None);
    assert_eq!(dup.status.code(), Some(2));

    let missing = run(&["print-config", "--config", "/nonexistent/cfg.toml"], None);
    assert_eq!(missing.status.code(), Some(2));

    let no_out = run(&["arb-check"], None);
    assert_eq!(no_out.status.code(), Some(2));
}

#[test]
fn printed_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&["print-config", "--override", "pool.tau=0.01", "--seed", "9"], Some(dir.path()));
    assert_eq!(first.status.code(), Some(0));
    let file = dir.path().join("config.toml");
    assert_eq!(std::fs::read(&file).unwrap(), first.stdout);
    let second = run(&["print-config", "--config", file.to_str().unwrap()], None);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.contains("pool.tau = 0.01"), "{text}");
    assert!(text.contains("seed = 9"));
}

#[test]
fn seeds_change_stochastic_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&["arb-check", "--override", "arb.draws=20", "--seed", "1"], Some(a.path()));
    run(&["arb-check", "--override", "arb.draws=20", "--seed", "2"], Some(b.path()));
    let read = |d: &Path| std::fs::read(d.join("arb_check.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}
