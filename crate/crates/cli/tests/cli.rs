use std::fs;
use std::path::Path;
use std::process::Command;

const SPEC: &str = r#"
schemes = ["RSMD", "FRA/WF-PA"]
num_drops = 2
base_seed = 11

[sweep]
variable = "M"
values = [4, 6]

[network]
num_errhs = 2
num_rrbs = 4
max_clusters_per_errh = 2
training_samples = 2
"#;

fn rsmd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rsmd")).args(args).output().expect("binary runs")
}

fn write_spec(dir: &Path) -> String {
    let path = dir.join("spec.toml");
    fs::write(&path, SPEC).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let out = dir.path().join("out");
    let o = rsmd(&["run", &spec, "--out", out.to_str().unwrap(), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    // Header plus 2 values x 2 drops x 2 schemes.
    assert_eq!(rows.lines().count(), 9);
    assert!(rows.lines().next().unwrap().starts_with("scheme,sweep,value,drop,seed,sum_rate"));
    assert!(out.join("timings.csv").exists() && out.join("manifest.json").exists());

    let summary_csv = dir.path().join("summary.csv");
    let o = rsmd(&["summarize", out.join("rows.csv").to_str().unwrap(), "--reference", "FRA/WF-PA", "--out", summary_csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains("RSMD") && table.contains('%'));
    assert_eq!(fs::read_to_string(summary_csv).unwrap().lines().count(), 5);
}

#[test]
fn seed_override_changes_rows_and_reruns_match() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path());
    let read = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = rsmd(&["run", &spec, "--out", out.to_str().unwrap(), "--seed", seed, "--drops", "1"]);
        assert!(o.status.success());
        fs::read_to_string(out.join("rows.csv")).unwrap()
    };
    let a = read("a", "5");
    assert_eq!(a, read("b", "5"));
    assert_ne!(a, read("c", "6"));
    assert!(a.lines().nth(1).unwrap().contains(",0,5,"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = rsmd(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));

    let spec = write_spec(dir.path());
    let out = dir.path().join("out");
    assert!(rsmd(&["run", &spec, "--out", out.to_str().unwrap(), "--drops", "1"]).status.success());
    let o = rsmd(&["summarize", out.join("rows.csv").to_str().unwrap(), "--reference", "nope"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown reference"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert!(!rsmd(&["summarize", empty.to_str().unwrap(), "--reference", "RSMD"]).status.success());
}

#[test]
fn shipped_specs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    let mut count = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            rsmd_core::harness::ExperimentSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}

#[test]
fn smoke_spec_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs/smoke.toml");
    let out = dir.path().join("smoke");
    let o = rsmd(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--drops", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = rsmd_core::harness::read_rows(out.join("rows.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.is_ok()), "{rows:?}");
}
