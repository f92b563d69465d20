use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn elnum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elnum")).args(args).output().expect("run elnum")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn outputs(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == ext)).collect();
    v.sort();
    v
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn spectrum_passes_and_writes_documented_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 7\ncells = 800\n");
    let out = tmp.path().join("out");
    let o = elnum(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&outputs(&out, "csv")[0]).unwrap();
    assert_eq!(csv.lines().next(), Some("index,unperturbed,perturbed"));
    let first: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[1].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    let json = read_json(&outputs(&out, "json")[0]);
    assert_eq!(json["command"], "spectrum");
    assert_eq!(json["passed"], true);
}

#[test]
fn reports_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 7\n");
    let runs: Vec<PathBuf> = (0..2)
        .map(|i| {
            let out = tmp.path().join(format!("out{i}"));
            elnum(&["reduced", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            out
        })
        .collect();
    let names: Vec<Vec<PathBuf>> =
        runs.iter().map(|d| outputs(d, "json").iter().map(|p| p.file_name().unwrap().into()).collect()).collect();
    assert_eq!(names[0], names[1]);
    let strip = |d: &Path| {
        let mut v = read_json(&outputs(d, "json")[0]);
        v.as_object_mut().unwrap().remove("timestamp");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(&runs[0]), strip(&runs[1]));
    let csv = |d: &Path| std::fs::read(&outputs(d, "csv")[0]).unwrap();
    assert_eq!(csv(&runs[0]), csv(&runs[1]));
}

#[test]
fn envelope_matches_the_published_schema() {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/envelope.schema.json")).unwrap())
            .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    for (cmd, n) in [("reduced", "7"), ("spectrum", "7")] {
        elnum(&[cmd, "--n", n, "--out", out.to_str().unwrap()]);
    }
    let files = outputs(&out, "json");
    assert_eq!(files.len(), 2);
    for f in files {
        let doc = read_json(&f);
        assert!(validator.is_valid(&doc), "{}", f.display());
    }
}

#[test]
fn failing_checks_set_the_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 6\na0 = 7\n");
    let o = elnum(&["n6", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("out").to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn n6_without_a0_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 6\n");
    let o = elnum(&["n6", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a0"));
}

#[test]
fn malformed_number_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 7\n\nt = one\n");
    let o = elnum(&["reduced", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "n = 7\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    elnum(&["reduced", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    elnum(&["reduced", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--M", "40"]);
    let ha = read_json(&outputs(&a, "json")[0])["config_hash"].clone();
    let hb = read_json(&outputs(&b, "json")[0])["config_hash"].clone();
    assert_ne!(ha, hb);
    let tm_a = read_json(&outputs(&a, "json")[0])["payload"]["t_m"].as_f64().unwrap();
    let tm_b = read_json(&outputs(&b, "json")[0])["payload"]["t_m"].as_f64().unwrap();
    assert!(tm_b != tm_a);
}
