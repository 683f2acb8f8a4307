use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn orbitcons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbitcons"))
        .args(args)
        .env_remove("ORBITCONS_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn validate_reports_the_period() {
    let o = orbitcons(&["validate"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("period rho          90"));
    assert!(out.trim_end().ends_with("valid"));
}

#[test]
fn runs_with_the_same_seed_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, extra) in [(&a, None), (&b, Some("--serial"))] {
        let mut args = vec!["run", "--steps", "40", "--seed", "7", "--out", dir.to_str().unwrap()];
        args.extend(extra);
        let o = orbitcons(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        ["agent_0.csv", "agent_1.csv", "agent_2.csv", "agent_3.csv", "messages.csv", "network.csv", "summary.json"]
    );
    assert_eq!(fa, fb);
}

#[test]
fn compare_writes_a_delta_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let o = orbitcons(&["compare", "--protocols", "cp1,cp3", "--steps", "20", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("delta.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("t,cp1,cp3"));
    assert_eq!(lines.count(), 20);
    assert!(out.join("cp3").join("summary.json").exists());
    let summaries: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(summaries.as_array().unwrap().len(), 2);
}

#[test]
fn preset_round_trips_through_a_file() {
    let o = orbitcons(&["preset"]);
    assert!(o.status.success());
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("scenario.json");
    fs::write(&path, &o.stdout).unwrap();
    let v = orbitcons(&["validate", "--config", path.to_str().unwrap()]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn bad_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("broken.json");
    fs::write(&path, "{ \"name\": \"broken\" }").unwrap();
    let o = orbitcons(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let missing = orbitcons(&["validate", "--config", "no-such-file.json"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn disconnected_network_fails_validation() {
    let o = orbitcons(&["preset"]);
    let mut file: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    file["network"]["graphs"] = serde_json::json!([[[0, 1]]]);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("split.json");
    fs::write(&path, file.to_string()).unwrap();
    let v = orbitcons(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn unknown_protocol_is_a_usage_error() {
    let o = orbitcons(&["run", "--protocol", "cp9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cp9"));
}
