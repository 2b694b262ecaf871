use std::path::Path;
use std::process::{Command, Output};

fn predecode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_predecode"))
        .args(args)
        .env_remove("PREDECODE_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn threshold_output_does_not_depend_on_workers() {
    let args = ["threshold", "-d", "4,6", "-p", "0.02,0.03", "--min-failures", "15", "--seed", "9"];
    let one = predecode(&[&args[..], &["--workers", "1"]].concat());
    let three = predecode(&[&args[..], &["--workers", "3"]].concat());
    assert!(one.status.success());
    assert_eq!(stdout(&one), stdout(&three));
    let again = predecode(&[&args[..], &["--workers", "1"]].concat());
    assert_eq!(stdout(&one), stdout(&again));
}

#[test]
fn workers_default_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_predecode"))
        .args(["analysis", "-p", "1e-3"])
        .env("PREDECODE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    let bad = Command::new(env!("CARGO_BIN_EXE_predecode"))
        .args(["analysis", "-p", "1e-3"])
        .env("PREDECODE_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(predecode(&["threshold", "-d", "4", "-p", ""]).status.code(), Some(2));
    assert_eq!(predecode(&["threshold", "-d", "5", "-p", "0.01"]).status.code(), Some(2));
    assert_eq!(predecode(&["threshold", "-d", "4", "-p", "1.5"]).status.code(), Some(2));
    assert_eq!(predecode(&["density", "-d", "8", "-p", "0.01"]).status.code(), Some(2));
    assert_eq!(predecode(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(predecode(&["--format", "xml", "analysis", "-p", "1e-3"]).status.code(), Some(2));
}

#[test]
fn json_envelope_carries_run_description() {
    let o = predecode(&["--format", "json", "--seed", "4", "analysis", "-p", "1e-3,1e-2"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["command"], "analysis");
    assert_eq!(v["seed"], 4);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["rows"][0]["d_mwpm"], 18);
}

#[test]
fn csv_has_comment_header_then_table() {
    let o = predecode(&["analysis", "-p", "1e-3"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# predecode"));
    let table: Vec<&str> = lines.iter().copied().filter(|l| !l.starts_with('#')).collect();
    assert!(table[0].starts_with("p,d_pre,d_mwpm"));
    assert_eq!(table.len(), 2);
}

#[test]
fn out_file_gets_metadata_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = predecode(&["--out", out.to_str().unwrap(), "analysis", "-p", "1e-3"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().contains("d_pre"));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "analysis");
    assert!(meta["elapsed_s"].as_f64().unwrap() >= 0.0);
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn codec_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("defects.txt");
    let synz = dir.path().join("s.synz");
    write(&list, "# two defects\nd 6\n0 0 0\n3 1 2\n");
    let o = predecode(&["codec", "compress", "--input", list.to_str().unwrap(), "--output", synz.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&synz).unwrap().len(), 9 + 8);
    let o = predecode(&["codec", "decompress", "--input", synz.to_str().unwrap()]);
    assert!(o.status.success());
    let rows: Vec<String> = stdout(&o).lines().filter(|l| !l.starts_with('#')).map(String::from).collect();
    assert_eq!(rows, ["address,x,y,t", "0,0,0,0", "40,3,1,2"]);
}

#[test]
fn codec_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let synz = dir.path().join("bad.synz");
    std::fs::write(&synz, [1u8, 4, 0, 4, 0, 1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
    let o = predecode(&["codec", "decompress", "--input", synz.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let list = dir.path().join("odd.txt");
    write(&list, "d 4\n1 0 0\n");
    let o = predecode(&["codec", "compress", "--input", list.to_str().unwrap(), "--output", synz.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
