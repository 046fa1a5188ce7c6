use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipeforge")).args(args).env("PIPEFORGE_COLOR", "never").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn build_lists_missing_relations() {
    let o = run(&["build", fixture("running.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("running: 6 zones, 2 missing relations"), "{out}");
    assert!(out.contains("order: _init_ mul addA addB merged_mul_mul xor"), "{out}");
    assert!(out.contains("missing: x from _init_ to addA (depth 1, width 8)"), "{out}");
    assert!(out.contains("missing: e from _init_ to xor (depth 2, width 4)"), "{out}");
}

#[test]
fn build_writes_dot_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    let o = run(&["build", fixture("passthrough.json").to_str().unwrap(), "--dot", dot.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(dot).unwrap().starts_with("digraph"));
}

#[test]
fn generate_writes_verilog_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["generate", fixture("running.json").to_str().unwrap(), "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("latency: z=2 e_out=2"), "{}", stdout(&o));
    let v = std::fs::read_to_string(dir.path().join("running.v")).unwrap();
    assert!(v.contains("module running"));
    assert!(dir.path().join("running.dot").exists());

    let o = run(&["generate", fixture("running.json").to_str().unwrap(), "--out-dir", d, "--protocol", "ready_valid"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = std::fs::read_to_string(dir.path().join("running.v")).unwrap();
    for port in ["in_valid", "in_ready", "out_valid", "out_ready"] {
        assert!(v.contains(port), "{port}");
    }
}

#[test]
fn generate_force_reg_marks_chains() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("out.v");
    let o = run(&[
        "generate",
        fixture("running_delay.json").to_str().unwrap(),
        "--shiftreg",
        "force_reg",
        "--verilog",
        v.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&v).unwrap().contains("(* shreg_extract = \"no\" *)"));
    assert!(dir.path().join("out.dot").exists());
}

#[test]
fn usage_errors_exit_two() {
    let spec = fixture("running.json");
    let spec = spec.to_str().unwrap();
    assert_eq!(code(&run(&["generate", spec, "--strategy", "p2p", "--depth-threshold", "3"])), 2);
    assert_eq!(code(&run(&["generate", spec, "--protocol", "axi"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["build", "does-not-exist.json"])), 2);
    assert_eq!(code(&run(&["simulate", spec, "--cycles", "1", "--reset-cycles", "3"])), 2);
}

#[test]
fn model_errors_exit_three() {
    let o = run(&["build", fixture("undeclared_read.json").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("signal `ghost` is not declared upstream of zone `s1`"), "{}", stderr(&o));
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut spec: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture("running.json")).unwrap()).unwrap();
    spec["steps"][0]["kind"] = serde_json::json!("latch");
    std::fs::write(&bad, spec.to_string()).unwrap();
    let o = run(&["build", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/steps/0/kind"), "{}", stderr(&o));
}

#[test]
fn report_counts_instances() {
    let a = fixture("running.json");
    let a = a.to_str().unwrap();
    let o = run(&["report", a]);
    assert_eq!(stdout(&o), "depth\twidth\tpipeline\tcount\ttotal\n1\t8\trunning\t1\t1\n2\t4\trunning\t1\t1\n");

    let o = run(&["report", &format!("a={a}"), &format!("b={a}"), "--instances", "b=97", "--min-depth", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows, ["2\t4\ta\t1\t98", "2\t4\tb\t97\t98"]);

    let o = run(&["report", a, "--min-depth", "3"]);
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn sweep_writes_index_and_rejects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let spec = fixture("running_delay.json");
    let spec = spec.to_str().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = run(&["sweep", spec, "--out-dir", d, "--trials", "2", "--cycles", "200"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let index: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    let names: Vec<&str> = index["variants"].as_array().unwrap().iter().map(|v| v["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["auto", "force_reg", "force_srl", "fifo_d4_w4"]);
    for n in &names {
        let sub = dir.path().join(n);
        assert!(sub.join("running_delay.v").exists() && sub.join("manifest.json").exists(), "{n}");
    }

    let o = run(&["sweep", spec, "--out-dir", d, "--trials", "2", "--cycles", "200", "--inject-fault", "fifo_d4_w4"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("fifo_d4_w4"), "{}", stderr(&o));
}

#[test]
fn simulate_reports_latency_and_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let spec = fixture("running_delay.json");
    let spec = spec.to_str().unwrap();
    let o = run(&["simulate", spec, "--depth-threshold", "4", "--width-threshold", "4", "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("latency: 4"), "{out}");
    assert!(out.contains("golden check: OK"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("running_delay.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("xor__e__read_start"));
    assert!(std::fs::read_to_string(dir.path().join("running_delay.vcd")).unwrap().contains("$enddefinitions"));

    let o = run(&["simulate", spec, "--protocol", "ready_valid", "--sink-duty", "0.5", "--out-dir", d]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("order preserved"), "{}", stdout(&o));
    assert!(dir.path().join("running_delay.transactions.json").exists());
}

#[test]
fn write_failures_exit_one() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let under_file = file.path().join("sub");
    let o = run(&["generate", fixture("running.json").to_str().unwrap(), "--out-dir", under_file.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}
