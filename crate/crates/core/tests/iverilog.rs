//! Compiles emitted Verilog with Icarus Verilog when it is installed.
//! The test passes trivially (with a note on stderr) when it is not.

use std::process::Command;

use pipeforge::fixtures;
use pipeforge::flow::elaborate;
use pipeforge::protocol::Protocol;
use pipeforge::resolve::{PrimitivePolicy, ShiftregMode, Strategy};

fn have_iverilog() -> bool {
    Command::new("iverilog").arg("-V").output().is_ok()
}

#[test]
fn emitted_verilog_compiles() {
    if !have_iverilog() {
        eprintln!("iverilog not found on PATH, skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let g = fixtures::running_example_delay().build().unwrap();
    let policies = [
        PrimitivePolicy::auto(),
        PrimitivePolicy::chains(ShiftregMode::ForceReg),
        PrimitivePolicy::chains(ShiftregMode::ForceSrl),
        PrimitivePolicy::fifo(2, 1).unwrap(),
    ];
    for (i, p) in policies.into_iter().enumerate() {
        for protocol in [Protocol::Raw, Protocol::ReadyValid] {
            let v = elaborate(&g, &Strategy::DirectBackward(p), protocol).unwrap().verilog(None);
            let src = dir.path().join(format!("v{i}_{protocol}.v"));
            std::fs::write(&src, v).unwrap();
            let out = Command::new("iverilog")
                .args(["-g2001", "-o"])
                .arg(dir.path().join("a.out"))
                .arg(&src)
                .output()
                .unwrap();
            assert!(out.status.success(), "{}: {}", src.display(), String::from_utf8_lossy(&out.stderr));
        }
    }
}
