//! Emitted Verilog is compared byte for byte with checked-in files.
//! Run with `UPDATE_GOLDEN=1` to rewrite them after an intended change.

use std::fs;
use std::path::PathBuf;

use pipeforge::fixtures;
use pipeforge::flow::elaborate;
use pipeforge::model::PipeBuilder;
use pipeforge::protocol::Protocol;
use pipeforge::resolve::{PrimitivePolicy, ShiftregMode, Strategy};

fn cases() -> Vec<(&'static str, PipeBuilder, Strategy, Protocol)> {
    let direct = |p: PrimitivePolicy| Strategy::DirectBackward(p);
    vec![
        ("running_auto_raw", fixtures::running_example(), direct(PrimitivePolicy::auto()), Protocol::Raw),
        ("running_delay_force_reg", fixtures::running_example_delay(), direct(PrimitivePolicy::chains(ShiftregMode::ForceReg)), Protocol::Raw),
        ("running_delay_force_srl", fixtures::running_example_delay(), direct(PrimitivePolicy::chains(ShiftregMode::ForceSrl)), Protocol::Raw),
        ("running_delay_fifo_4_4", fixtures::running_example_delay(), direct(PrimitivePolicy::fifo(4, 4).unwrap()), Protocol::Raw),
        ("running_ready_valid", fixtures::running_example(), direct(PrimitivePolicy::auto()), Protocol::ReadyValid),
        ("running_exhaustive", fixtures::running_example(), Strategy::ExhaustiveForward, Protocol::Raw),
    ]
}

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.v"))
}

#[test]
fn verilog_matches_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut stale = Vec::new();
    for (name, builder, strategy, protocol) in cases() {
        let g = builder.build().unwrap();
        let v = elaborate(&g, &strategy, protocol).unwrap().verilog(None);
        let path = golden_path(name);
        if update {
            fs::write(&path, &v).unwrap();
            continue;
        }
        let want = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if want != v {
            stale.push(name);
        }
    }
    assert!(stale.is_empty(), "output differs from golden files: {stale:?} (rerun with UPDATE_GOLDEN=1)");
}

#[test]
fn emission_is_deterministic_across_runs() {
    for (name, builder, strategy, protocol) in cases() {
        let first = elaborate(&builder.build().unwrap(), &strategy, protocol).unwrap().verilog(None);
        for _ in 0..5 {
            let again = elaborate(&builder.build().unwrap(), &strategy, protocol).unwrap().verilog(None);
            assert_eq!(first, again, "{name}");
        }
    }
}

#[test]
fn no_extract_attribute_follows_shiftreg_mode() {
    let g = fixtures::running_example_delay().build().unwrap();
    let emit = |mode| {
        elaborate(&g, &Strategy::DirectBackward(PrimitivePolicy::chains(mode)), Protocol::Raw).unwrap().verilog(None)
    };
    let attr = "(* shreg_extract = \"no\" *)";
    assert!(emit(ShiftregMode::ForceReg).contains(attr));
    assert!(!emit(ShiftregMode::Auto).contains(attr));
    assert!(!emit(ShiftregMode::ForceSrl).contains(attr));
}
