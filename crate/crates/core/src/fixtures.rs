//! Reference pipelines shared by tests and the CLI, plus a random
//! pipeline generator for property tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{var, BranchId, Expr, PipeBuilder, StepBody, StepKind, MAIN};

/// `z = (2x + y) ^ xy` with a parallel multiplier branch, optionally
/// carrying an extra input `e` to a second output and with the final xor
/// turned into a multi-cycle step.
pub fn running(extra_e: bool, xor_delay: Option<u32>) -> PipeBuilder {
    let mut p = PipeBuilder::new("running", &[("x", 8), ("y", 8)]).expect("static inputs");
    if extra_e {
        p.extend_input("e", 4).expect("fresh name");
    }
    let mul = p.split(MAIN, "mul").unwrap();
    p.add_step(MAIN, StepBody::reg("addA").define("sumXY", 8, var("x") + var("y"))).unwrap();
    p.add_step(MAIN, StepBody::reg("addB").define("sum2XY", 8, var("sumXY") + var("x"))).unwrap();
    p.add_step(mul, StepBody::reg("mul").define("mulXY", 16, var("x") * var("y"))).unwrap();
    p.merge(mul).unwrap();
    let kind = match xor_delay {
        Some(n) => StepKind::Delay(n),
        None => StepKind::Wire,
    };
    p.add_step(MAIN, StepBody::new("xor", kind).define("z", 16, var("sum2XY") ^ var("mulXY"))).unwrap();
    p.drive_output(&[("z", "z")]).unwrap();
    if extra_e {
        p.drive_output(&[("e_out", "e")]).unwrap();
    }
    p
}

pub fn running_example() -> PipeBuilder {
    running(false, None)
}

pub fn running_example_e() -> PipeBuilder {
    running(true, None)
}

/// Running example with `e` and the xor step taking two cycles.
pub fn running_example_delay() -> PipeBuilder {
    running(true, Some(2))
}

/// Input wired to the output through one combinational step.
pub fn passthrough() -> PipeBuilder {
    let mut p = PipeBuilder::new("passthrough", &[("a", 8)]).unwrap();
    p.add_step(MAIN, StepBody::wire("pass").define("b", 8, var("a"))).unwrap();
    p.drive_output(&[("q", "b")]).unwrap();
    p
}

/// Linear chain of register steps `s1..sN`, each incrementing the previous
/// value.
pub fn chain(steps: usize) -> PipeBuilder {
    let mut p = PipeBuilder::new("chain", &[("a", 8)]).unwrap();
    let mut prev = "a".to_string();
    for i in 1..=steps {
        let name = format!("v{i}");
        p.add_step(MAIN, StepBody::reg(&format!("s{i}")).define(&name, 8, var(&prev) + crate::model::constant(1, 8)))
            .unwrap();
        prev = name;
    }
    p.drive_output(&[("q", &prev)]).unwrap();
    p
}

fn kind_for(latency: u32) -> StepKind {
    match latency {
        0 => StepKind::Wire,
        1 => StepKind::Reg,
        n => StepKind::Delay(n),
    }
}

/// Main branch and two side branches with the given latencies, all joined
/// by a single merge.
pub fn three_way_merge(latencies: &[u32; 3]) -> PipeBuilder {
    let mut p = PipeBuilder::new("three_way", &[("x", 8), ("y", 8), ("w", 8)]).unwrap();
    let b1 = p.split(MAIN, "b1").unwrap();
    let b2 = p.split(MAIN, "b2").unwrap();
    p.add_step(MAIN, StepBody::new("m0", kind_for(latencies[0])).define("p0", 8, var("x") + var("y")))
        .unwrap();
    p.add_step(b1, StepBody::new("s1", kind_for(latencies[1])).define("p1", 8, var("y") ^ var("w")))
        .unwrap();
    p.add_step(b2, StepBody::new("s2", kind_for(latencies[2])).define("p2", 8, var("w") - var("x")))
        .unwrap();
    p.merge_into(&[b1, b2], MAIN).unwrap();
    p.add_step(
        MAIN,
        StepBody::reg("join").define("q", 8, (var("p0") ^ var("p1")) + var("p2")).define("xe", 8, var("x")),
    )
    .unwrap();
    p.drive_output(&[("q", "q"), ("xe", "xe")]).unwrap();
    p
}

/// Two outputs on branches that never merge.
pub fn two_outputs() -> PipeBuilder {
    let mut p = PipeBuilder::new("two_outputs", &[("a", 8), ("b", 8)]).unwrap();
    let side = p.split(MAIN, "side").unwrap();
    p.add_step(MAIN, StepBody::reg("m").define("s", 8, var("a") + var("b"))).unwrap();
    p.add_step(side, StepBody::reg("n").define("d", 8, var("a") - var("b"))).unwrap();
    p.drive_output(&[("s", "s")]).unwrap();
    p.drive_output_on(side, &[("d", "a")]).unwrap();
    p
}

struct OpenBranch {
    id: BranchId,
    available: Vec<(String, u32)>,
}

/// Random split/merge/step program with at most `max_zones` zones and
/// `max_branches` branches (main included). Every branch is merged back
/// into main and main drives one or two outputs.
pub fn random_pipeline<R: Rng>(rng: &mut R, max_zones: usize, max_branches: usize) -> PipeBuilder {
    let n_inputs = rng.gen_range(1..=3);
    let inputs: Vec<(String, u32)> = (0..n_inputs).map(|i| (format!("i{i}"), rng.gen_range(1..=12))).collect();
    let refs: Vec<(&str, u32)> = inputs.iter().map(|(n, w)| (n.as_str(), *w)).collect();
    let mut p = PipeBuilder::new("random", &refs).unwrap();
    let mut open = vec![OpenBranch { id: MAIN, available: inputs.clone() }];
    let mut branches = 1;
    let mut zones = 1;
    let mut fresh = 0;

    while zones + open.len() - 1 < max_zones {
        let roll = rng.gen_range(0..10);
        if roll < 2 && branches < max_branches {
            let parent = rng.gen_range(0..open.len());
            let name = format!("b{branches}");
            let id = p.split(open[parent].id, &name).unwrap();
            let available = open[parent].available.clone();
            open.push(OpenBranch { id, available });
            branches += 1;
        } else if roll < 3 && open.len() > 1 {
            let k = rng.gen_range(1..open.len());
            merge_branch(&mut p, &mut open, k);
            zones += 1;
        } else {
            let k = rng.gen_range(0..open.len());
            let kind = match rng.gen_range(0..6) {
                0 | 1 => StepKind::Wire,
                2..=4 => StepKind::Reg,
                _ => StepKind::Delay(rng.gen_range(2..=3)),
            };
            let mut body = StepBody::new(&format!("st{zones}"), kind);
            for _ in 0..rng.gen_range(1..=2) {
                let expr = random_expr(rng, &open[k].available);
                let lookup = |n: &str| open[k].available.iter().find(|s| s.0 == n).map(|s| s.1);
                let width = expr.width(&lookup).expect("generated from available signals");
                let name = format!("v{fresh}");
                fresh += 1;
                body = body.define(&name, width, expr);
                open[k].available.push((name, width));
            }
            // a register step must not read its own defines
            if body.kind != StepKind::Wire {
                let defined: Vec<String> = body.defines.iter().map(|d| d.name.clone()).collect();
                if body.reads().iter().any(|r| defined.contains(r)) {
                    let keep = body.defines.len() - 1;
                    open[k].available.pop();
                    body.defines.truncate(keep);
                }
            }
            p.add_step(open[k].id, body).unwrap();
            zones += 1;
        }
    }
    while open.len() > 1 {
        let k = open.len() - 1;
        merge_branch(&mut p, &mut open, k);
    }
    let avail = &open[0].available;
    let n_out = rng.gen_range(1..=2);
    let mut mapping: Vec<(String, String)> = Vec::new();
    for i in 0..n_out {
        let (sig, _) = avail.choose(rng).unwrap();
        mapping.push((format!("o{i}"), sig.clone()));
    }
    let m: Vec<(&str, &str)> = mapping.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    p.drive_output(&m).unwrap();
    p
}

fn merge_branch(p: &mut PipeBuilder, open: &mut Vec<OpenBranch>, k: usize) {
    let gone = open.remove(k);
    p.merge(gone.id).unwrap();
    for s in gone.available {
        if !open[0].available.contains(&s) {
            open[0].available.push(s);
        }
    }
}

fn random_expr<R: Rng>(rng: &mut R, available: &[(String, u32)]) -> Expr {
    let (a, wa) = available.choose(rng).unwrap().clone();
    let (b, _) = available.choose(rng).unwrap().clone();
    let e = match rng.gen_range(0..8) {
        0 => var(&a) + var(&b),
        1 => var(&a) - var(&b),
        2 => var(&a) ^ var(&b),
        3 => var(&a) & var(&b),
        4 => var(&a) | var(&b),
        5 => !var(&a),
        6 if wa > 1 => var(&a).slice(wa - 1, 1),
        _ => var(&a) * var(&b),
    };
    let w = e
        .width(&|n| available.iter().find(|s| s.0 == n).map(|s| s.1))
        .expect("generated from available signals");
    if w > 16 {
        e.slice(15, 0)
    } else {
        e
    }
}
