use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{data_inputs, data_outputs, random_bits, simulate, SimError, Stimulus, Trace, DEFAULT_RESET_CYCLES};
use crate::bits::Bits;
use crate::model::{evaluate, SyncGraph};
use crate::netlist::{Cell, Netlist};
use crate::protocol::Protocol;

/// First point where two runs disagree. For Raw netlists `index` is the
/// input item whose response differs; under ReadyValid it is the position
/// in the accepted-output sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub trial: usize,
    pub cycle: usize,
    pub index: usize,
    pub port: String,
    pub expected: Bits,
    pub actual: Bits,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub trials: usize,
    pub cycles: usize,
    /// Output samples compared across all trials.
    pub compared: usize,
    pub divergence: Option<Divergence>,
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        self.divergence.is_none()
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.divergence {
            None => write!(f, "OK ({} trials x {} cycles, {} samples compared)", self.trials, self.cycles, self.compared),
            Some(d) => write!(
                f,
                "FAIL: trial {} cycle {} item {}: `{}` expected {} got {}",
                d.trial, d.cycle, d.index, d.port, d.expected, d.actual
            ),
        }
    }
}

fn latency_of(n: &Netlist, port: &str) -> u64 {
    n.latencies.iter().find(|l| l.port == port).map_or(0, |l| l.latency)
}

/// Upper bound on any input-to-output delay: every sequential element
/// contributes its full depth.
fn response_bound(n: &Netlist) -> usize {
    let total: u64 = n
        .cells
        .iter()
        .map(|c| match c {
            Cell::Comb { .. } => 0,
            Cell::Reg { .. } => 1,
            Cell::ShiftReg { depth, .. } => *depth,
            Cell::Fifo { depth, .. } => *depth + 1,
            Cell::Counter { init, .. } => *init + 1,
        })
        .sum();
    total as usize + 2
}

const LATENCY_ATTEMPTS: u64 = 16;

/// Measures each data output's delay by holding zero inputs until the
/// circuit is steady, then stepping every input to a fresh random value
/// and timing the first output change. A change can only appear exactly
/// one latency after the step, so several random steps are tried until
/// every output has moved.
pub fn measured_latencies(n: &Netlist, seed: u64) -> Result<Vec<(String, u64)>, SimError> {
    let bound = response_bound(n);
    let ports = data_inputs(n);
    let outputs = data_outputs(n);
    let mut found: IndexMap<String, Option<u64>> = outputs.iter().map(|(p, _)| (p.clone(), None)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_at = DEFAULT_RESET_CYCLES + bound;
    for _ in 0..LATENCY_ATTEMPTS {
        if found.values().all(Option::is_some) {
            break;
        }
        let zeros: IndexMap<String, Bits> = ports.iter().map(|(p, w)| (p.clone(), Bits::zero(*w))).collect();
        let step: IndexMap<String, Bits> = ports.iter().map(|(p, w)| (p.clone(), random_bits(&mut rng, *w))).collect();
        let mut items = vec![zeros; bound];
        items.push(step);
        let stim = Stimulus {
            cycles: step_at + bound + 1,
            reset_cycles: DEFAULT_RESET_CYCLES,
            items,
            source_valid: Vec::new(),
            sink_ready: Vec::new(),
        };
        let trace = simulate(n, &stim)?;
        for (port, slot) in found.iter_mut().filter(|(_, s)| s.is_none()) {
            let series = trace.series(port).expect("output column");
            let before = series[step_at - 1];
            *slot = (step_at..trace.len()).find(|&t| series[t] != before).map(|t| (t - step_at) as u64);
        }
    }
    found
        .into_iter()
        .map(|(port, l)| l.map(|l| (port.clone(), l)).ok_or(SimError::NoResponse { port, bound }))
        .collect()
}

/// Largest measured output latency.
pub fn measured_latency(n: &Netlist, seed: u64) -> Result<u64, SimError> {
    Ok(measured_latencies(n, seed)?.into_iter().map(|(_, l)| l).max().unwrap_or(0))
}

fn interface(n: &Netlist) -> (Vec<(String, u32)>, Vec<(String, u32)>) {
    let mut i = data_inputs(n);
    let mut o = data_outputs(n);
    i.sort();
    o.sort();
    (i, o)
}

fn trial_stimulus(n: &Netlist, cycles: usize, seed: u64) -> Stimulus {
    let stim = Stimulus::random(n, cycles, seed);
    if n.protocol == Protocol::ReadyValid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
        let (source, sink) = (rng.gen_range(0.1..=0.9), rng.gen_range(0.1..=0.9));
        stim.with_duty(source, sink, seed)
    } else {
        stim
    }
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(trial as u64)
}

fn compare_transactions(
    trial: usize,
    expected: &[IndexMap<String, Bits>],
    actual: &[(usize, &IndexMap<String, Bits>)],
) -> (usize, Option<Divergence>) {
    let mut compared = 0;
    for (index, (want, (cycle, got))) in expected.iter().zip(actual).enumerate() {
        for (port, w) in want {
            compared += 1;
            let g = &got[port.as_str()];
            if g != w {
                let d = Divergence { trial, cycle: *cycle, index, port: port.clone(), expected: w.clone(), actual: g.clone() };
                return (compared, Some(d));
            }
        }
    }
    (compared, None)
}

fn count_divergence(trial: usize, cycle: usize, expected: usize, actual: usize) -> Divergence {
    Divergence {
        trial,
        cycle,
        index: actual.min(expected),
        port: "accepted_outputs".into(),
        expected: Bits::from_u64(expected as u64, 64),
        actual: Bits::from_u64(actual as u64, 64),
    }
}

fn compare_runs(a: &Netlist, b: &Netlist, trial: usize, ta: &Trace, tb: &Trace) -> (usize, Option<Divergence>) {
    if a.protocol == Protocol::ReadyValid {
        let expected: Vec<_> = ta.accepted_outputs.iter().map(|t| t.values.clone()).collect();
        let actual: Vec<_> = tb.accepted_outputs.iter().map(|t| (t.cycle, &t.values)).collect();
        let (compared, d) = compare_transactions(trial, &expected, &actual);
        if d.is_some() {
            return (compared, d);
        }
        let same_latency = data_outputs(a).iter().all(|(p, _)| latency_of(a, p) == latency_of(b, p));
        if same_latency && expected.len() != actual.len() {
            let cycle = tb.len().saturating_sub(1);
            return (compared, Some(count_divergence(trial, cycle, expected.len(), actual.len())));
        }
        return (compared, None);
    }
    let reset = ta.reset_cycles;
    let mut compared = 0;
    for (port, _) in data_outputs(a) {
        let (la, lb) = (latency_of(a, &port) as usize, latency_of(b, &port) as usize);
        let span = ta.len().saturating_sub(reset + la.max(lb));
        let (ca, cb) = (ta.column(&port).unwrap(), tb.column(&port).unwrap());
        for k in 0..span {
            compared += 1;
            let (va, vb) = (&ta.rows[reset + k + la][ca], &tb.rows[reset + k + lb][cb]);
            if va != vb {
                let d = Divergence { trial, cycle: reset + k + lb, index: k, port, expected: va.clone(), actual: vb.clone() };
                return (compared, Some(d));
            }
        }
    }
    (compared, None)
}

fn collect(trials: usize, cycles: usize, results: Vec<Result<(usize, Option<Divergence>), SimError>>) -> Result<Verdict, SimError> {
    let mut verdict = Verdict { trials, cycles, compared: 0, divergence: None };
    for r in results {
        let (compared, d) = r?;
        verdict.compared += compared;
        if verdict.divergence.is_none() {
            verdict.divergence = d;
        }
    }
    Ok(verdict)
}

/// Runs `trials` matched random stimuli through both netlists in parallel.
/// Raw outputs are aligned by each netlist's own latency; ReadyValid runs
/// use random source and sink duty cycles and compare accepted outputs.
pub fn check_equivalence(a: &Netlist, b: &Netlist, trials: usize, cycles: usize, seed: u64) -> Result<Verdict, SimError> {
    if a.protocol != b.protocol {
        return Err(SimError::PortMismatch(format!("protocol {} vs {}", a.protocol, b.protocol)));
    }
    let (ia, oa) = interface(a);
    let (ib, ob) = interface(b);
    if ia != ib || oa != ob {
        return Err(SimError::PortMismatch(format!("{ia:?} -> {oa:?} vs {ib:?} -> {ob:?}")));
    }
    let results: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let stim = trial_stimulus(a, cycles, trial_seed(seed, trial));
            let ta = simulate(a, &stim)?;
            let tb = simulate(b, &stim)?;
            Ok(compare_runs(a, b, trial, &ta, &tb))
        })
        .collect();
    collect(trials, cycles, results)
}

/// Checks simulated outputs against the software evaluation of the step
/// bodies: each Raw input item must reappear at every output exactly that
/// output's latency later, and under ReadyValid the accepted outputs must
/// be the golden function of the accepted inputs, in order and without
/// loss beyond what is still in flight.
pub fn check_golden(graph: &SyncGraph, n: &Netlist, stim: &Stimulus) -> Result<Verdict, SimError> {
    let trace = simulate(n, stim)?;
    let eval = |values: &IndexMap<String, Bits>| {
        let inputs: HashMap<String, Bits> = values.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        evaluate(graph, &inputs)
    };
    let mut verdict = Verdict { trials: 1, cycles: stim.cycles, compared: 0, divergence: None };
    if n.protocol == Protocol::ReadyValid {
        let expected = trace.accepted_inputs.iter().map(|t| eval(&t.values)).collect::<Result<Vec<_>, _>>()?;
        let actual: Vec<_> = trace.accepted_outputs.iter().map(|t| (t.cycle, &t.values)).collect();
        let (compared, d) = compare_transactions(0, &expected, &actual);
        verdict.compared = compared;
        verdict.divergence = d;
        let max_latency = n.latencies.iter().map(|l| l.latency as usize).max().unwrap_or(0);
        if verdict.divergence.is_none() && actual.len() + max_latency < expected.len() {
            verdict.divergence = Some(count_divergence(0, trace.len().saturating_sub(1), expected.len(), actual.len()));
        }
        return Ok(verdict);
    }
    let reset = stim.reset_cycles;
    if stim.items.is_empty() {
        return Ok(verdict);
    }
    // Past the end of the list the last item stays applied.
    let mut cache: Option<(usize, IndexMap<String, Bits>)> = None;
    for k in 0..stim.cycles - reset {
        let idx = k.min(stim.items.len() - 1);
        if cache.as_ref().map(|c| c.0) != Some(idx) {
            cache = Some((idx, eval(&stim.items[idx])?));
        }
        let want = &cache.as_ref().expect("just filled").1;
        for (port, _) in data_outputs(n) {
            let t = reset + k + latency_of(n, &port) as usize;
            let Some(got) = trace.value(t, &port) else { continue };
            verdict.compared += 1;
            if *got != want[port.as_str()] {
                let expected = want[port.as_str()].clone();
                verdict.divergence = Some(Divergence { trial: 0, cycle: t, index: k, port, expected, actual: got.clone() });
                return Ok(verdict);
            }
        }
    }
    Ok(verdict)
}
