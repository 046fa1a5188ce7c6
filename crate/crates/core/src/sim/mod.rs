//! Cycle-accurate interpreter for [`Netlist`]s, used as the verification
//! oracle for latency, strategy equivalence and handshake behavior.

mod check;
mod engine;
mod trace;

pub use check::{check_equivalence, check_golden, measured_latencies, measured_latency, Divergence, Verdict};
pub use engine::Engine;
pub use trace::{Trace, TraceColumn, Transaction};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::Bits;
use crate::model::ModelError;
use crate::netlist::{Netlist, NetlistError, PortDir, PortRole};
use crate::protocol::Protocol;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("port interfaces differ: {0}")]
    PortMismatch(String),
    #[error("stimulus drives unknown input port `{0}`")]
    UnknownPort(String),
    #[error("stimulus value for `{port}` is {found} bits wide, port is {expected}")]
    StimulusWidth { port: String, expected: u32, found: u32 },
    #[error("stimulus runs {cycles} cycles but asks for {reset_cycles} reset cycles")]
    ResetTooLong { cycles: usize, reset_cycles: usize },
    #[error("no net named `{0}` to probe")]
    UnknownProbe(String),
    #[error("output `{port}` never responded within {bound} cycles")]
    NoResponse { port: String, bound: usize },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Input schedule for one simulation run.
///
/// In Raw mode item `k` drives the data inputs at cycle `reset_cycles + k`
/// and the last item is held afterwards. Under ReadyValid the items are
/// offered in order, one per accepted handshake. Inputs read zero during
/// reset. Empty schedules mean "always asserted"; schedules are indexed
/// from the first cycle after reset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stimulus {
    pub cycles: usize,
    pub reset_cycles: usize,
    pub items: Vec<IndexMap<String, Bits>>,
    pub source_valid: Vec<bool>,
    pub sink_ready: Vec<bool>,
}

pub const DEFAULT_RESET_CYCLES: usize = 2;

pub fn random_bits<R: Rng>(rng: &mut R, width: u32) -> Bits {
    let chunks: Vec<Bits> = (0..width.div_ceil(128)).map(|_| Bits::from_u128(rng.gen(), 128)).collect();
    let refs: Vec<&Bits> = chunks.iter().collect();
    Bits::concat(&refs).resize(width)
}

/// Data input ports as `(name, width)`.
pub fn data_inputs(n: &Netlist) -> Vec<(String, u32)> {
    n.ports_with(PortRole::Data, PortDir::Input).map(|p| (p.name.clone(), n.width(p.net))).collect()
}

pub fn data_outputs(n: &Netlist) -> Vec<(String, u32)> {
    n.ports_with(PortRole::Data, PortDir::Output).map(|p| (p.name.clone(), n.width(p.net))).collect()
}

impl Stimulus {
    /// Holds the given values for the whole run.
    pub fn constant(values: IndexMap<String, Bits>, cycles: usize) -> Self {
        Stimulus { cycles, reset_cycles: DEFAULT_RESET_CYCLES, items: vec![values], source_valid: Vec::new(), sink_ready: Vec::new() }
    }

    /// Fresh random values every cycle, handshakes always asserted.
    pub fn random(n: &Netlist, cycles: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ports = data_inputs(n);
        let items = (0..cycles)
            .map(|_| ports.iter().map(|(name, w)| (name.clone(), random_bits(&mut rng, *w))).collect())
            .collect();
        Stimulus { cycles, reset_cycles: DEFAULT_RESET_CYCLES, items, source_valid: Vec::new(), sink_ready: Vec::new() }
    }

    /// Random source-valid and sink-ready schedules with the given
    /// probability of being asserted each cycle.
    pub fn with_duty(mut self, source: f64, sink: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d00d);
        let len = self.cycles.saturating_sub(self.reset_cycles);
        self.source_valid = (0..len).map(|_| rng.gen_bool(source)).collect();
        self.sink_ready = (0..len).map(|_| rng.gen_bool(sink)).collect();
        self
    }

    fn check(&self, n: &Netlist) -> Result<(), SimError> {
        if self.cycles < self.reset_cycles {
            return Err(SimError::ResetTooLong { cycles: self.cycles, reset_cycles: self.reset_cycles });
        }
        let ports = data_inputs(n);
        for item in &self.items {
            for (name, v) in item {
                let (_, w) = ports.iter().find(|(p, _)| p == name).ok_or_else(|| SimError::UnknownPort(name.clone()))?;
                if v.width() > *w {
                    return Err(SimError::StimulusWidth { port: name.clone(), expected: *w, found: v.width() });
                }
            }
        }
        Ok(())
    }
}

/// Runs the stimulus and samples every port each cycle.
pub fn simulate(n: &Netlist, stim: &Stimulus) -> Result<Trace, SimError> {
    simulate_with_probes(n, stim, &[])
}

/// Like [`simulate`], additionally sampling the named internal nets.
pub fn simulate_with_probes(n: &Netlist, stim: &Stimulus, probes: &[&str]) -> Result<Trace, SimError> {
    stim.check(n)?;
    let probe_nets = probes
        .iter()
        .map(|p| n.net_by_name(p).ok_or_else(|| SimError::UnknownProbe(p.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut e = Engine::new(n)?;
    let rst = n.reset_net();
    let inputs: Vec<_> = n.ports_with(PortRole::Data, PortDir::Input).collect();
    let outputs: Vec<_> = n.ports_with(PortRole::Data, PortDir::Output).collect();
    let role = |r: PortRole| n.ports.iter().find(|p| p.role == r).map(|p| p.net);
    let (in_valid, out_ready, out_valid, in_ready) =
        (role(PortRole::InValid), role(PortRole::OutReady), role(PortRole::OutValid), role(PortRole::InReady));
    let handshake = n.protocol == Protocol::ReadyValid;

    let mut columns: Vec<TraceColumn> =
        n.ports.iter().map(|p| TraceColumn { name: p.name.clone(), width: n.width(p.net) }).collect();
    let mut sampled: Vec<_> = n.ports.iter().map(|p| p.net).collect();
    for (name, net) in probes.iter().zip(&probe_nets) {
        columns.push(TraceColumn { name: name.to_string(), width: n.width(*net) });
        sampled.push(*net);
    }
    let mut trace = Trace { name: n.name.clone(), reset_cycles: stim.reset_cycles, columns, ..Trace::default() };

    let mut next_item = 0usize;
    for t in 0..stim.cycles {
        let in_reset = t < stim.reset_cycles;
        let k = t.saturating_sub(stim.reset_cycles);
        let item = if in_reset || stim.items.is_empty() {
            None
        } else if handshake {
            stim.items.get(next_item)
        } else {
            stim.items.get(k.min(stim.items.len() - 1))
        };
        e.set(rst, Bits::from_bool(in_reset));
        for p in &inputs {
            let v = item.and_then(|i| i.get(&p.name)).cloned().unwrap_or_else(|| Bits::zero(n.width(p.net)));
            e.set(p.net, v);
        }
        let offer = !in_reset && item.is_some() && stim.source_valid.get(k).copied().unwrap_or(true);
        if let Some(net) = in_valid {
            e.set(net, Bits::from_bool(offer));
        }
        if let Some(net) = out_ready {
            e.set(net, Bits::from_bool(in_reset || stim.sink_ready.get(k).copied().unwrap_or(true)));
        }
        e.settle();
        trace.rows.push(sampled.iter().map(|net| e.get(*net).clone()).collect());

        if handshake && !in_reset {
            let high = |net: Option<_>| net.is_some_and(|n| !e.get(n).is_zero());
            if offer && high(in_ready) {
                let values = inputs.iter().map(|p| (p.name.clone(), e.get(p.net).clone())).collect();
                trace.accepted_inputs.push(Transaction { cycle: t, values });
                next_item += 1;
            }
            if high(out_valid) && high(out_ready) {
                let values = outputs.iter().map(|p| (p.name.clone(), e.get(p.net).clone())).collect();
                trace.accepted_outputs.push(Transaction { cycle: t, values });
            }
        }
        e.clock(in_reset);
    }
    Ok(trace)
}
