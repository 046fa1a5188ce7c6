use std::collections::HashMap;

use super::{bits_for, Cell, CombOp, Netlist, NetlistError, NetId, OutputLatency, PortDir, PortRole};
use crate::bits::Bits;
use crate::model::{Expr, RecordedStep, RelationId, RelationOrigin, StepKind, SyncGraph, ZoneId};
use crate::protocol::{HandshakePlan, Protocol, FIFO_READ_LATENCY, READY_NET};
use crate::resolve::{select_primitive, validate, ChainStyle, PrimitiveKind, PrimitivePolicy};

/// Lowers a resolved graph into a netlist. Step bodies become one cell
/// per operator, every relation becomes the primitive chosen for it, and
/// the handshake plan adds valid/ready ports and FIFO control.
pub fn lower(graph: &SyncGraph, plan: &HandshakePlan, policy: &PrimitivePolicy) -> Result<Netlist, NetlistError> {
    let report = validate(graph);
    if !report.is_ok() {
        return Err(NetlistError::Lowering(report.to_string()));
    }
    let depth = graph.zone_depths().map_err(|e| NetlistError::Lowering(e.to_string()))?;
    let order = graph.forward_order().map_err(|e| NetlistError::Lowering(e.to_string()))?;
    let mut l = Lowerer {
        g: graph,
        plan,
        policy: *policy,
        n: Netlist::new(&graph.name, plan.protocol),
        slots: HashMap::new(),
        ready: None,
        valid: Vec::new(),
        rst: NetId(0),
    };
    l.rst = l.n.add_port("rst", PortDir::Input, PortRole::Reset, 1);
    if plan.protocol == Protocol::ReadyValid {
        let v0 = l.n.add_port("in_valid", PortDir::Input, PortRole::InValid, 1);
        l.valid.push(v0);
    }
    for (name, decl) in &graph.signals {
        if decl.declaring_zone == graph.input_zone {
            let net = l.n.add_port(name, PortDir::Input, PortRole::Data, decl.width);
            l.slots.insert((graph.input_zone, name.clone()), net);
        }
    }
    if plan.protocol == Protocol::ReadyValid {
        let ready = l.n.add_port(READY_NET, PortDir::Input, PortRole::OutReady, 1);
        l.ready = Some(ready);
        for k in 1..=plan.valid_chain_len {
            let q = l.n.add_net(&format!("valid_{k}"), 1);
            let d = l.valid[(k - 1) as usize];
            l.n.add_cell(Cell::Reg { d, q, enable: Some(ready), init: Bits::zero(1), no_extract: false });
            l.valid.push(q);
        }
    }

    for &z in &order {
        if let Some(step) = graph.steps.iter().find(|s| s.sink == z) {
            l.lower_step(step)?;
        }
        let names: Vec<String> = graph.zone(z).slots.keys().cloned().collect();
        for name in names {
            l.slot(z, &name)?;
        }
    }

    for o in &graph.outputs {
        let src = l.slot(o.zone, &o.signal)?;
        let port = l.n.add_port(&o.name, PortDir::Output, PortRole::Data, l.n.width(src));
        l.n.add_cell(Cell::Comb { op: CombOp::Buf, inputs: vec![src], output: port });
        l.n.latencies.push(OutputLatency { port: o.name.clone(), latency: depth[o.zone.0] });
    }
    if let Some(ready) = l.ready {
        let last = *l.valid.last().expect("chain starts with in_valid");
        let out_valid = l.n.add_port("out_valid", PortDir::Output, PortRole::OutValid, 1);
        l.n.add_cell(Cell::Comb { op: CombOp::Buf, inputs: vec![last], output: out_valid });
        let in_ready = l.n.add_port("in_ready", PortDir::Output, PortRole::InReady, 1);
        l.n.add_cell(Cell::Comb { op: CombOp::Buf, inputs: vec![ready], output: in_ready });
    }
    l.n.check()?;
    Ok(l.n)
}

struct Lowerer<'a> {
    g: &'a SyncGraph,
    plan: &'a HandshakePlan,
    policy: PrimitivePolicy,
    n: Netlist,
    slots: HashMap<(ZoneId, String), NetId>,
    ready: Option<NetId>,
    valid: Vec<NetId>,
    rst: NetId,
}

impl Lowerer<'_> {
    fn base(&self, zone: ZoneId, signal: &str) -> String {
        format!("{}__{}", self.g.label(zone), signal)
    }

    /// Net carrying `signal` in `zone`, lowering its feed on first use.
    fn slot(&mut self, zone: ZoneId, signal: &str) -> Result<NetId, NetlistError> {
        if let Some(&net) = self.slots.get(&(zone, signal.to_string())) {
            return Ok(net);
        }
        let slot = self.g.zone(zone).slots.get(signal).ok_or_else(|| {
            NetlistError::Lowering(format!("`{signal}` is not available in `{}`", self.g.label(zone)))
        })?;
        let feed = slot.feed.ok_or_else(|| {
            NetlistError::Lowering(format!("`{signal}` in `{}` has no source", self.g.label(zone)))
        })?;
        let r = self.g.relation(feed);
        let src = self.slot(r.source, signal)?;
        let latency = r.latency.known().expect("validated");
        let width = self.n.width(src);
        let prim = match (r.origin, r.primitive) {
            (RelationOrigin::Resolution, Some(p)) => p,
            _ => select_primitive(latency, width, &self.policy.without_fifos()),
        };
        let base = self.base(zone, signal);
        let net = self.delay(src, prim, &base, Some(feed))?;
        self.slots.insert((zone, signal.to_string()), net);
        Ok(net)
    }

    fn lower_step(&mut self, step: &RecordedStep) -> Result<(), NetlistError> {
        for d in &step.body.defines {
            let base = self.base(step.sink, &d.name);
            let (comb_name, prim) = match step.body.kind {
                StepKind::Wire => (base.clone(), PrimitiveKind::Wire),
                kind => (
                    format!("{base}__d"),
                    select_primitive(kind.latency(), d.width, &self.policy.without_fifos()),
                ),
            };
            let value = self.expr(step, &d.expr, &comb_name, true)?;
            if self.n.width(value) != d.width {
                return Err(NetlistError::WidthMismatch {
                    net: base,
                    expected: d.width,
                    found: self.n.width(value),
                });
            }
            let net = self.delay(value, prim, &base, None)?;
            self.slots.insert((step.sink, d.name.clone()), net);
        }
        Ok(())
    }

    /// One combinational cell per operator; the outermost one drives a net
    /// named `name`.
    fn expr(&mut self, step: &RecordedStep, e: &Expr, name: &str, top: bool) -> Result<NetId, NetlistError> {
        let tmp = format!("{name}__t");
        let sub = |l: &mut Self, x: &Expr| l.expr(step, x, &tmp, false);
        let (op, inputs) = match e {
            Expr::Ref(r) => {
                let local = step.body.kind == StepKind::Wire && step.body.defines.iter().any(|d| &d.name == r);
                let net = if local {
                    *self.slots.get(&(step.sink, r.clone())).ok_or_else(|| {
                        NetlistError::Lowering(format!("`{r}` used before its definition in `{}`", step.body.name))
                    })?
                } else {
                    self.slot(step.source, r)?
                };
                if !top {
                    return Ok(net);
                }
                (CombOp::Buf, vec![net])
            }
            Expr::Const(v) => (CombOp::Const(v.clone()), vec![]),
            Expr::Add(a, b) => (CombOp::Add, vec![sub(self, a)?, sub(self, b)?]),
            Expr::Sub(a, b) => (CombOp::Sub, vec![sub(self, a)?, sub(self, b)?]),
            Expr::Mul(a, b) => (CombOp::Mul, vec![sub(self, a)?, sub(self, b)?]),
            Expr::Xor(a, b) => (CombOp::Xor, vec![sub(self, a)?, sub(self, b)?]),
            Expr::And(a, b) => (CombOp::And, vec![sub(self, a)?, sub(self, b)?]),
            Expr::Or(a, b) => (CombOp::Or, vec![sub(self, a)?, sub(self, b)?]),
            Expr::Not(a) => (CombOp::Not, vec![sub(self, a)?]),
            Expr::Shl(a, k) => (CombOp::Shl(*k), vec![sub(self, a)?]),
            Expr::Shr(a, k) => (CombOp::Shr(*k), vec![sub(self, a)?]),
            Expr::Mux(s, a, b) => (CombOp::Mux, vec![sub(self, s)?, sub(self, a)?, sub(self, b)?]),
            Expr::Slice(a, hi, lo) => (CombOp::Slice(*hi, *lo), vec![sub(self, a)?]),
            Expr::Concat(parts) => {
                let nets = parts.iter().map(|p| sub(self, p)).collect::<Result<Vec<_>, _>>()?;
                (CombOp::Concat, nets)
            }
        };
        let w = |n: NetId| self.n.width(n);
        let width = match &op {
            CombOp::Const(v) => v.width(),
            CombOp::Buf | CombOp::Not | CombOp::Shl(_) | CombOp::Shr(_) => w(inputs[0]),
            CombOp::Add | CombOp::Sub | CombOp::Xor | CombOp::And | CombOp::Or => w(inputs[0]).max(w(inputs[1])),
            CombOp::Mul => w(inputs[0]) + w(inputs[1]),
            CombOp::Mux => w(inputs[1]),
            CombOp::Slice(hi, lo) => hi - lo + 1,
            CombOp::Concat => inputs.iter().map(|&n| w(n)).sum(),
            CombOp::Eq => 1,
        };
        Ok(self.n.comb(name, width, op, inputs))
    }

    fn enable(&self) -> Option<NetId> {
        self.ready
    }

    fn reg(&mut self, d: NetId, name: &str, no_extract: bool) -> NetId {
        let width = self.n.width(d);
        let q = self.n.add_net(name, width);
        let enable = self.enable();
        self.n.add_cell(Cell::Reg { d, q, enable, init: Bits::zero(width), no_extract });
        q
    }

    /// Implements `prim` on `src`; the result net is named `name`.
    fn delay(
        &mut self,
        src: NetId,
        prim: PrimitiveKind,
        name: &str,
        relation: Option<RelationId>,
    ) -> Result<NetId, NetlistError> {
        Ok(match prim {
            PrimitiveKind::Wire => src,
            PrimitiveKind::Register => self.reg(src, name, false),
            PrimitiveKind::RegisterChain { depth, style } => {
                let mut cur = src;
                for k in 1..depth {
                    cur = self.reg(cur, &format!("{name}__p{k}"), style == ChainStyle::NoExtract);
                }
                self.reg(cur, name, style == ChainStyle::NoExtract)
            }
            PrimitiveKind::ShiftRegister { depth } => {
                let q = self.n.add_net(name, self.n.width(src));
                let enable = self.enable();
                self.n.add_cell(Cell::ShiftReg { d: src, q, depth, enable });
                q
            }
            PrimitiveKind::Fifo { depth, .. } => self.fifo(src, depth, name, relation)?,
        })
    }

    fn fifo(&mut self, din: NetId, depth: u64, name: &str, relation: Option<RelationId>) -> Result<NetId, NetlistError> {
        let binding = relation
            .and_then(|r| self.plan.fifo_bindings.iter().find(|b| b.relation == r))
            .ok_or_else(|| NetlistError::Lowering(format!("no FIFO control planned for `{name}`")))?
            .clone();
        if binding.depth != depth {
            return Err(NetlistError::Lowering(format!("FIFO `{name}` planned with depth {}", binding.depth)));
        }
        let full = self.n.add_net(&format!("{name}__full"), 1);
        let empty = self.n.add_net(&format!("{name}__empty"), 1);
        let (write_enable, read_enable) = match self.plan.protocol {
            Protocol::Raw => {
                let init = binding.wiring.counter_init.unwrap_or(depth - FIFO_READ_LATENCY);
                let width = bits_for(init);
                let counter = self.n.add_net(&format!("{name}__read_start"), width);
                self.n.add_cell(Cell::Counter { q: counter, init, enable: None });
                let zero = self.n.comb(&format!("{name}__zero"), width, CombOp::Const(Bits::zero(width)), vec![]);
                let re = self.n.comb(&format!("{name}__re"), 1, CombOp::Eq, vec![counter, zero]);
                let we = self.n.comb(&format!("{name}__we"), 1, CombOp::Not, vec![self.rst]);
                (we, re)
            }
            Protocol::ReadyValid => {
                let ready = self.ready.expect("ready/valid netlists have a ready net");
                let upstream_valid = self.valid[binding.write_tap as usize];
                let early_valid = self.valid[binding.read_tap as usize];
                let uv = self.n.comb(&format!("{name}__up_valid"), 1, CombOp::And, vec![upstream_valid, ready]);
                let not_full = self.n.comb(&format!("{name}__not_full"), 1, CombOp::Not, vec![full]);
                let we = self.n.comb(&format!("{name}__we"), 1, CombOp::And, vec![uv, not_full]);
                let dr = self.n.comb(&format!("{name}__down_ready"), 1, CombOp::And, vec![early_valid, ready]);
                let not_empty = self.n.comb(&format!("{name}__not_empty"), 1, CombOp::Not, vec![empty]);
                let re = self.n.comb(&format!("{name}__re"), 1, CombOp::And, vec![dr, not_empty]);
                (we, re)
            }
        };
        let dout = self.n.add_net(name, self.n.width(din));
        self.n.add_cell(Cell::Fifo { din, dout, write_enable, read_enable, full, empty, depth });
        Ok(dout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::protocol::apply_protocol;
    use crate::resolve::{resolve, PrimitivePolicy, ShiftregMode, Strategy};

    fn build(p: crate::model::PipeBuilder, policy: PrimitivePolicy, protocol: Protocol) -> Netlist {
        let g = resolve(&p.build().unwrap(), &Strategy::DirectBackward(policy)).unwrap();
        let plan = apply_protocol(&g, protocol).unwrap();
        lower(&g, &plan, &policy).unwrap()
    }

    #[test]
    fn force_reg_uses_only_registers() {
        let n = build(
            fixtures::running_example_delay(),
            PrimitivePolicy::chains(ShiftregMode::ForceReg),
            Protocol::Raw,
        );
        let c = n.cell_counts();
        assert_eq!((c.fifo, c.shift_reg), (0, 0));
        assert!(n.cells.iter().any(|c| matches!(c, Cell::Reg { no_extract: true, .. })));
    }

    #[test]
    fn fifo_policy_gives_one_fifo_with_counter() {
        let n = build(fixtures::running_example_delay(), PrimitivePolicy::fifo(3, 3).unwrap(), Protocol::Raw);
        let c = n.cell_counts();
        assert_eq!((c.fifo, c.counter), (1, 1));
        let init = n.cells.iter().find_map(|c| match c {
            Cell::Counter { init, .. } => Some(*init),
            _ => None,
        });
        assert_eq!(init, Some(3));
        assert_eq!(n.latencies.iter().map(|l| l.latency).collect::<Vec<_>>(), vec![4, 4]);
    }

    #[test]
    fn passthrough_is_pure_comb() {
        let n = build(fixtures::passthrough(), PrimitivePolicy::auto(), Protocol::Raw);
        assert!(n.cells.iter().all(|c| !c.is_sequential()));
    }

    #[test]
    fn ready_valid_adds_handshake_ports() {
        let n = build(fixtures::running_example(), PrimitivePolicy::auto(), Protocol::ReadyValid);
        for p in ["in_valid", "out_ready", "out_valid", "in_ready"] {
            assert!(n.port(p).is_some(), "{p}");
        }
        let ready = n.port("out_ready").unwrap().net;
        assert!(n.cells.iter().all(|c| match c {
            Cell::Reg { enable, .. } => *enable == Some(ready),
            _ => true,
        }));
    }

    #[test]
    fn net_names_follow_zone_and_signal() {
        let n = build(fixtures::running_example(), PrimitivePolicy::auto(), Protocol::Raw);
        for name in ["addA__sumXY", "addB__sum2XY", "mul__mulXY", "xor__z", "addA__x"] {
            assert!(n.net_by_name(name).is_some(), "{name}");
        }
    }
}
