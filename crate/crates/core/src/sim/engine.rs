use std::collections::VecDeque;

use crate::bits::Bits;
use crate::netlist::{Cell, CellId, CombOp, NetId, Netlist, NetlistError};

enum State {
    None,
    Shift(VecDeque<Bits>),
    Fifo { mem: Vec<Bits>, wptr: usize, rptr: usize, count: u64 },
}

/// Two-valued cycle engine over a checked netlist. Callers drive inputs,
/// call [`Engine::settle`], sample, then [`Engine::clock`].
pub struct Engine<'a> {
    n: &'a Netlist,
    values: Vec<Bits>,
    states: Vec<State>,
    order: Vec<CellId>,
}

impl<'a> Engine<'a> {
    pub fn new(n: &'a Netlist) -> Result<Self, NetlistError> {
        n.check()?;
        let order = n.comb_order()?;
        let values: Vec<Bits> = n.nets.iter().map(|net| Bits::zero(net.width)).collect();
        let states = n
            .cells
            .iter()
            .map(|c| match c {
                Cell::ShiftReg { d, depth, .. } => {
                    State::Shift((0..*depth).map(|_| Bits::zero(n.width(*d))).collect())
                }
                Cell::Fifo { din, depth, .. } => State::Fifo {
                    mem: (0..*depth).map(|_| Bits::zero(n.width(*din))).collect(),
                    wptr: 0,
                    rptr: 0,
                    count: 0,
                },
                _ => State::None,
            })
            .collect();
        let mut e = Engine { n, values, states, order };
        for c in &n.cells {
            if let Cell::Counter { q, init, .. } = c {
                e.values[q.0] = Bits::from_u64(*init, n.width(*q));
            }
        }
        e.publish();
        Ok(e)
    }

    pub fn set(&mut self, net: NetId, value: Bits) {
        let w = self.n.width(net);
        self.values[net.0] = value.resize(w);
    }

    pub fn get(&self, net: NetId) -> &Bits {
        &self.values[net.0]
    }

    fn high(&self, net: Option<NetId>) -> bool {
        net.map_or(true, |n| !self.values[n.0].is_zero())
    }

    /// Drives sequential outputs from internal state.
    fn publish(&mut self) {
        for (i, c) in self.n.cells.iter().enumerate() {
            match (c, &self.states[i]) {
                (Cell::ShiftReg { q, .. }, State::Shift(stages)) => {
                    self.values[q.0] = stages.back().expect("depth >= 2").clone();
                }
                (Cell::Fifo { full, empty, depth, .. }, State::Fifo { count, .. }) => {
                    self.values[full.0] = Bits::from_bool(*count == *depth);
                    self.values[empty.0] = Bits::from_bool(*count == 0);
                }
                _ => {}
            }
        }
    }

    /// Propagates values through combinational cells.
    pub fn settle(&mut self) {
        for &id in &self.order {
            let Cell::Comb { op, inputs, output } = &self.n.cells[id.0] else { continue };
            let v = |k: usize| &self.values[inputs[k].0];
            let out = match op {
                CombOp::Const(c) => c.clone(),
                CombOp::Buf => v(0).clone(),
                CombOp::Add => v(0).add(v(1)),
                CombOp::Sub => v(0).sub(v(1)),
                CombOp::Mul => v(0).mul(v(1)),
                CombOp::Xor => v(0).xor(v(1)),
                CombOp::And => v(0).and(v(1)),
                CombOp::Or => v(0).or(v(1)),
                CombOp::Not => v(0).not(),
                CombOp::Shl(k) => v(0).shl(*k),
                CombOp::Shr(k) => v(0).shr(*k),
                CombOp::Mux => Bits::mux(v(0), v(1), v(2)),
                CombOp::Slice(hi, lo) => v(0).slice(*hi, *lo),
                CombOp::Concat => {
                    let parts: Vec<&Bits> = inputs.iter().map(|n| &self.values[n.0]).collect();
                    Bits::concat(&parts)
                }
                CombOp::Eq => Bits::from_bool(v(0).eq_value(v(1))),
            };
            let w = self.n.width(*output);
            self.values[output.0] = out.resize(w);
        }
    }

    /// Rising clock edge with synchronous reset taken from `rst`.
    pub fn clock(&mut self, rst: bool) {
        let mut updates: Vec<(NetId, Bits)> = Vec::new();
        for (i, c) in self.n.cells.iter().enumerate() {
            match c {
                Cell::Comb { .. } => {}
                Cell::Reg { d, q, enable, init, .. } => {
                    if rst {
                        updates.push((*q, init.clone()));
                    } else if self.high(*enable) {
                        updates.push((*q, self.values[d.0].clone()));
                    }
                }
                Cell::Counter { q, init, enable } => {
                    let w = self.n.width(*q);
                    if rst {
                        updates.push((*q, Bits::from_u64(*init, w)));
                    } else if self.high(*enable) && !self.values[q.0].is_zero() {
                        updates.push((*q, Bits::from_u64(self.values[q.0].to_u64() - 1, w)));
                    }
                }
                Cell::ShiftReg { d, enable, .. } => {
                    if self.high(*enable) {
                        let input = self.values[d.0].clone();
                        if let State::Shift(stages) = &mut self.states[i] {
                            stages.pop_back();
                            stages.push_front(input);
                        }
                    }
                }
                Cell::Fifo { din, dout, write_enable, read_enable, depth, .. } => {
                    let we = !self.values[write_enable.0].is_zero();
                    let re = !self.values[read_enable.0].is_zero();
                    let data = self.values[din.0].clone();
                    let width = self.n.width(*dout);
                    let State::Fifo { mem, wptr, rptr, count } = &mut self.states[i] else { continue };
                    if rst {
                        *wptr = 0;
                        *rptr = 0;
                        *count = 0;
                        updates.push((*dout, Bits::zero(width)));
                        continue;
                    }
                    let do_write = we && *count < *depth;
                    let do_read = re && *count > 0;
                    if do_read {
                        updates.push((*dout, mem[*rptr].clone()));
                        *rptr = (*rptr + 1) % mem.len();
                    }
                    if do_write {
                        mem[*wptr] = data;
                        *wptr = (*wptr + 1) % mem.len();
                    }
                    match (do_write, do_read) {
                        (true, false) => *count += 1,
                        (false, true) => *count -= 1,
                        _ => {}
                    }
                }
            }
        }
        for (net, v) in updates {
            self.values[net.0] = v;
        }
        self.publish();
    }
}
