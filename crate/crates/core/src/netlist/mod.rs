//! Primitive-level circuit: nets with a single driver each, one-operator
//! combinational cells, registers, shift registers, constant-latency FIFOs
//! and startup counters.

mod dot;
mod lower;
mod verilog;

pub use dot::{emit_dot, DotOptions};
pub use lower::lower;
pub use verilog::{emit_verilog, EmitOptions, ShregAttr};

use serde::Serialize;

use crate::bits::Bits;
use crate::protocol::Protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NetId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CellId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Driver {
    Port,
    Cell(CellId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Net {
    pub name: String,
    pub width: u32,
    pub driver: Option<Driver>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PortDir {
    Input,
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PortRole {
    Reset,
    Data,
    InValid,
    InReady,
    OutValid,
    OutReady,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Port {
    pub name: String,
    pub dir: PortDir,
    pub role: PortRole,
    pub net: NetId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CombOp {
    Const(Bits),
    Buf,
    Add,
    Sub,
    Mul,
    Xor,
    And,
    Or,
    Not,
    Shl(u32),
    Shr(u32),
    /// Inputs: selector, value when set, value when clear.
    Mux,
    Slice(u32, u32),
    /// First input is the most significant part.
    Concat,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Cell {
    Comb { op: CombOp, inputs: Vec<NetId>, output: NetId },
    Reg { d: NetId, q: NetId, enable: Option<NetId>, init: Bits, no_extract: bool },
    /// Delay line without reset; contents start at zero.
    ShiftReg { d: NetId, q: NetId, depth: u64, enable: Option<NetId> },
    /// Registered read port: `dout` changes the cycle after a read.
    Fifo {
        din: NetId,
        dout: NetId,
        write_enable: NetId,
        read_enable: NetId,
        full: NetId,
        empty: NetId,
        depth: u64,
    },
    /// Loads `init` on reset and counts down to zero, then holds.
    Counter { q: NetId, init: u64, enable: Option<NetId> },
}

impl Cell {
    pub fn outputs(&self) -> Vec<NetId> {
        match self {
            Cell::Comb { output, .. } => vec![*output],
            Cell::Reg { q, .. } | Cell::ShiftReg { q, .. } | Cell::Counter { q, .. } => vec![*q],
            Cell::Fifo { dout, full, empty, .. } => vec![*dout, *full, *empty],
        }
    }

    pub fn inputs(&self) -> Vec<NetId> {
        match self {
            Cell::Comb { inputs, .. } => inputs.clone(),
            Cell::Reg { d, enable, .. } | Cell::ShiftReg { d, enable, .. } => {
                std::iter::once(*d).chain(*enable).collect()
            }
            Cell::Fifo { din, write_enable, read_enable, .. } => vec![*din, *write_enable, *read_enable],
            Cell::Counter { enable, .. } => enable.iter().copied().collect(),
        }
    }

    pub fn is_sequential(&self) -> bool {
        !matches!(self, Cell::Comb { .. })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    pub comb: usize,
    pub reg: usize,
    pub shift_reg: usize,
    pub fifo: usize,
    pub counter: usize,
    /// Flip-flop bits in registers (not counting shift registers or FIFOs).
    pub reg_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OutputLatency {
    pub port: String,
    pub latency: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Netlist {
    pub name: String,
    pub protocol: Protocol,
    pub ports: Vec<Port>,
    pub nets: Vec<Net>,
    pub cells: Vec<Cell>,
    /// Input-to-output latency of every data output, from the model.
    pub latencies: Vec<OutputLatency>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetlistError {
    #[error("net `{net}` is {found} bits wide, expected {expected}")]
    WidthMismatch { net: String, expected: u32, found: u32 },
    #[error("net `{net}` has {drivers} drivers")]
    MultipleDrivers { net: String, drivers: usize },
    #[error("net `{net}` is never driven")]
    Undriven { net: String },
    #[error("combinational cycle through `{net}`")]
    CombinationalCycle { net: String },
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("cannot lower: {0}")]
    Lowering(String),
}

impl Netlist {
    pub fn new(name: &str, protocol: Protocol) -> Self {
        Netlist { name: name.to_string(), protocol, ports: Vec::new(), nets: Vec::new(), cells: Vec::new(), latencies: Vec::new() }
    }

    pub fn net(&self, id: NetId) -> &Net {
        &self.nets[id.0]
    }

    pub fn width(&self, id: NetId) -> u32 {
        self.nets[id.0].width
    }

    pub fn net_by_name(&self, name: &str) -> Option<NetId> {
        self.nets.iter().position(|n| n.name == name).map(NetId)
    }

    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn ports_with(&self, role: PortRole, dir: PortDir) -> impl Iterator<Item = &Port> {
        self.ports.iter().filter(move |p| p.role == role && p.dir == dir)
    }

    /// Adds a net, suffixing the name until it is unique.
    pub fn add_net(&mut self, name: &str, width: u32) -> NetId {
        let mut unique = name.to_string();
        let mut k = 1;
        while self.nets.iter().any(|n| n.name == unique) || self.ports.iter().any(|p| p.name == unique) {
            unique = format!("{name}_{k}");
            k += 1;
        }
        self.nets.push(Net { name: unique, width, driver: None });
        NetId(self.nets.len() - 1)
    }

    pub fn add_port(&mut self, name: &str, dir: PortDir, role: PortRole, width: u32) -> NetId {
        self.nets.push(Net { name: name.to_string(), width, driver: None });
        let net = NetId(self.nets.len() - 1);
        if dir == PortDir::Input {
            self.nets[net.0].driver = Some(Driver::Port);
        }
        self.ports.push(Port { name: name.to_string(), dir, role, net });
        net
    }

    pub fn add_cell(&mut self, cell: Cell) -> CellId {
        let id = CellId(self.cells.len());
        for o in cell.outputs() {
            self.nets[o.0].driver = Some(Driver::Cell(id));
        }
        self.cells.push(cell);
        id
    }

    /// Convenience: a combinational cell driving a fresh net.
    pub fn comb(&mut self, name: &str, width: u32, op: CombOp, inputs: Vec<NetId>) -> NetId {
        let output = self.add_net(name, width);
        self.add_cell(Cell::Comb { op, inputs, output });
        output
    }

    pub fn reset_net(&self) -> NetId {
        self.ports.iter().find(|p| p.role == PortRole::Reset).expect("netlists always have a reset").net
    }

    pub fn cell_counts(&self) -> CellCounts {
        let mut c = CellCounts::default();
        for cell in &self.cells {
            match cell {
                Cell::Comb { .. } => c.comb += 1,
                Cell::Reg { q, .. } => {
                    c.reg += 1;
                    c.reg_bits += self.width(*q) as u64;
                }
                Cell::ShiftReg { .. } => c.shift_reg += 1,
                Cell::Fifo { .. } => c.fifo += 1,
                Cell::Counter { .. } => c.counter += 1,
            }
        }
        c
    }

    /// Combinational cells in evaluation order.
    pub fn comb_order(&self) -> Result<Vec<CellId>, NetlistError> {
        let n = self.cells.len();
        let mut indeg = vec![0usize; n];
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, cell) in self.cells.iter().enumerate() {
            if cell.is_sequential() {
                continue;
            }
            for input in cell.inputs() {
                if let Some(Driver::Cell(src)) = self.nets[input.0].driver {
                    if !self.cells[src.0].is_sequential() {
                        indeg[i] += 1;
                        users[src.0].push(i);
                    }
                }
            }
        }
        let mut ready: std::collections::VecDeque<usize> =
            (0..n).filter(|&i| !self.cells[i].is_sequential() && indeg[i] == 0).collect();
        let mut order = Vec::new();
        while let Some(i) = ready.pop_front() {
            order.push(CellId(i));
            for &u in &users[i] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    ready.push_back(u);
                }
            }
        }
        let comb_total = self.cells.iter().filter(|c| !c.is_sequential()).count();
        if order.len() != comb_total {
            let stuck = (0..n).find(|&i| !self.cells[i].is_sequential() && indeg[i] > 0).unwrap();
            let net = self.cells[stuck].outputs()[0];
            return Err(NetlistError::CombinationalCycle { net: self.nets[net.0].name.clone() });
        }
        Ok(order)
    }

    /// Structural checks: one driver per net, port widths, cell
    /// parameters, and no combinational cycles.
    pub fn check(&self) -> Result<(), NetlistError> {
        let mut drivers = vec![0usize; self.nets.len()];
        for p in &self.ports {
            if p.dir == PortDir::Input {
                drivers[p.net.0] += 1;
            }
        }
        for cell in &self.cells {
            for o in cell.outputs() {
                drivers[o.0] += 1;
            }
        }
        for (i, &d) in drivers.iter().enumerate() {
            let name = self.nets[i].name.clone();
            match d {
                0 => return Err(NetlistError::Undriven { net: name }),
                1 => {}
                n => return Err(NetlistError::MultipleDrivers { net: name, drivers: n }),
            }
        }
        for cell in &self.cells {
            self.check_cell(cell)?;
        }
        self.comb_order()?;
        Ok(())
    }

    fn expect(&self, net: NetId, width: u32) -> Result<(), NetlistError> {
        let found = self.width(net);
        if found != width {
            return Err(NetlistError::WidthMismatch { net: self.nets[net.0].name.clone(), expected: width, found });
        }
        Ok(())
    }

    fn check_cell(&self, cell: &Cell) -> Result<(), NetlistError> {
        let w = |n: NetId| self.width(n);
        match cell {
            Cell::Comb { op, inputs, output } => {
                let arity = match op {
                    CombOp::Const(_) => 0,
                    CombOp::Buf | CombOp::Not | CombOp::Shl(_) | CombOp::Shr(_) | CombOp::Slice(..) => 1,
                    CombOp::Mux => 3,
                    CombOp::Concat => inputs.len().max(1),
                    _ => 2,
                };
                if inputs.len() != arity {
                    return Err(NetlistError::InvalidCell(format!(
                        "{op:?} driving `{}` has {} inputs",
                        self.nets[output.0].name,
                        inputs.len()
                    )));
                }
                let expected = match op {
                    CombOp::Const(v) => v.width(),
                    CombOp::Buf | CombOp::Not | CombOp::Shl(_) | CombOp::Shr(_) => w(inputs[0]),
                    CombOp::Add | CombOp::Sub | CombOp::Xor | CombOp::And | CombOp::Or => {
                        w(inputs[0]).max(w(inputs[1]))
                    }
                    CombOp::Mul => w(inputs[0]) + w(inputs[1]),
                    CombOp::Mux => {
                        self.expect(inputs[0], 1)?;
                        self.expect(inputs[2], w(inputs[1]))?;
                        w(inputs[1])
                    }
                    CombOp::Slice(hi, lo) => {
                        if hi < lo || *hi >= w(inputs[0]) {
                            return Err(NetlistError::InvalidCell(format!("slice [{hi}:{lo}] out of range")));
                        }
                        hi - lo + 1
                    }
                    CombOp::Concat => inputs.iter().map(|&n| w(n)).sum(),
                    CombOp::Eq => 1,
                };
                self.expect(*output, expected)
            }
            Cell::Reg { d, q, enable, init, .. } => {
                self.expect(*q, w(*d))?;
                self.expect(*q, init.width())?;
                if let Some(e) = enable {
                    self.expect(*e, 1)?;
                }
                Ok(())
            }
            Cell::ShiftReg { d, q, depth, enable } => {
                if *depth < 2 {
                    return Err(NetlistError::InvalidCell(format!("shift register of depth {depth}")));
                }
                if let Some(e) = enable {
                    self.expect(*e, 1)?;
                }
                self.expect(*q, w(*d))
            }
            Cell::Fifo { din, dout, write_enable, read_enable, full, empty, depth } => {
                if *depth < 2 {
                    return Err(NetlistError::InvalidCell(format!("FIFO of depth {depth}")));
                }
                for n in [write_enable, read_enable, full, empty] {
                    self.expect(*n, 1)?;
                }
                self.expect(*dout, w(*din))
            }
            Cell::Counter { q, init, enable } => {
                if *init < 1 {
                    return Err(NetlistError::InvalidCell("counter starting at 0".to_string()));
                }
                if let Some(e) = enable {
                    self.expect(*e, 1)?;
                }
                if Bits::exceeds(*init, w(*q)) {
                    return Err(NetlistError::InvalidCell(format!("counter init {init} does not fit")));
                }
                Ok(())
            }
        }
    }

    /// Replaces the first arithmetic or logic operator with a different
    /// one of the same width. Used to check that verification catches
    /// broken circuits. Returns the affected net.
    pub fn inject_fault(&mut self) -> Option<String> {
        for cell in &mut self.cells {
            if let Cell::Comb { op, output, .. } = cell {
                let swapped = match op {
                    CombOp::Add => CombOp::Sub,
                    CombOp::Sub => CombOp::Add,
                    CombOp::Xor => CombOp::Or,
                    CombOp::Or => CombOp::Xor,
                    CombOp::And => CombOp::Xor,
                    _ => continue,
                };
                *op = swapped;
                return Some(self.nets[output.0].name.clone());
            }
        }
        None
    }
}

/// Bits needed to hold `value`.
pub(crate) fn bits_for(value: u64) -> u32 {
    (64 - value.leading_zeros()).max(1)
}
