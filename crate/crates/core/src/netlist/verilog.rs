use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use super::{bits_for, Cell, CombOp, Driver, Netlist, NetId, PortDir};
use crate::bits::Bits;
use crate::resolve::{PrimitivePolicy, ShiftregMode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub enum ShregAttr {
    /// Chains are plain registers; shift registers are inline arrays.
    #[default]
    None,
    /// Every chain register carries `(* shreg_extract = "no" *)`.
    NoExtract,
    /// Shift registers are instances of a dedicated helper module.
    ExplicitSrl,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmitOptions {
    pub shreg_attr: ShregAttr,
    pub header: Option<String>,
}

impl EmitOptions {
    pub fn for_policy(policy: &PrimitivePolicy) -> Self {
        let shreg_attr = match policy.shiftreg {
            ShiftregMode::Auto => ShregAttr::None,
            ShiftregMode::ForceReg => ShregAttr::NoExtract,
            ShiftregMode::ForceSrl => ShregAttr::ExplicitSrl,
        };
        EmitOptions { shreg_attr, header: None }
    }
}

const NO_EXTRACT: &str = "(* shreg_extract = \"no\" *)";

fn range(width: u32) -> String {
    if width == 1 {
        String::new()
    } else {
        format!("[{}:0] ", width - 1)
    }
}

fn literal(v: &Bits) -> String {
    format!("{}'h{}", v.width(), v.to_hex())
}

/// Verilog-2001 text for `netlist`: the circuit module followed by one
/// helper module per FIFO shape (and per shift-register shape when
/// requested). Output is a pure function of its inputs.
pub fn emit_verilog(netlist: &Netlist, options: &EmitOptions) -> String {
    let mut out = String::new();
    if let Some(h) = &options.header {
        for line in h.lines() {
            let _ = writeln!(out, "// {line}");
        }
        out.push('\n');
    }
    let name = |id: NetId| netlist.net(id).name.as_str();

    let _ = writeln!(out, "module {} (", netlist.name);
    let mut decls = vec!["    input  wire clk".to_string()];
    for p in &netlist.ports {
        let dir = match p.dir {
            PortDir::Input => "input  wire",
            PortDir::Output => "output wire",
        };
        decls.push(format!("    {dir} {}{}", range(netlist.width(p.net)), p.name));
    }
    let _ = writeln!(out, "{}\n);", decls.join(",\n"));

    let port_nets: BTreeSet<usize> = netlist.ports.iter().map(|p| p.net.0).collect();
    let mut body = String::new();
    let mut srl_shapes: BTreeSet<(u32, u64)> = BTreeSet::new();
    let mut fifo_shapes: BTreeSet<(u32, u64)> = BTreeSet::new();

    // declarations
    for (i, net) in netlist.nets.iter().enumerate() {
        if port_nets.contains(&i) {
            continue;
        }
        let kind = match net.driver {
            Some(Driver::Cell(c)) => match &netlist.cells[c.0] {
                Cell::Reg { no_extract, .. } => {
                    let attr = *no_extract || options.shreg_attr == ShregAttr::NoExtract && is_chain_reg(netlist, c.0);
                    if attr {
                        format!("{NO_EXTRACT} reg ")
                    } else {
                        "reg  ".to_string()
                    }
                }
                Cell::Counter { .. } => "reg  ".to_string(),
                _ => "wire ".to_string(),
            },
            _ => "wire ".to_string(),
        };
        let _ = writeln!(out, "    {kind}{}{};", range(net.width), net.name);
    }
    out.push('\n');

    for (ci, cell) in netlist.cells.iter().enumerate() {
        match cell {
            Cell::Comb { op, inputs, output } => {
                let a = |k: usize| name(inputs[k]);
                let rhs = match op {
                    CombOp::Const(v) => literal(v),
                    CombOp::Buf => a(0).to_string(),
                    CombOp::Add => format!("{} + {}", a(0), a(1)),
                    CombOp::Sub => format!("{} - {}", a(0), a(1)),
                    CombOp::Mul => format!("{} * {}", a(0), a(1)),
                    CombOp::Xor => format!("{} ^ {}", a(0), a(1)),
                    CombOp::And => format!("{} & {}", a(0), a(1)),
                    CombOp::Or => format!("{} | {}", a(0), a(1)),
                    CombOp::Not => format!("~{}", a(0)),
                    CombOp::Shl(k) => format!("{} << {k}", a(0)),
                    CombOp::Shr(k) => format!("{} >> {k}", a(0)),
                    CombOp::Mux => format!("{} ? {} : {}", a(0), a(1), a(2)),
                    CombOp::Slice(hi, lo) if netlist.width(inputs[0]) == 1 => {
                        debug_assert_eq!((*hi, *lo), (0, 0));
                        a(0).to_string()
                    }
                    CombOp::Slice(hi, lo) if hi == lo => format!("{}[{hi}]", a(0)),
                    CombOp::Slice(hi, lo) => format!("{}[{hi}:{lo}]", a(0)),
                    CombOp::Concat => {
                        format!("{{{}}}", inputs.iter().map(|&n| name(n)).collect::<Vec<_>>().join(", "))
                    }
                    CombOp::Eq => format!("{} == {}", a(0), a(1)),
                };
                let _ = writeln!(body, "    assign {} = {rhs};", name(*output));
            }
            Cell::Reg { d, q, enable, init, .. } => {
                let _ = writeln!(body, "    always @(posedge clk) begin");
                let _ = writeln!(body, "        if (rst) {} <= {};", name(*q), literal(init));
                match enable {
                    Some(e) => {
                        let _ = writeln!(body, "        else if ({}) {} <= {};", name(*e), name(*q), name(*d));
                    }
                    None => {
                        let _ = writeln!(body, "        else {} <= {};", name(*q), name(*d));
                    }
                }
                let _ = writeln!(body, "    end");
            }
            Cell::Counter { q, init, enable } => {
                let w = netlist.width(*q);
                let guard = match enable {
                    Some(e) => format!("{} && ", name(*e)),
                    None => String::new(),
                };
                let _ = writeln!(body, "    always @(posedge clk) begin");
                let _ = writeln!(body, "        if (rst) {} <= {w}'d{init};", name(*q));
                let _ = writeln!(body, "        else if ({guard}{} != {w}'d0) {} <= {} - {w}'d1;", name(*q), name(*q), name(*q));
                let _ = writeln!(body, "    end");
            }
            Cell::ShiftReg { d, q, depth, enable } => {
                let w = netlist.width(*d);
                let en = enable.map(|e| name(e).to_string()).unwrap_or_else(|| "1'b1".to_string());
                if options.shreg_attr == ShregAttr::ExplicitSrl {
                    srl_shapes.insert((w, *depth));
                    let _ = writeln!(
                        body,
                        "    pf_shiftreg_w{w}_d{depth} u_srl_{ci} (.clk(clk), .en({en}), .d({}), .q({}));",
                        name(*d),
                        name(*q)
                    );
                } else {
                    let arr = format!("{}__stages", name(*q));
                    let _ = writeln!(body, "    reg {}{arr} [0:{}];", range(w), depth - 1);
                    let _ = writeln!(body, "    integer {arr}_i;");
                    let _ = writeln!(body, "    initial for ({arr}_i = 0; {arr}_i < {depth}; {arr}_i = {arr}_i + 1) {arr}[{arr}_i] = {w}'h0;");
                    let _ = writeln!(body, "    always @(posedge clk) begin");
                    let _ = writeln!(body, "        if ({en}) begin");
                    let _ = writeln!(body, "            {arr}[0] <= {};", name(*d));
                    let _ = writeln!(
                        body,
                        "            for ({arr}_i = 1; {arr}_i < {depth}; {arr}_i = {arr}_i + 1) {arr}[{arr}_i] <= {arr}[{arr}_i - 1];"
                    );
                    let _ = writeln!(body, "        end");
                    let _ = writeln!(body, "    end");
                    let _ = writeln!(body, "    assign {} = {arr}[{}];", name(*q), depth - 1);
                }
            }
            Cell::Fifo { din, dout, write_enable, read_enable, full, empty, depth } => {
                let w = netlist.width(*din);
                fifo_shapes.insert((w, *depth));
                let _ = writeln!(
                    body,
                    "    pf_fifo_w{w}_d{depth} u_fifo_{ci} (.clk(clk), .rst(rst), .we({}), .re({}), .din({}), .dout({}), .full({}), .empty({}));",
                    name(*write_enable),
                    name(*read_enable),
                    name(*din),
                    name(*dout),
                    name(*full),
                    name(*empty)
                );
            }
        }
    }
    out.push_str(&body);
    out.push_str("endmodule\n");

    for (w, d) in srl_shapes {
        out.push('\n');
        out.push_str(&shiftreg_module(w, d));
    }
    for (w, d) in fifo_shapes {
        out.push('\n');
        out.push_str(&fifo_module(w, d));
    }
    out
}

fn is_chain_reg(netlist: &Netlist, cell: usize) -> bool {
    // a register whose input or output is another register
    let Cell::Reg { d, q, .. } = &netlist.cells[cell] else { return false };
    let driven_by_reg = matches!(
        netlist.net(*d).driver,
        Some(Driver::Cell(c)) if matches!(netlist.cells[c.0], Cell::Reg { .. })
    );
    let feeds_reg = netlist.cells.iter().any(|c| matches!(c, Cell::Reg { d, .. } if d == q));
    driven_by_reg || feeds_reg
}

fn shiftreg_module(w: u32, d: u64) -> String {
    let r = range(w);
    format!(
        "module pf_shiftreg_w{w}_d{d} (
    input  wire clk,
    input  wire en,
    input  wire {r}d,
    output wire {r}q
);
    reg {r}stages [0:{last}];
    integer i;
    initial for (i = 0; i < {d}; i = i + 1) stages[i] = {w}'h0;
    always @(posedge clk) begin
        if (en) begin
            stages[0] <= d;
            for (i = 1; i < {d}; i = i + 1) stages[i] <= stages[i - 1];
        end
    end
    assign q = stages[{last}];
endmodule
",
        last = d - 1
    )
}

fn fifo_module(w: u32, d: u64) -> String {
    let r = range(w);
    let pw = bits_for(d - 1);
    let cw = bits_for(d);
    format!(
        "module pf_fifo_w{w}_d{d} (
    input  wire clk,
    input  wire rst,
    input  wire we,
    input  wire re,
    input  wire {r}din,
    output reg  {r}dout,
    output wire full,
    output wire empty
);
    reg {r}mem [0:{last}];
    reg {pr}wptr;
    reg {pr}rptr;
    reg {cr}count;
    wire do_write = we && !full;
    wire do_read = re && !empty;
    assign full = count == {cw}'d{d};
    assign empty = count == {cw}'d0;
    always @(posedge clk) begin
        if (rst) begin
            wptr <= {pw}'d0;
            rptr <= {pw}'d0;
            count <= {cw}'d0;
            dout <= {w}'h0;
        end else begin
            if (do_write) begin
                mem[wptr] <= din;
                wptr <= (wptr == {pw}'d{last}) ? {pw}'d0 : wptr + {pw}'d1;
            end
            if (do_read) begin
                dout <= mem[rptr];
                rptr <= (rptr == {pw}'d{last}) ? {pw}'d0 : rptr + {pw}'d1;
            end
            if (do_write && !do_read) count <= count + {cw}'d1;
            else if (do_read && !do_write) count <= count - {cw}'d1;
        end
    end
endmodule
",
        last = d - 1,
        pr = range(pw),
        cr = range(cw),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::netlist::lower;
    use crate::protocol::{apply_protocol, Protocol};
    use crate::resolve::{resolve, Strategy};

    fn netlist(policy: PrimitivePolicy, protocol: Protocol) -> Netlist {
        let g = resolve(&fixtures::running_example_delay().build().unwrap(), &Strategy::DirectBackward(policy)).unwrap();
        let plan = apply_protocol(&g, protocol).unwrap();
        lower(&g, &plan, &policy).unwrap()
    }

    #[test]
    fn emission_is_deterministic() {
        let p = PrimitivePolicy::fifo(3, 3).unwrap();
        let a = emit_verilog(&netlist(p, Protocol::ReadyValid), &EmitOptions::for_policy(&p));
        let b = emit_verilog(&netlist(p, Protocol::ReadyValid), &EmitOptions::for_policy(&p));
        assert_eq!(a, b);
        assert!(a.contains("module pf_fifo_w4_d4"));
        assert!(a.contains("input  wire in_valid"));
    }

    #[test]
    fn force_reg_carries_attribute() {
        let p = PrimitivePolicy::chains(ShiftregMode::ForceReg);
        let v = emit_verilog(&netlist(p, Protocol::Raw), &EmitOptions::for_policy(&p));
        assert!(v.contains("(* shreg_extract = \"no\" *)"));
        let auto = PrimitivePolicy::auto();
        let v = emit_verilog(&netlist(auto, Protocol::Raw), &EmitOptions::for_policy(&auto));
        assert!(!v.contains("shreg_extract"));
    }

    #[test]
    fn force_srl_instantiates_helper() {
        let p = PrimitivePolicy::chains(ShiftregMode::ForceSrl);
        let v = emit_verilog(&netlist(p, Protocol::Raw), &EmitOptions::for_policy(&p));
        assert!(v.contains("module pf_shiftreg_w4_d4"));
        assert!(v.contains("pf_shiftreg_w4_d4 u_srl_"));
    }
}
