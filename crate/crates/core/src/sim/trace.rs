use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::Serialize;

use crate::bits::Bits;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TraceColumn {
    pub name: String,
    pub width: u32,
}

/// One completed handshake: the data port values at the accepting cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub cycle: usize,
    pub values: IndexMap<String, Bits>,
}

/// Per-cycle samples taken after combinational settle, before the clock
/// edge. Ports come first in declaration order, then probed nets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub name: String,
    pub reset_cycles: usize,
    pub columns: Vec<TraceColumn>,
    pub rows: Vec<Vec<Bits>>,
    pub accepted_inputs: Vec<Transaction>,
    pub accepted_outputs: Vec<Transaction>,
}

fn vcd_id(mut i: usize) -> String {
    let mut id = String::new();
    loop {
        id.push((b'!' + (i % 94) as u8) as char);
        i /= 94;
        if i == 0 {
            return id;
        }
    }
}

fn vcd_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn value(&self, cycle: usize, name: &str) -> Option<&Bits> {
        self.rows.get(cycle)?.get(self.column(name)?)
    }

    pub fn series(&self, name: &str) -> Option<Vec<&Bits>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| &r[c]).collect())
    }

    /// Value-change dump with one time unit per cycle and a synthetic clock.
    pub fn to_vcd(&self) -> String {
        let mut out = String::new();
        out.push_str("$timescale 1ns $end\n");
        let _ = writeln!(out, "$scope module {} $end", vcd_name(&self.name));
        let clk = vcd_id(self.columns.len());
        let _ = writeln!(out, "$var wire 1 {clk} clk $end");
        for (i, c) in self.columns.iter().enumerate() {
            let _ = writeln!(out, "$var wire {} {} {} $end", c.width, vcd_id(i), vcd_name(&c.name));
        }
        out.push_str("$upscope $end\n$enddefinitions $end\n");
        let mut last: Option<&Vec<Bits>> = None;
        for (t, row) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "#{}", 10 * t);
            let _ = writeln!(out, "0{clk}");
            for (i, v) in row.iter().enumerate() {
                if last.is_some_and(|prev| prev[i] == *v) {
                    continue;
                }
                if self.columns[i].width == 1 {
                    let _ = writeln!(out, "{}{}", v.to_binary(), vcd_id(i));
                } else {
                    let _ = writeln!(out, "b{} {}", v.to_binary(), vcd_id(i));
                }
            }
            let _ = writeln!(out, "#{}", 10 * t + 5);
            let _ = writeln!(out, "1{clk}");
            last = Some(row);
        }
        let _ = writeln!(out, "#{}", 10 * self.rows.len());
        out
    }

    /// Comma-separated samples in hexadecimal, one row per cycle.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cycle");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (t, row) in self.rows.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_hex());
            }
            out.push('\n');
        }
        out
    }
}
