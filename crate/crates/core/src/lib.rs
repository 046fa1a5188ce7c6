//! Pipeline elaboration: record an explicitly scheduled pipeline, build its
//! synchronization graph, resolve the omitted signal propagations, lower
//! to a netlist, emit Verilog and DOT, and check the result by simulation.

pub mod bits;
pub mod explore;
pub mod fixtures;
pub mod flow;
pub mod model;
pub mod netlist;
pub mod protocol;
pub mod resolve;
pub mod sim;
pub mod spec_file;
